#pragma once

#include <cstdint>
#include <filesystem>
#include <optional>
#include <string>
#include <string_view>

#include "shnn/dataset.hpp"
#include "shnn/mlp.hpp"

namespace shnn {

/// Where the learned field is evaluated inside the loss.
enum class Scheme { ForwardEuler, SymplecticEuler, ImplicitMidpoint };

std::string_view to_string(Scheme s);
/// Accepts "forward-euler", "symplectic-euler", "implicit-midpoint".
Scheme parse_scheme(std::string_view name);

/// y0, (p1, q0) or (y0 + y1) / 2.
PhaseVector scheme_point(Scheme scheme, const DataPair& pair);

/// Post-training series correction applied when the model is evaluated.
enum class Correction { None, SeOrder2, SeOrder3, MpOrder4 };

std::string_view to_string(Correction c);
Correction parse_correction(std::string_view name);
/// Maps the CLI order flag: 0 -> none, 2/3 -> symplectic Euler, 4 -> midpoint.
Correction correction_for_order(int order);
/// Throws InvalidArgument if `c` cannot be applied to a model trained with `s`.
void check_correction(Scheme s, Correction c);

struct LearnedHamiltonian {
  MlpParams params;
  Scheme scheme = Scheme::SymplecticEuler;
  double h = 0.0;
  Correction correction = Correction::None;
  std::string system;  // id of the system the data came from
  std::uint64_t seed = 0;
  int best_epoch = -1;
  double best_test_loss = 0.0;
};

// Model file: a single JSON object
//   {"format": "shnn-model/1", "n_dim", "L", "M", "scheme", "h", "seed",
//    "correction", "system", "best_epoch", "best_test_loss",
//    "param_encoding": "f64le-base64", "params": "<base64>"}
// where params is the flat little-endian float64 blob of MlpParams in layer
// order W_1, b_1, ..., W_out, b_out, each matrix column-major.
std::string model_to_json(const LearnedHamiltonian& model);
LearnedHamiltonian model_from_json(std::string_view text);
void save_model(const LearnedHamiltonian& model, const std::filesystem::path& path);
LearnedHamiltonian load_model(const std::filesystem::path& path);

}  // namespace shnn
