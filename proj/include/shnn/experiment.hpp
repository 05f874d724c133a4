#pragma once

#include <cstdint>
#include <filesystem>
#include <iosfwd>
#include <optional>
#include <string>
#include <vector>

#include "shnn/evaluation.hpp"
#include "shnn/model.hpp"

namespace shnn {

/// Network and dataset sizes of one training cell.
struct CellSizes {
  int depth = 1;   // L
  int width = 64;  // M
  int k = 512;
  int epochs = 2000;
};

/// Reference sizes used with --paper-scale, keyed by system and h.
CellSizes paper_scale_sizes(const std::string& system, double h);
/// Reduced sizes used by default.
CellSizes desk_scale_sizes(const std::string& system);

// Config file (JSON):
//   {"system": "spring", "schemes": ["symplectic-euler", ...], "h": [0.1, 0.2],
//    "seeds": [0], "data_seed": 1, "paper_scale": false,
//    "K": 512, "L": 1, "M": 64, "epochs": 2000,          (optional overrides)
//    "corrections": ["none", "se_order2", "mp_order4"],   (applied where compatible)
//    "eps_samples": 2000, "eps_seed": 17,
//    "rollout": {"n_traj": 50, "t_final": 20, "seed": 23}, (n_traj 0 skips rollouts)
//    "error_grid": 64}                                      (0 skips; one degree of freedom only)
struct ExperimentConfig {
  std::string system = "spring";
  std::vector<Scheme> schemes{Scheme::SymplecticEuler};
  std::vector<double> h_values{0.1};
  std::vector<std::uint64_t> seeds{0};
  std::uint64_t data_seed = 1;
  bool paper_scale = false;
  std::optional<int> k, depth, width, epochs;
  std::vector<Correction> corrections{Correction::None};
  int eps_samples = 2000;
  std::uint64_t eps_seed = 17;
  int rollout_traj = 50;
  std::optional<double> rollout_t_final;  // 20 by default, 100 with paper_scale
  std::uint64_t rollout_seed = 23;
  int error_grid = 0;

  [[nodiscard]] CellSizes sizes(double h) const;
  [[nodiscard]] double t_final() const;
};

ExperimentConfig parse_experiment_config(const std::string& json_text);
ExperimentConfig load_experiment_config(const std::filesystem::path& path);

struct ExperimentRow {
  Scheme scheme{};
  Correction correction{};
  double h = 0.0;
  std::uint64_t seed = 0;
  int best_epoch = -1;
  double best_test_loss = 0.0;
  EvalReport eps;
};

struct ExperimentResult {
  std::vector<ExperimentRow> rows;
  std::vector<std::filesystem::path> files;  // everything written, in order
};

/// Generates data, trains every (scheme, h, seed) cell, applies the compatible
/// corrections, evaluates epsilon_H and rollouts, and writes CSV files with
/// JSON sidecars into `out_dir`. Failures are rethrown as StageError.
ExperimentResult run_experiment(const ExperimentConfig& cfg,
                                const std::filesystem::path& out_dir,
                                std::ostream* log = nullptr);

/// Writes `<csv>.json` describing a CSV file.
void write_sidecar(const std::filesystem::path& csv, const std::string& json_text);

}  // namespace shnn
