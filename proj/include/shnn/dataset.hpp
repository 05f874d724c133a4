#pragma once

#include <cstdint>
#include <filesystem>
#include <iosfwd>
#include <optional>
#include <string>
#include <vector>

#include "shnn/systems.hpp"

namespace shnn {

/// An observation (y0, y1 = phi_h(y0)).
struct DataPair {
  PhaseVector y0;
  PhaseVector y1;
};

enum class Split : std::uint8_t { Train = 0, Test = 1 };

struct Dataset {
  std::string system;
  int n = 0;
  double h = 0.0;
  std::uint64_t seed = 0;
  double tolerance = 0.0;  // ground-truth integrator rtol = atol
  std::vector<DataPair> pairs;
  std::vector<Split> split;  // one flag per pair

  [[nodiscard]] int size() const { return static_cast<int>(pairs.size()); }
  [[nodiscard]] std::vector<DataPair> subset(Split which) const;
  [[nodiscard]] std::vector<int> indices(Split which) const;
};

struct GenerateOptions {
  double tolerance = 1e-10;
};

/// Test-set size for K pairs: round(0.2 K), at least 1.
int test_split_size(int k);

/// K pairs with y0 ~ Uniform(data region) and y1 from Dormand-Prince at the
/// given tolerance. Each sample draws from its own stream seeded by
/// (seed, index), so the result is independent of evaluation order.
Dataset generate_dataset(const HamiltonianSystem& system, double h, int k,
                         std::uint64_t seed, GenerateOptions opts = {});

// File layout: a JSON header line, a column-name line, then one CSV row per
// pair: split_flag (0 train, 1 test), p0_*, q0_*, p1_*, q1_*.
void write_dataset(std::ostream& os, const Dataset& ds);
void save_dataset(const Dataset& ds, const std::filesystem::path& path);

/// Parses a dataset; errors name the offending line. When `expected_h` is
/// given it must agree with the header's h.
Dataset read_dataset(std::istream& is, std::optional<double> expected_h = std::nullopt);
Dataset load_dataset(const std::filesystem::path& path,
                     std::optional<double> expected_h = std::nullopt);

}  // namespace shnn
