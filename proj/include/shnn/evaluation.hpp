#pragma once

#include <cstdint>
#include <iosfwd>
#include <span>
#include <string>
#include <vector>

#include "shnn/correction.hpp"
#include "shnn/integrators.hpp"
#include "shnn/systems.hpp"

namespace shnn {

/// The measurement box: same center as the data region, sides divided by sqrt(2).
Box measure_region(const HamiltonianSystem& system);

/// Summary statistics of |d_i - mean(d)| with d_i = F(y_i) - H(y_i).
struct EvalReport {
  double mean = 0.0;  // epsilon_H
  double q25 = 0.0;
  double median = 0.0;
  double q75 = 0.0;
  double sem = 0.0;
  double offset = 0.0;  // mean(d)
  int n = 0;
  std::uint64_t seed = 0;
  std::string system;
};

/// N uniform samples from the measurement box (N >= 10).
EvalReport epsilon_h(const ScalarField& f, const HamiltonianSystem& system, int n_samples,
                     std::uint64_t seed);

/// Minimum of H over the boundary of the data region, by grid search:
/// 10001 points per face for one degree of freedom, 33 per axis otherwise. Odd
/// counts put a grid point at the center of every face.
double energy_gate_threshold(const HamiltonianSystem& system);

struct RolloutOptions {
  int n_traj = 50;
  double t_final = 20.0;
  double dt = 0.0;  // sampling interval; 0 means the model's h
  double tolerance = 1e-9;
};

struct RolloutReport {
  std::vector<double> times;
  std::vector<double> mse;  // mean over trajectories of ||y_model - y_true||^2
  std::vector<double> sem;
  int n_traj = 0;
  int rejected = 0;
  double threshold = 0.0;
  /// Per-trajectory states, [trajectory][time], for the true and learned fields.
  std::vector<std::vector<PhaseVector>> true_states;
  std::vector<std::vector<PhaseVector>> model_states;
};

/// Initial points are drawn from the measurement box; points whose energy
/// reaches the gate threshold are rejected. Both fields are integrated with
/// Dormand-Prince. Throws DegenerateInput if more than 90% of draws are rejected.
RolloutReport rollout_mse(const ScalarField& model_field, const HamiltonianSystem& system,
                          double dt, const RolloutOptions& opts, std::uint64_t seed);
RolloutReport rollout_mse(const LearnedHamiltonian& model, const HamiltonianSystem& system,
                          const RolloutOptions& opts, std::uint64_t seed);

void write_rollout_csv(std::ostream& os, const RolloutReport& report);

struct OrderFit {
  double slope = 0.0;
  double intercept = 0.0;  // of log(eps) against log(h)
};

/// Least-squares line through (log h, log eps). Needs >= 3 positive points.
OrderFit order_fit(std::span<const double> h_values, std::span<const double> eps_values);

/// Log-log slope of the best test losses against h.
double plateau_check(std::span<const double> h_values, std::span<const double> best_losses);

/// Grid CSV (p, q, F - H - offset) over the data region for one degree of freedom.
void write_error_grid(std::ostream& os, const ScalarField& f, const HamiltonianSystem& system,
                      int resolution, double offset);

}  // namespace shnn
