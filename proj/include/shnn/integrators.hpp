#pragma once

#include <functional>
#include <iosfwd>
#include <span>
#include <vector>

#include <Eigen/Dense>

#include "shnn/mlp.hpp"

namespace shnn {

/// y -> f(y), typically J^{-1} grad H.
using VectorField = std::function<PhaseVector(const PhaseVector&)>;
/// y -> grad H(y).
using GradientField = std::function<Eigen::VectorXd(const PhaseVector&)>;

struct StepResult {
  PhaseVector y_next;
  int iterations = 0;  // fixed-point evaluations; 0 for explicit steps
  bool converged = true;
  double residual = 0.0;
};

struct ImplicitOptions {
  double tol = 1e-12;
  int max_iter = 100;
};

StepResult forward_euler_step(const VectorField& f, const PhaseVector& y, double h);

/// p1 = p0 - h grad_q H(p1, q0), q1 = q0 + h grad_p H(p1, q0). The implicit
/// momentum equation is solved by fixed-point iteration, switching to damped
/// updates if the residual grows.
StepResult symplectic_euler_step(const GradientField& grad_h, const PhaseVector& y,
                                 double h, ImplicitOptions opts = {});

/// y1 = y0 + h f((y0 + y1) / 2), solved by fixed-point iteration.
StepResult implicit_midpoint_step(const VectorField& f, const PhaseVector& y, double h,
                                  ImplicitOptions opts = {});

struct Rk45Options {
  double rtol = 1e-10;
  double atol = 1e-10;
  double min_step = 1e-14;
  long max_steps = 10'000'000;
};

struct Trajectory {
  std::vector<double> times;
  std::vector<PhaseVector> states;
  long accepted_steps = 0;
  long rejected_steps = 0;
};

/// Adaptive Dormand-Prince 5(4). Steps are shortened to land exactly on each
/// requested sample time; `sample_times` must be non-decreasing and >= 0.
Trajectory rk45_integrate(const VectorField& f, const PhaseVector& y0,
                          std::span<const double> sample_times, Rk45Options opts = {});

/// State at t_final (> 0).
PhaseVector rk45_flow(const VectorField& f, const PhaseVector& y0, double t_final,
                      Rk45Options opts = {});

/// Uniform grid 0, dt, 2dt, ... up to and including t_final (within rounding).
std::vector<double> uniform_times(double t_final, double dt);

/// CSV with columns t, p_1..p_n, q_1..q_n.
void write_trajectory_csv(std::ostream& os, const Trajectory& traj);

}  // namespace shnn
