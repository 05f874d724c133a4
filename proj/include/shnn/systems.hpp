#pragma once

#include <functional>
#include <string>
#include <string_view>

#include <Eigen/Dense>

#include "shnn/mlp.hpp"

namespace shnn {

/// Axis-aligned box in phase space.
struct Box {
  Eigen::VectorXd lower;
  Eigen::VectorXd upper;

  [[nodiscard]] Eigen::Index dim() const { return lower.size(); }
  [[nodiscard]] Eigen::VectorXd center() const { return 0.5 * (lower + upper); }
  [[nodiscard]] Eigen::VectorXd sides() const { return upper - lower; }
  [[nodiscard]] double volume() const { return sides().prod(); }
  [[nodiscard]] bool contains(const Eigen::VectorXd& y) const;
  /// Same center, every side divided by `factor`.
  [[nodiscard]] Box shrunk(double factor) const;
};

struct HamiltonianSystem {
  std::string id;
  int n = 0;  // degrees of freedom; phase space has dimension 2n
  std::function<double(const PhaseVector&)> energy;
  std::function<Eigen::VectorXd(const PhaseVector&)> gradient;
  std::function<Eigen::MatrixXd(const PhaseVector&)> hessian;
  Box data_region;  // region training data is drawn from

  /// J^{-1} grad H.
  [[nodiscard]] PhaseVector vector_field(const PhaseVector& y) const;
};

/// H = p^2/2 + q^2/2 on [-1,1]^2.
HamiltonianSystem spring();
/// H = p^2/2 + (1 - cos q) on [-pi,pi]^2.
HamiltonianSystem pendulum();
/// Two equal masses on equal rigid rods, on [-pi,pi]^4; y = (p1, p2, q1, q2).
HamiltonianSystem double_pendulum();

/// "spring" | "pendulum" | "double_pendulum".
HamiltonianSystem system_by_id(std::string_view id);

/// Exact harmonic-oscillator flow: a rotation of (p, q) by angle t.
PhaseVector exact_flow_spring(const PhaseVector& y0, double t);

}  // namespace shnn
