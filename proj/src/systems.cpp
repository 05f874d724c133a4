#include "shnn/systems.hpp"

#include <cmath>
#include <numbers>

#include <boost/math/differentiation/autodiff.hpp>

#include "shnn/error.hpp"

namespace shnn {

namespace {

constexpr double kPi = std::numbers::pi;

void require_dim(const PhaseVector& y, Eigen::Index d, const char* who) {
  if (y.size() != d) {
    throw InvalidArgument(std::string(who) + ": expected state of dimension " +
                          std::to_string(d) + ", got " + std::to_string(y.size()));
  }
}

Box square_box(Eigen::Index dim, double half) {
  return {Eigen::VectorXd::Constant(dim, -half), Eigen::VectorXd::Constant(dim, half)};
}

template <class P1, class P2, class Q1, class Q2>
auto double_pendulum_energy(const P1& p1, const P2& p2, const Q1& q1, const Q2& q2) {
  using std::cos;
  using std::sin;
  const auto c = cos(q1 - q2);
  const auto s = sin(q1 - q2);
  return (0.5 * p1 * p1 + p2 * p2 - p1 * p2 * c) / (1.0 + s * s) - 2.0 * cos(q1) - cos(q2);
}

}  // namespace

bool Box::contains(const Eigen::VectorXd& y) const {
  return y.size() == dim() && (y.array() >= lower.array()).all() &&
         (y.array() <= upper.array()).all();
}

Box Box::shrunk(double factor) const {
  const Eigen::VectorXd c = center();
  const Eigen::VectorXd half = 0.5 * sides() / factor;
  return {c - half, c + half};
}

PhaseVector HamiltonianSystem::vector_field(const PhaseVector& y) const {
  return apply_inverse_symplectic(gradient(y));
}

HamiltonianSystem spring() {
  HamiltonianSystem s;
  s.id = "spring";
  s.n = 1;
  s.energy = [](const PhaseVector& y) {
    require_dim(y, 2, "spring");
    return 0.5 * y(0) * y(0) + 0.5 * y(1) * y(1);
  };
  s.gradient = [](const PhaseVector& y) -> Eigen::VectorXd {
    require_dim(y, 2, "spring");
    return y;
  };
  s.hessian = [](const PhaseVector& y) -> Eigen::MatrixXd {
    require_dim(y, 2, "spring");
    return Eigen::MatrixXd::Identity(2, 2);
  };
  s.data_region = square_box(2, 1.0);
  return s;
}

HamiltonianSystem pendulum() {
  HamiltonianSystem s;
  s.id = "pendulum";
  s.n = 1;
  s.energy = [](const PhaseVector& y) {
    require_dim(y, 2, "pendulum");
    return 0.5 * y(0) * y(0) + (1.0 - std::cos(y(1)));
  };
  s.gradient = [](const PhaseVector& y) -> Eigen::VectorXd {
    require_dim(y, 2, "pendulum");
    return Eigen::Vector2d(y(0), std::sin(y(1)));
  };
  s.hessian = [](const PhaseVector& y) -> Eigen::MatrixXd {
    require_dim(y, 2, "pendulum");
    Eigen::Matrix2d h;
    h << 1.0, 0.0, 0.0, std::cos(y(1));
    return h;
  };
  s.data_region = square_box(2, kPi);
  return s;
}

HamiltonianSystem double_pendulum() {
  HamiltonianSystem s;
  s.id = "double_pendulum";
  s.n = 2;
  s.energy = [](const PhaseVector& y) {
    require_dim(y, 4, "double_pendulum");
    return double_pendulum_energy(y(0), y(1), y(2), y(3));
  };
  s.gradient = [](const PhaseVector& y) -> Eigen::VectorXd {
    require_dim(y, 4, "double_pendulum");
    const double p1 = y(0), p2 = y(1), q1 = y(2), q2 = y(3);
    const double c = std::cos(q1 - q2);
    const double sn = std::sin(q1 - q2);
    const double den = 1.0 + sn * sn;
    const double num = 0.5 * p1 * p1 + p2 * p2 - p1 * p2 * c;
    // derivative of the kinetic term with respect to the angle difference
    const double dk = p1 * p2 * sn / den - num * 2.0 * sn * c / (den * den);
    Eigen::Vector4d g;
    g << (p1 - p2 * c) / den, (2.0 * p2 - p1 * c) / den, dk + 2.0 * std::sin(q1),
        -dk + std::sin(q2);
    return g;
  };
  s.hessian = [](const PhaseVector& y) -> Eigen::MatrixXd {
    require_dim(y, 4, "double_pendulum");
    namespace bad = boost::math::differentiation;
    const auto vars = bad::make_ftuple<double, 2, 2, 2, 2>(y(0), y(1), y(2), y(3));
    const auto h = double_pendulum_energy(std::get<0>(vars), std::get<1>(vars),
                                          std::get<2>(vars), std::get<3>(vars));
    Eigen::Matrix4d m;
    for (int i = 0; i < 4; ++i) {
      for (int j = 0; j < 4; ++j) {
        int order[4] = {0, 0, 0, 0};
        ++order[i];
        ++order[j];
        m(i, j) = h.derivative(order[0], order[1], order[2], order[3]);
      }
    }
    return m;
  };
  s.data_region = square_box(4, kPi);
  return s;
}

HamiltonianSystem system_by_id(std::string_view id) {
  if (id == "spring") return spring();
  if (id == "pendulum") return pendulum();
  if (id == "double_pendulum") return double_pendulum();
  throw InvalidArgument("unknown system '" + std::string(id) +
                        "' (expected spring, pendulum or double_pendulum)");
}

PhaseVector exact_flow_spring(const PhaseVector& y0, double t) {
  require_dim(y0, 2, "exact_flow_spring");
  const double c = std::cos(t);
  const double s = std::sin(t);
  return Eigen::Vector2d(y0(0) * c - y0(1) * s, y0(1) * c + y0(0) * s);
}

}  // namespace shnn
