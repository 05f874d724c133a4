#include <doctest.h>

#include <numbers>
#include <sstream>

#include "shnn/error.hpp"
#include "shnn/integrators.hpp"
#include "shnn/systems.hpp"
#include "support.hpp"

using namespace shnn;

namespace {

VectorField field_of(const HamiltonianSystem& s) {
  return [s](const PhaseVector& y) { return s.vector_field(y); };
}

const VectorField zero_field = [](const PhaseVector& y) -> PhaseVector {
  return PhaseVector::Zero(y.size());
};

Eigen::MatrixXd step_jacobian(const std::function<PhaseVector(const PhaseVector&)>& step,
                              const PhaseVector& y) {
  return testing::fd_jacobian(step, y, 1e-6);
}

PhaseVector reference(const HamiltonianSystem& s, const PhaseVector& y0, double t) {
  return rk45_flow(field_of(s), y0, t, {1e-12, 1e-12});
}

}  // namespace

TEST_CASE("forward Euler") {
  const auto s = spring();
  const auto r = forward_euler_step(field_of(s), Eigen::Vector2d(0, 1), 0.1);
  CHECK(r.y_next(0) == doctest::Approx(-0.1));
  CHECK(r.y_next(1) == doctest::Approx(1.0));
  CHECK(r.iterations == 0);
  const Eigen::Vector2d y(0.4, 0.2);
  CHECK(forward_euler_step(zero_field, y, 0.3).y_next == y);

  auto err = [&](double h) {
    return (forward_euler_step(field_of(s), y, h).y_next - exact_flow_spring(y, h)).norm();
  };
  const double ratio = err(0.1) / err(0.05);
  CHECK(ratio >= 3.5);
  CHECK(ratio <= 4.5);
  CHECK_THROWS_AS(forward_euler_step(field_of(s), y, 0.0), InvalidArgument);
}

TEST_CASE("symplectic Euler") {
  const auto s = spring();
  const GradientField g = s.gradient;
  const auto r = symplectic_euler_step(g, Eigen::Vector2d(0, 1), 0.1);
  CHECK(r.y_next(0) == doctest::Approx(-0.1));
  CHECK(r.y_next(1) == doctest::Approx(0.99));
  CHECK(r.converged);
  // separable: the first update already solves the momentum equation
  CHECK(r.residual == 0.0);
  CHECK(r.iterations <= 2);

  const auto pen = pendulum();
  const Eigen::Vector2d y(0.5, 1.0);
  const Eigen::MatrixXd jac = step_jacobian(
      [&](const PhaseVector& x) { return symplectic_euler_step(pen.gradient, x, 0.2).y_next; }, y);
  CHECK(std::abs(jac.determinant() - 1.0) <= 1e-8);
}

TEST_CASE("symplectic Euler on a non-separable Hamiltonian") {
  // H = (1 + q^2) p^2 / 2 couples p and q, so the momentum equation is implicit.
  const GradientField g = [](const PhaseVector& y) -> Eigen::VectorXd {
    return Eigen::Vector2d((1 + y(1) * y(1)) * y(0), y(1) * y(0) * y(0));
  };
  const Eigen::Vector2d y(0.8, 0.6);
  const double h = 0.1;
  const auto r = symplectic_euler_step(g, y, h);
  CHECK(r.converged);
  CHECK(r.iterations > 2);
  const PhaseVector s(Eigen::Vector2d(r.y_next(0), y(1)));
  CHECK(std::abs(r.y_next(0) - (y(0) - h * g(s)(1))) <= 1e-12);
  CHECK(std::abs(r.y_next(1) - (y(1) + h * g(s)(0))) <= 1e-12);
}

TEST_CASE("implicit solvers flag non-convergence") {
  // a stiff linear field outside the contraction range of fixed-point iteration
  const VectorField f = [](const PhaseVector& y) -> PhaseVector { return -50.0 * y; };
  const auto r = implicit_midpoint_step(f, Eigen::Vector2d(1, 1), 0.5, {1e-12, 20});
  CHECK_FALSE(r.converged);
  CHECK(r.iterations == 20);
  CHECK(r.y_next.allFinite());
}

TEST_CASE("implicit midpoint") {
  const Eigen::Vector2d y(0.4, -0.3);
  CHECK(implicit_midpoint_step(zero_field, y, 0.2).y_next == y);

  const auto s = spring();
  const auto r = implicit_midpoint_step(field_of(s), y, 0.3);
  CHECK(r.converged);
  CHECK(std::abs(s.energy(r.y_next) - s.energy(y)) <= 1e-10);

  const auto pen = pendulum();
  const Eigen::Vector2d y0(0.5, 1.0);
  auto err = [&](double h) {
    return (implicit_midpoint_step(field_of(pen), y0, h).y_next - reference(pen, y0, h)).norm();
  };
  const double ratio = err(0.2) / err(0.1);
  CHECK(ratio >= 7.0);
  CHECK(ratio <= 9.0);
}

TEST_CASE("symplecticity at random points") {
  std::mt19937_64 rng(31);
  for (const auto& s : {spring(), pendulum()}) {
    CAPTURE(s.id);
    for (double h : {0.05, 0.2, 0.8}) {
      for (int i = 0; i < 20; ++i) {
        const PhaseVector y(s.data_region.lower.cwiseProduct(testing::random_vector(rng, 2)));
        const Eigen::MatrixXd je = step_jacobian(
            [&](const PhaseVector& x) { return symplectic_euler_step(s.gradient, x, h).y_next; }, y);
        CHECK(std::abs(je.determinant() - 1.0) <= 1e-6);
        const Eigen::MatrixXd jm = step_jacobian(
            [&](const PhaseVector& x) { return implicit_midpoint_step(field_of(s), x, h).y_next; },
            y);
        CHECK(std::abs(jm.determinant() - 1.0) <= 1e-6);
      }
    }
  }
  for (double h : {0.05, 0.2, 0.8}) {
    const Eigen::MatrixXd jf = step_jacobian(
        [&](const PhaseVector& x) { return forward_euler_step(field_of(spring()), x, h).y_next; },
        Eigen::Vector2d(0.3, 0.1));
    CHECK(std::abs(jf.determinant() - (1.0 + h * h)) <= 1e-8);
  }
}

TEST_CASE("local error orders") {
  const auto pen = pendulum();
  const Eigen::Vector2d y0(0.7, -0.4);
  auto ratio = [&](auto step) {
    auto err = [&](double h) { return (step(h) - reference(pen, y0, h)).norm(); };
    return err(0.1) / err(0.05);
  };
  const double fe = ratio([&](double h) { return forward_euler_step(field_of(pen), y0, h).y_next; });
  const double se = ratio([&](double h) { return symplectic_euler_step(pen.gradient, y0, h).y_next; });
  const double mp = ratio([&](double h) { return implicit_midpoint_step(field_of(pen), y0, h).y_next; });
  CHECK(fe == doctest::Approx(4.0).epsilon(0.15));
  CHECK(se == doctest::Approx(4.0).epsilon(0.15));
  CHECK(mp == doctest::Approx(8.0).epsilon(0.15));
}

TEST_CASE("Dormand-Prince") {
  const auto s = spring();
  const PhaseVector y = rk45_flow(field_of(s), Eigen::Vector2d(0, 1), std::numbers::pi / 2);
  CHECK((y - Eigen::Vector2d(-1, 0)).norm() <= 1e-8);

  const std::vector<double> times{0.0, 0.5, 1.0, 2.0};
  const Trajectory still = rk45_integrate(zero_field, Eigen::Vector2d(0.1, 0.2), times);
  for (const auto& st : still.states) CHECK(st == Eigen::Vector2d(0.1, 0.2));

  const auto pen = pendulum();
  const Eigen::Vector2d p0(1.0, 0.5);
  const PhaseVector p10 = rk45_flow(field_of(pen), p0, 10.0);
  CHECK(std::abs(pen.energy(p10) - pen.energy(p0)) <= 1e-7);

  const Trajectory traj = rk45_integrate(field_of(s), Eigen::Vector2d(0.2, 0.4), times);
  REQUIRE(traj.states.size() == times.size());
  for (std::size_t i = 0; i < times.size(); ++i) {
    CHECK((traj.states[i] - exact_flow_spring(Eigen::Vector2d(0.2, 0.4), times[i])).norm() <= 1e-8);
  }
  // deterministic
  const Trajectory again = rk45_integrate(field_of(s), Eigen::Vector2d(0.2, 0.4), times);
  for (std::size_t i = 0; i < times.size(); ++i) CHECK(again.states[i] == traj.states[i]);
}

TEST_CASE("Dormand-Prince failure modes") {
  const VectorField blowup = [](const PhaseVector& y) -> PhaseVector {
    return y.array().square().matrix() * 1e3;
  };
  CHECK_THROWS_AS(rk45_flow(blowup, Eigen::Vector2d(1, 1), 10.0), IntegrationFailure);
  const std::vector<double> bad{1.0, 0.5};
  CHECK_THROWS_AS(rk45_integrate(zero_field, Eigen::Vector2d(0, 0), bad), InvalidArgument);
}

TEST_CASE("uniform times and trajectory CSV") {
  const auto t = uniform_times(1.0, 0.25);
  REQUIRE(t.size() == 5);
  CHECK(t.back() == doctest::Approx(1.0));
  const Trajectory traj = rk45_integrate(field_of(spring()), Eigen::Vector2d(1, 0), t);
  std::ostringstream os;
  write_trajectory_csv(os, traj);
  const std::string csv = os.str();
  CHECK(csv.rfind("t,p_1,q_1\n", 0) == 0);
  CHECK(std::count(csv.begin(), csv.end(), '\n') == 6);
}
