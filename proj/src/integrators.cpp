#include "shnn/integrators.hpp"

#include <algorithm>
#include <cmath>
#include <ostream>
#include <string>

#include "shnn/error.hpp"
#include "shnn/format.hpp"

namespace shnn {

namespace {

void require_positive_step(double h) {
  if (!(h > 0.0) || !std::isfinite(h)) throw InvalidArgument("time step must be positive");
}

void require_finite(const PhaseVector& y) {
  if (!y.allFinite()) throw DegenerateInput("non-finite state");
}

}  // namespace

StepResult forward_euler_step(const VectorField& f, const PhaseVector& y, double h) {
  require_positive_step(h);
  require_finite(y);
  return {y + h * f(y), 0, true, 0.0};
}

StepResult symplectic_euler_step(const GradientField& grad_h, const PhaseVector& y,
                                 double h, ImplicitOptions opts) {
  require_positive_step(h);
  require_finite(y);
  const Eigen::Index n = y.size() / 2;
  const Eigen::VectorXd p0 = y.head(n);
  const Eigen::VectorXd q0 = y.tail(n);

  PhaseVector z = y;  // z = (p, q0) with p the current iterate
  auto update = [&](const PhaseVector& at) -> Eigen::VectorXd {
    return p0 - h * grad_h(at).tail(n);
  };

  StepResult r;
  double omega = 1.0;
  double prev = std::numeric_limits<double>::infinity();
  Eigen::VectorXd best = z.head(n);
  double best_res = prev;
  r.converged = false;
  for (int it = 0; it < opts.max_iter; ++it) {
    const Eigen::VectorXd target = update(z);
    const double res = (target - z.head(n)).lpNorm<Eigen::Infinity>();
    ++r.iterations;
    if (res < best_res) {
      best_res = res;
      best = z.head(n);
    }
    if (res <= opts.tol) {
      r.converged = true;
      z.head(n) = target;
      best_res = res;
      break;
    }
    if (res > prev) omega = std::max(omega * 0.5, 1.0 / 64.0);
    prev = res;
    z.head(n) = (1.0 - omega) * z.head(n) + omega * target;
  }
  if (!r.converged) z.head(n) = best;
  r.residual = best_res;

  const Eigen::VectorXd g = grad_h(z);
  r.y_next.resize(y.size());
  r.y_next.head(n) = z.head(n);
  r.y_next.tail(n) = q0 + h * g.head(n);
  return r;
}

StepResult implicit_midpoint_step(const VectorField& f, const PhaseVector& y, double h,
                                  ImplicitOptions opts) {
  require_positive_step(h);
  require_finite(y);
  PhaseVector y1 = y + h * f(y);
  StepResult r;
  r.converged = false;
  PhaseVector best = y1;
  double best_res = std::numeric_limits<double>::infinity();
  for (int it = 0; it < opts.max_iter; ++it) {
    const PhaseVector next = y + h * f(0.5 * (y + y1));
    const double res = (next - y1).lpNorm<Eigen::Infinity>();
    ++r.iterations;
    y1 = next;
    if (res < best_res) {
      best_res = res;
      best = y1;
    }
    if (res <= opts.tol) {
      r.converged = true;
      break;
    }
  }
  r.y_next = r.converged ? y1 : best;
  r.residual = best_res;
  return r;
}

// Dormand-Prince 5(4) tableau.
namespace dp {
constexpr double c2 = 1.0 / 5, c3 = 3.0 / 10, c4 = 4.0 / 5, c5 = 8.0 / 9;
constexpr double a21 = 1.0 / 5;
constexpr double a31 = 3.0 / 40, a32 = 9.0 / 40;
constexpr double a41 = 44.0 / 45, a42 = -56.0 / 15, a43 = 32.0 / 9;
constexpr double a51 = 19372.0 / 6561, a52 = -25360.0 / 2187, a53 = 64448.0 / 6561,
                 a54 = -212.0 / 729;
constexpr double a61 = 9017.0 / 3168, a62 = -355.0 / 33, a63 = 46732.0 / 5247,
                 a64 = 49.0 / 176, a65 = -5103.0 / 18656;
constexpr double b1 = 35.0 / 384, b3 = 500.0 / 1113, b4 = 125.0 / 192, b5 = -2187.0 / 6784,
                 b6 = 11.0 / 84;
// fifth-order weights minus embedded fourth-order weights
constexpr double e1 = 71.0 / 57600, e3 = -71.0 / 16695, e4 = 71.0 / 1920,
                 e5 = -17253.0 / 339200, e6 = 22.0 / 525, e7 = -1.0 / 40;
}  // namespace dp

namespace {

double error_norm(const PhaseVector& err, const PhaseVector& y, const PhaseVector& y_new,
                  const Rk45Options& o) {
  const Eigen::ArrayXd scale =
      o.atol + o.rtol * y.array().abs().max(y_new.array().abs());
  return std::sqrt((err.array() / scale).square().mean());
}

// Initial step heuristic from Hairer, Norsett & Wanner (II.4).
double initial_step(const VectorField& f, const PhaseVector& y0, const PhaseVector& f0,
                    double span, const Rk45Options& o) {
  const Eigen::ArrayXd scale = o.atol + o.rtol * y0.array().abs();
  const double d0 = std::sqrt((y0.array() / scale).square().mean());
  const double d1 = std::sqrt((f0.array() / scale).square().mean());
  double h0 = (d0 < 1e-5 || d1 < 1e-5) ? 1e-6 : 0.01 * d0 / d1;
  h0 = std::min(h0, span);
  const PhaseVector y1 = y0 + h0 * f0;
  const PhaseVector f1 = f(y1);
  const double d2 = std::sqrt(((f1 - f0).array() / scale).square().mean()) / h0;
  const double h1 = (d1 <= 1e-15 && d2 <= 1e-15)
                        ? std::max(1e-6, h0 * 1e-3)
                        : std::pow(0.01 / std::max(d1, d2), 1.0 / 5.0);
  return std::min({100.0 * h0, h1, span});
}

}  // namespace

Trajectory rk45_integrate(const VectorField& f, const PhaseVector& y0,
                          std::span<const double> sample_times, Rk45Options opts) {
  require_finite(y0);
  if (!(opts.rtol > 0.0) || !(opts.atol > 0.0)) throw InvalidArgument("tolerances must be positive");
  for (std::size_t i = 0; i < sample_times.size(); ++i) {
    if (!(sample_times[i] >= 0.0) || (i > 0 && sample_times[i] < sample_times[i - 1])) {
      throw InvalidArgument("sample times must be non-negative and non-decreasing");
    }
  }

  Trajectory traj;
  traj.times.assign(sample_times.begin(), sample_times.end());
  traj.states.reserve(sample_times.size());
  if (sample_times.empty()) return traj;

  constexpr double kSafety = 0.9, kMinFactor = 0.2, kMaxFactor = 10.0;
  double t = 0.0;
  PhaseVector y = y0;
  PhaseVector k1 = f(y);
  double h = -1.0;
  const double t_end = sample_times.back();

  std::size_t next = 0;
  while (next < sample_times.size() && sample_times[next] <= t) {
    traj.states.push_back(y);
    ++next;
  }
  if (next < sample_times.size()) h = initial_step(f, y, k1, t_end, opts);

  while (next < sample_times.size()) {
    const double target = sample_times[next];
    bool lands = false;
    double step = h;
    if (t + step >= target) {
      step = target - t;
      lands = true;
    }
    if (step < opts.min_step) {
      if (lands && target - t <= opts.min_step) {
        // sample sits within rounding of the current time
        traj.states.push_back(y);
        ++next;
        continue;
      }
      throw IntegrationFailure("step size underflow at t=" + fmt_double(t));
    }
    if (traj.accepted_steps + traj.rejected_steps >= opts.max_steps) {
      throw IntegrationFailure("maximum number of steps exceeded");
    }

    using namespace dp;
    const PhaseVector k2 = f(y + step * (a21 * k1));
    const PhaseVector k3 = f(y + step * (a31 * k1 + a32 * k2));
    const PhaseVector k4 = f(y + step * (a41 * k1 + a42 * k2 + a43 * k3));
    const PhaseVector k5 = f(y + step * (a51 * k1 + a52 * k2 + a53 * k3 + a54 * k4));
    const PhaseVector k6 =
        f(y + step * (a61 * k1 + a62 * k2 + a63 * k3 + a64 * k4 + a65 * k5));
    const PhaseVector y_new =
        y + step * (b1 * k1 + b3 * k3 + b4 * k4 + b5 * k5 + b6 * k6);
    const PhaseVector k7 = f(y_new);
    const PhaseVector err =
        step * (e1 * k1 + e3 * k3 + e4 * k4 + e5 * k5 + e6 * k6 + e7 * k7);
    const double en = error_norm(err, y, y_new, opts);
    if (!std::isfinite(en)) {
      ++traj.rejected_steps;
      h = step * kMinFactor;
      continue;
    }

    if (en <= 1.0) {
      ++traj.accepted_steps;
      t = lands ? target : t + step;
      y = y_new;
      k1 = k7;
      const double factor =
          en == 0.0 ? kMaxFactor : std::min(kMaxFactor, kSafety * std::pow(en, -0.2));
      // a step shortened to hit a sample does not shrink the next one
      h = lands ? std::max(h, step * factor) : step * factor;
      while (next < sample_times.size() && sample_times[next] <= t) {
        traj.states.push_back(y);
        ++next;
      }
    } else {
      ++traj.rejected_steps;
      h = step * std::max(kMinFactor, kSafety * std::pow(en, -0.2));
    }
  }
  return traj;
}

PhaseVector rk45_flow(const VectorField& f, const PhaseVector& y0, double t_final,
                      Rk45Options opts) {
  if (!(t_final > 0.0)) throw InvalidArgument("t_final must be positive");
  const double times[] = {t_final};
  return rk45_integrate(f, y0, times, opts).states.back();
}

std::vector<double> uniform_times(double t_final, double dt) {
  if (!(dt > 0.0) || !(t_final >= 0.0)) throw InvalidArgument("invalid time grid");
  std::vector<double> times;
  const auto n = static_cast<long>(std::floor(t_final / dt + 1e-9));
  times.reserve(static_cast<std::size_t>(n) + 1);
  for (long i = 0; i <= n; ++i) times.push_back(static_cast<double>(i) * dt);
  return times;
}

void write_trajectory_csv(std::ostream& os, const Trajectory& traj) {
  const Eigen::Index dim = traj.states.empty() ? 0 : traj.states.front().size();
  const Eigen::Index n = dim / 2;
  os << "t";
  for (Eigen::Index i = 1; i <= n; ++i) os << ",p_" << i;
  for (Eigen::Index i = 1; i <= n; ++i) os << ",q_" << i;
  os << '\n';
  for (std::size_t k = 0; k < traj.states.size(); ++k) {
    os << fmt_double(traj.times[k]);
    for (Eigen::Index i = 0; i < dim; ++i) os << ',' << fmt_double(traj.states[k](i));
    os << '\n';
  }
}

}  // namespace shnn
