#include "shnn/evaluation.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <numeric>
#include <ostream>
#include <random>

#include "shnn/error.hpp"
#include "shnn/format.hpp"

namespace shnn {

namespace {

PhaseVector sample_box(const Box& box, std::mt19937_64& rng) {
  PhaseVector y(box.dim());
  for (Eigen::Index i = 0; i < y.size(); ++i) {
    std::uniform_real_distribution<double> u(box.lower(i), box.upper(i));
    y(i) = u(rng);
  }
  return y;
}

// Linear interpolation between order statistics.
double quantile(const std::vector<double>& sorted, double q) {
  const double pos = q * static_cast<double>(sorted.size() - 1);
  const auto lo = static_cast<std::size_t>(std::floor(pos));
  const std::size_t hi = std::min(lo + 1, sorted.size() - 1);
  return sorted[lo] + (pos - static_cast<double>(lo)) * (sorted[hi] - sorted[lo]);
}

double mean_of(const std::vector<double>& v) {
  return std::accumulate(v.begin(), v.end(), 0.0) / static_cast<double>(v.size());
}

double sem_of(const std::vector<double>& v, double mean) {
  if (v.size() < 2) return 0.0;
  double ss = 0.0;
  for (double x : v) ss += (x - mean) * (x - mean);
  return std::sqrt(ss / static_cast<double>(v.size() - 1) / static_cast<double>(v.size()));
}

// Calls visit(y) for grid points on every face of the box.
template <class Visit>
void boundary_grid(const Box& box, int per_axis, Visit&& visit) {
  const Eigen::Index d = box.dim();
  std::vector<int> idx(static_cast<std::size_t>(d - 1), 0);
  PhaseVector y(d);
  for (Eigen::Index face = 0; face < d; ++face) {
    for (int side = 0; side < 2; ++side) {
      std::fill(idx.begin(), idx.end(), 0);
      while (true) {
        Eigen::Index k = 0;
        for (Eigen::Index a = 0; a < d; ++a) {
          if (a == face) {
            y(a) = side == 0 ? box.lower(a) : box.upper(a);
          } else {
            const double t = static_cast<double>(idx[static_cast<std::size_t>(k++)]) /
                             static_cast<double>(per_axis - 1);
            y(a) = box.lower(a) + t * (box.upper(a) - box.lower(a));
          }
        }
        visit(y);
        std::size_t j = 0;
        while (j < idx.size() && ++idx[j] == per_axis) idx[j++] = 0;
        if (j == idx.size()) break;
      }
    }
  }
}

}  // namespace

Box measure_region(const HamiltonianSystem& system) {
  return system.data_region.shrunk(std::sqrt(2.0));
}

EvalReport epsilon_h(const ScalarField& f, const HamiltonianSystem& system, int n_samples,
                     std::uint64_t seed) {
  if (n_samples < 10) throw InvalidArgument("epsilon_H needs at least 10 samples");
  if (f.dim() != 2 * system.n) throw InvalidArgument("field and system dimensions differ");
  const Box box = measure_region(system);
  std::mt19937_64 rng(seed);
  std::vector<double> d(static_cast<std::size_t>(n_samples));
  for (double& di : d) {
    const PhaseVector y = sample_box(box, rng);
    di = f.value(y) - system.energy(y);
    if (!std::isfinite(di)) throw DegenerateInput("non-finite Hamiltonian difference");
  }
  EvalReport r;
  r.offset = mean_of(d);
  for (double& di : d) di = std::abs(di - r.offset);
  r.mean = mean_of(d);
  r.sem = sem_of(d, r.mean);
  std::vector<double> sorted = d;
  std::sort(sorted.begin(), sorted.end());
  r.q25 = quantile(sorted, 0.25);
  r.median = quantile(sorted, 0.5);
  r.q75 = quantile(sorted, 0.75);
  r.n = n_samples;
  r.seed = seed;
  r.system = system.id;
  return r;
}

double energy_gate_threshold(const HamiltonianSystem& system) {
  const int per_axis = system.n == 1 ? 10001 : 33;
  double best = std::numeric_limits<double>::infinity();
  boundary_grid(system.data_region, per_axis,
                [&](const PhaseVector& y) { best = std::min(best, system.energy(y)); });
  return best;
}

RolloutReport rollout_mse(const ScalarField& model_field, const HamiltonianSystem& system,
                          double dt, const RolloutOptions& opts, std::uint64_t seed) {
  if (model_field.dim() != 2 * system.n) {
    throw InvalidArgument("model and system dimensions differ");
  }
  if (opts.n_traj < 1) throw InvalidArgument("need at least one trajectory");
  if (opts.t_final < 0.0) throw InvalidArgument("final time must be non-negative");
  if (!(dt > 0.0)) throw InvalidArgument("sampling interval must be positive");

  RolloutReport rep;
  rep.threshold = energy_gate_threshold(system);
  const Box box = measure_region(system);
  std::mt19937_64 rng(seed);
  std::vector<PhaseVector> starts;
  long draws = 0;
  while (static_cast<int>(starts.size()) < opts.n_traj) {
    if (draws >= 10L * opts.n_traj) {
      throw DegenerateInput("more than 90% of initial points rejected by the energy gate (" +
                            std::to_string(rep.rejected) + " of " + std::to_string(draws) +
                            ")");
    }
    ++draws;
    PhaseVector y = sample_box(box, rng);
    if (system.energy(y) >= rep.threshold) {
      ++rep.rejected;
      continue;
    }
    starts.push_back(std::move(y));
  }

  rep.times = opts.t_final > 0.0 ? uniform_times(opts.t_final, dt) : std::vector<double>{0.0};
  const VectorField truth = [&system](const PhaseVector& y) { return system.vector_field(y); };
  const VectorField learned = [&model_field](const PhaseVector& y) {
    return apply_inverse_symplectic(model_field.gradient(y));
  };
  const Rk45Options ro{opts.tolerance, opts.tolerance};
  const std::size_t nt = rep.times.size();
  std::vector<std::vector<double>> err(nt);
  for (const PhaseVector& y0 : starts) {
    Trajectory a = rk45_integrate(truth, y0, rep.times, ro);
    Trajectory b = rk45_integrate(learned, y0, rep.times, ro);
    for (std::size_t t = 0; t < nt; ++t) err[t].push_back((a.states[t] - b.states[t]).squaredNorm());
    rep.true_states.push_back(std::move(a.states));
    rep.model_states.push_back(std::move(b.states));
  }
  for (std::size_t t = 0; t < nt; ++t) {
    const double m = mean_of(err[t]);
    rep.mse.push_back(m);
    rep.sem.push_back(sem_of(err[t], m));
  }
  rep.n_traj = opts.n_traj;
  return rep;
}

RolloutReport rollout_mse(const LearnedHamiltonian& model, const HamiltonianSystem& system,
                          const RolloutOptions& opts, std::uint64_t seed) {
  const CorrectedField field(model);
  return rollout_mse(field, system, opts.dt > 0.0 ? opts.dt : model.h, opts, seed);
}

void write_rollout_csv(std::ostream& os, const RolloutReport& report) {
  os << "t,mse,sem\n";
  for (std::size_t i = 0; i < report.times.size(); ++i) {
    os << fmt_double(report.times[i]) << ',' << fmt_double(report.mse[i]) << ','
       << fmt_double(report.sem[i]) << '\n';
  }
}

OrderFit order_fit(std::span<const double> h_values, std::span<const double> eps_values) {
  if (h_values.size() != eps_values.size()) throw InvalidArgument("h and eps lengths differ");
  if (h_values.size() < 3) throw InvalidArgument("order fit needs at least 3 points");
  const auto n = static_cast<double>(h_values.size());
  double sx = 0.0, sy = 0.0, sxx = 0.0, sxy = 0.0;
  for (std::size_t i = 0; i < h_values.size(); ++i) {
    if (!(h_values[i] > 0.0) || !(eps_values[i] > 0.0)) {
      throw InvalidArgument("order fit needs strictly positive values");
    }
    const double x = std::log(h_values[i]);
    const double y = std::log(eps_values[i]);
    sx += x;
    sy += y;
    sxx += x * x;
    sxy += x * y;
  }
  const double den = n * sxx - sx * sx;
  if (!(std::abs(den) > 0.0)) throw InvalidArgument("order fit needs distinct h values");
  OrderFit fit;
  fit.slope = (n * sxy - sx * sy) / den;
  fit.intercept = (sy - fit.slope * sx) / n;
  return fit;
}

double plateau_check(std::span<const double> h_values, std::span<const double> best_losses) {
  for (double l : best_losses) {
    if (!(l > 0.0)) throw DegenerateInput("loss plateau fit needs positive losses");
  }
  return order_fit(h_values, best_losses).slope;
}

void write_error_grid(std::ostream& os, const ScalarField& f, const HamiltonianSystem& system,
                      int resolution, double offset) {
  if (system.n != 1) throw UnsupportedOperation("error grid is defined for one degree of freedom");
  if (resolution < 2) throw InvalidArgument("grid resolution must be at least 2");
  const Box& box = system.data_region;
  os << "p,q,error\n";
  PhaseVector y(2);
  for (int i = 0; i < resolution; ++i) {
    for (int j = 0; j < resolution; ++j) {
      y(0) = box.lower(0) + (box.upper(0) - box.lower(0)) * i / (resolution - 1);
      y(1) = box.lower(1) + (box.upper(1) - box.lower(1)) * j / (resolution - 1);
      os << fmt_double(y(0)) << ',' << fmt_double(y(1)) << ','
         << fmt_double(f.value(y) - system.energy(y) - offset) << '\n';
    }
  }
}

}  // namespace shnn
