#include "shnn/experiment.hpp"

#include <fstream>
#include <map>
#include <ostream>
#include <sstream>

#include <json.hpp>

#include "shnn/dataset.hpp"
#include "shnn/error.hpp"
#include "shnn/format.hpp"
#include "shnn/training.hpp"

namespace shnn {

namespace fs = std::filesystem;
using nlohmann::ordered_json;

namespace {

template <class F>
auto stage(const std::string& name, F&& f) {
  try {
    return f();
  } catch (const StageError&) {
    throw;
  } catch (const std::exception& e) {
    throw StageError(name, e);
  }
}

std::ofstream open_out(const fs::path& path) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw IoError("cannot open " + path.string() + " for writing");
  return out;
}

std::string cell_tag(Scheme s, double h, std::uint64_t seed) {
  return std::string(to_string(s)) + "_h" + fmt_double(h) + "_seed" + std::to_string(seed);
}

bool compatible(Scheme s, Correction c) {
  try {
    check_correction(s, c);
    return true;
  } catch (const InvalidArgument&) {
    return false;
  }
}

bool at_least(double h, double bound) { return h >= bound - 1e-12; }

ordered_json sizes_json(const CellSizes& s) {
  return {{"L", s.depth}, {"M", s.width}, {"K", s.k}, {"epochs", s.epochs}};
}

}  // namespace

CellSizes paper_scale_sizes(const std::string& system, double h) {
  if (system == "double_pendulum") {
    if (at_least(h, 0.2)) return {2, 400, 100000, 5000};
    return {3, 600, 100000, 5000};
  }
  if (system == "spring" || system == "pendulum") {
    if (at_least(h, 0.2)) return {1, 200, 2000, 5000};
    if (at_least(h, 0.1)) return {2, 200, 4000, 5000};
    return {3, 200, 10000, 5000};
  }
  throw InvalidArgument("unknown system '" + system + "'");
}

CellSizes desk_scale_sizes(const std::string& system) {
  if (system == "double_pendulum") return {2, 128, 10000, 2000};
  if (system == "spring" || system == "pendulum") return {1, 64, 512, 2000};
  throw InvalidArgument("unknown system '" + system + "'");
}

CellSizes ExperimentConfig::sizes(double h) const {
  CellSizes s = paper_scale ? paper_scale_sizes(system, h) : desk_scale_sizes(system);
  if (k) s.k = *k;
  if (depth) s.depth = *depth;
  if (width) s.width = *width;
  if (epochs) s.epochs = *epochs;
  return s;
}

double ExperimentConfig::t_final() const {
  if (rollout_t_final) return *rollout_t_final;
  return paper_scale ? 100.0 : 20.0;
}

ExperimentConfig parse_experiment_config(const std::string& json_text) {
  ExperimentConfig c;
  try {
    const auto j = nlohmann::json::parse(json_text);
    if (!j.is_object()) throw FormatError("experiment config must be a JSON object");
    c.system = j.at("system").get<std::string>();
    (void)system_by_id(c.system);
    if (j.contains("schemes")) {
      c.schemes.clear();
      for (const auto& s : j["schemes"]) c.schemes.push_back(parse_scheme(s.get<std::string>()));
    }
    if (j.contains("h")) c.h_values = j["h"].get<std::vector<double>>();
    if (j.contains("seeds")) c.seeds = j["seeds"].get<std::vector<std::uint64_t>>();
    c.data_seed = j.value("data_seed", c.data_seed);
    c.paper_scale = j.value("paper_scale", false);
    if (j.contains("K")) c.k = j["K"].get<int>();
    if (j.contains("L")) c.depth = j["L"].get<int>();
    if (j.contains("M")) c.width = j["M"].get<int>();
    if (j.contains("epochs")) c.epochs = j["epochs"].get<int>();
    if (j.contains("corrections")) {
      c.corrections.clear();
      for (const auto& s : j["corrections"]) {
        c.corrections.push_back(parse_correction(s.get<std::string>()));
      }
    }
    c.eps_samples = j.value("eps_samples", c.eps_samples);
    c.eps_seed = j.value("eps_seed", c.eps_seed);
    if (j.contains("rollout")) {
      const auto& r = j["rollout"];
      c.rollout_traj = r.value("n_traj", c.rollout_traj);
      if (r.contains("t_final")) c.rollout_t_final = r["t_final"].get<double>();
      c.rollout_seed = r.value("seed", c.rollout_seed);
    }
    c.error_grid = j.value("error_grid", 0);
  } catch (const nlohmann::json::exception& e) {
    throw FormatError(std::string("malformed experiment config: ") + e.what());
  }
  if (c.schemes.empty() || c.h_values.empty() || c.seeds.empty() || c.corrections.empty()) {
    throw InvalidArgument("config needs at least one scheme, h, seed and correction");
  }
  for (double h : c.h_values) {
    if (!(h > 0.0)) throw InvalidArgument("every h must be positive");
  }
  if (c.eps_samples < 10) throw InvalidArgument("eps_samples must be at least 10");
  if (c.rollout_traj < 0 || c.error_grid < 0) {
    throw InvalidArgument("rollout n_traj and error_grid must be non-negative");
  }
  return c;
}

ExperimentConfig load_experiment_config(const fs::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw IoError("cannot open " + path.string());
  std::stringstream ss;
  ss << in.rdbuf();
  return parse_experiment_config(ss.str());
}

void write_sidecar(const fs::path& csv, const std::string& json_text) {
  fs::path side = csv;
  side += ".json";
  auto out = open_out(side);
  out << json_text << '\n';
}

ExperimentResult run_experiment(const ExperimentConfig& cfg, const fs::path& out_dir,
                                std::ostream* log) {
  ExperimentResult result;
  const HamiltonianSystem system = stage("setup", [&] {
    fs::create_directories(out_dir);
    return system_by_id(cfg.system);
  });
  auto record = [&](const fs::path& p, const ordered_json& meta) {
    write_sidecar(p, meta.dump(2));
    result.files.push_back(p);
  };

  ordered_json cells = ordered_json::array();
  for (double h : cfg.h_values) {
    cells.push_back({{"h", h}, {"sizes", sizes_json(cfg.sizes(h))}});
  }

  for (double h : cfg.h_values) {
    const CellSizes sizes = cfg.sizes(h);
    const Dataset ds = stage("generate h=" + fmt_double(h), [&] {
      if (log) *log << "generating " << cfg.system << " h=" << h << " K=" << sizes.k << '\n';
      Dataset d = generate_dataset(system, h, sizes.k, cfg.data_seed);
      save_dataset(d, out_dir / ("data_h" + fmt_double(h) + ".csv"));
      return d;
    });
    result.files.push_back(out_dir / ("data_h" + fmt_double(h) + ".csv"));

    for (Scheme scheme : cfg.schemes) {
      for (std::uint64_t seed : cfg.seeds) {
        const std::string tag = cell_tag(scheme, h, seed);
        const TrainResult tr = stage("train " + tag, [&] {
          if (log) *log << "training " << tag << '\n';
          TrainConfig tc;
          tc.scheme = scheme;
          tc.epochs = sizes.epochs;
          tc.seed = seed;
          tc.depth = sizes.depth;
          tc.width = sizes.width;
          return train(ds, tc);
        });
        stage("write " + tag, [&] {
          const fs::path loss_csv = out_dir / ("losses_" + tag + ".csv");
          auto out = open_out(loss_csv);
          write_train_report(out, tr.report);
          out.close();
          record(loss_csv, {{"columns", {"epoch", "train_loss", "test_loss"}},
                            {"system", cfg.system},
                            {"scheme", to_string(scheme)},
                            {"h", h},
                            {"seed", seed},
                            {"sizes", sizes_json(sizes)},
                            {"best_epoch", tr.report.best_epoch},
                            {"best_test_loss", tr.report.best_test_loss}});
          save_model(tr.model, out_dir / ("model_" + tag + ".json"));
          result.files.push_back(out_dir / ("model_" + tag + ".json"));
          return 0;
        });

        for (Correction corr : cfg.corrections) {
          if (!compatible(scheme, corr)) continue;
          LearnedHamiltonian model = tr.model;
          model.correction = corr;
          const std::string ctag = tag + "_" + std::string(to_string(corr));
          const CorrectedField field(model);
          ExperimentRow row{scheme, corr, h, seed, tr.report.best_epoch,
                            tr.report.best_test_loss, {}};
          row.eps = stage("evaluate " + ctag, [&] {
            return epsilon_h(field, system, cfg.eps_samples, cfg.eps_seed);
          });
          if (cfg.rollout_traj > 0) {
            stage("rollout " + ctag, [&] {
              if (log) *log << "rollout " << ctag << '\n';
              RolloutOptions ro;
              ro.n_traj = cfg.rollout_traj;
              ro.t_final = cfg.t_final();
              const RolloutReport rr = rollout_mse(model, system, ro, cfg.rollout_seed);
              const fs::path p = out_dir / ("rollout_" + ctag + ".csv");
              auto out = open_out(p);
              write_rollout_csv(out, rr);
              out.close();
              record(p, {{"columns", {"t", "mse", "sem"}},
                         {"system", cfg.system},
                         {"scheme", to_string(scheme)},
                         {"correction", to_string(corr)},
                         {"h", h},
                         {"seed", seed},
                         {"n_traj", rr.n_traj},
                         {"rejected", rr.rejected},
                         {"energy_threshold", rr.threshold},
                         {"rollout_seed", cfg.rollout_seed}});
              // first trajectory, both fields, for phase comparisons
              const fs::path tp = out_dir / ("trajectory_" + ctag + ".csv");
              auto tout = open_out(tp);
              tout << "t";
              const char* names[] = {"true", "model"};
              for (const char* nm : names) {
                for (int i = 1; i <= system.n; ++i) tout << ",p" << i << '_' << nm;
                for (int i = 1; i <= system.n; ++i) tout << ",q" << i << '_' << nm;
              }
              tout << '\n';
              for (std::size_t t = 0; t < rr.times.size(); ++t) {
                tout << fmt_double(rr.times[t]);
                for (const auto* states : {&rr.true_states[0], &rr.model_states[0]}) {
                  for (Eigen::Index i = 0; i < 2 * system.n; ++i) {
                    tout << ',' << fmt_double((*states)[t](i));
                  }
                }
                tout << '\n';
              }
              tout.close();
              record(tp, {{"description", "first rollout trajectory, true and learned field"},
                          {"scheme", to_string(scheme)},
                          {"correction", to_string(corr)},
                          {"h", h},
                          {"seed", seed}});
              return 0;
            });
          }
          if (cfg.error_grid > 0 && system.n == 1) {
            stage("error grid " + ctag, [&] {
              const fs::path p = out_dir / ("error_grid_" + ctag + ".csv");
              auto out = open_out(p);
              write_error_grid(out, field, system, cfg.error_grid, row.eps.offset);
              out.close();
              record(p, {{"columns", {"p", "q", "error"}},
                         {"description", "F - H - offset over the data region"},
                         {"offset", row.eps.offset},
                         {"scheme", to_string(scheme)},
                         {"correction", to_string(corr)},
                         {"h", h},
                         {"seed", seed}});
              return 0;
            });
          }
          result.rows.push_back(row);
        }
      }
    }
  }

  stage("report", [&] {
    const fs::path summary = out_dir / "summary.csv";
    auto out = open_out(summary);
    out << "system,scheme,correction,h,seed,best_epoch,best_test_loss,eps_mean,eps_q25,"
           "eps_median,eps_q75,eps_sem,eps_n\n";
    for (const auto& r : result.rows) {
      out << cfg.system << ',' << to_string(r.scheme) << ',' << to_string(r.correction) << ','
          << fmt_double(r.h) << ',' << r.seed << ',' << r.best_epoch << ','
          << fmt_double(r.best_test_loss) << ',' << fmt_double(r.eps.mean) << ','
          << fmt_double(r.eps.q25) << ',' << fmt_double(r.eps.median) << ','
          << fmt_double(r.eps.q75) << ',' << fmt_double(r.eps.sem) << ',' << r.eps.n << '\n';
    }
    out.close();
    record(summary, {{"description", "one row per trained model and correction"},
                     {"eps_seed", cfg.eps_seed},
                     {"eps_samples", cfg.eps_samples}});

    // log-log fits over h for every (scheme, correction, seed) series
    std::map<std::tuple<int, int, std::uint64_t>, std::vector<const ExperimentRow*>> series;
    for (const auto& r : result.rows) {
      series[{static_cast<int>(r.scheme), static_cast<int>(r.correction), r.seed}].push_back(&r);
    }
    const fs::path fits = out_dir / "order_fits.csv";
    auto fout = open_out(fits);
    fout << "quantity,scheme,correction,seed,slope,intercept\n";
    for (const auto& [key, rows] : series) {
      if (rows.size() < 3) continue;
      std::vector<double> hs, eps, losses;
      for (const auto* r : rows) {
        hs.push_back(r->h);
        eps.push_back(r->eps.mean);
        losses.push_back(r->best_test_loss);
      }
      const auto& r0 = *rows.front();
      const auto prefix = std::string(to_string(r0.scheme)) + ',' +
                          std::string(to_string(r0.correction)) + ',' +
                          std::to_string(r0.seed) + ',';
      const OrderFit fe = order_fit(hs, eps);
      fout << "eps_h," << prefix << fmt_double(fe.slope) << ',' << fmt_double(fe.intercept)
           << '\n';
      if (r0.correction == Correction::None) {
        const OrderFit fl = order_fit(hs, losses);
        fout << "best_test_loss," << prefix << fmt_double(fl.slope) << ','
             << fmt_double(fl.intercept) << '\n';
      }
    }
    fout.close();
    record(fits, {{"description", "least-squares slope of log(quantity) against log(h)"}});

    ordered_json meta;
    meta["format"] = "shnn-experiment/1";
    meta["system"] = cfg.system;
    meta["paper_scale"] = cfg.paper_scale;
    ordered_json schemes = ordered_json::array();
    for (Scheme s : cfg.schemes) schemes.push_back(to_string(s));
    meta["schemes"] = schemes;
    ordered_json corrs = ordered_json::array();
    for (Correction c : cfg.corrections) corrs.push_back(to_string(c));
    meta["corrections"] = corrs;
    meta["seeds"] = cfg.seeds;
    meta["data_seed"] = cfg.data_seed;
    meta["cells"] = cells;
    meta["eps_samples"] = cfg.eps_samples;
    meta["rollout"] = {{"n_traj", cfg.rollout_traj},
                       {"t_final", cfg.t_final()},
                       {"seed", cfg.rollout_seed}};
    const fs::path mp = out_dir / "metadata.json";
    auto mout = open_out(mp);
    mout << meta.dump(2) << '\n';
    result.files.push_back(mp);
    return 0;
  });
  return result;
}

}  // namespace shnn
