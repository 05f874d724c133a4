// Command-line front end over the shnn C interface.
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <string>

#include <CLI11.hpp>

#include "shnn/shnn.h"

namespace fs = std::filesystem;

namespace {

struct Globals {
  uint64_t seed = 0;
  bool paper_scale = false;
  std::string out_dir = ".";
};

int fail(shnn_status st) {
  std::cerr << "error (" << shnn_status_string(st) << "): " << shnn_last_error() << '\n';
  return static_cast<int>(st) + 1;
}

std::string resolve(const Globals& g, const std::string& path) {
  const fs::path p(path);
  if (p.is_absolute()) return p.string();
  fs::create_directories(fs::path(g.out_dir));
  const fs::path full = fs::path(g.out_dir) / p;
  if (full.has_parent_path()) fs::create_directories(full.parent_path());
  return full.string();
}

int cmd_generate(const Globals& g, const std::string& system, double h, int k,
                 const std::string& out) {
  int depth = 0, width = 0, epochs = 0, default_k = 0;
  if (k <= 0) {
    if (auto st = shnn_scale_sizes(system.c_str(), h, g.paper_scale, &depth, &width,
                                   &default_k, &epochs)) {
      return fail(st);
    }
    k = default_k;
  }
  shnn_dataset* ds = nullptr;
  if (auto st = shnn_dataset_generate(system.c_str(), h, k, g.seed, 0.0, &ds)) return fail(st);
  const std::string path = resolve(g, out);
  const shnn_status st = shnn_dataset_save(ds, path.c_str());
  shnn_dataset_free(ds);
  if (st != SHNN_OK) return fail(st);
  std::cout << "wrote " << k << " pairs to " << path << '\n';
  return 0;
}

struct TrainArgs {
  std::string data, scheme = "symplectic-euler", out = "model.json", report;
  int epochs = 0, layers = 0, width = 0;
  double h = 0.0;
  bool quiet = false;
};

int cmd_train(const Globals& g, const TrainArgs& a) {
  shnn_dataset* ds = nullptr;
  if (auto st = shnn_dataset_load(a.data.c_str(), a.h, &ds)) return fail(st);
  shnn_dataset_info info{};
  shnn_dataset_info_get(ds, &info);

  shnn_train_config cfg;
  shnn_train_config_default(&cfg);
  if (auto st = shnn_scheme_parse(a.scheme.c_str(), &cfg.scheme)) {
    shnn_dataset_free(ds);
    return fail(st);
  }
  int depth = 0, width = 0, k = 0, epochs = 0;
  if (auto st = shnn_scale_sizes(shnn_dataset_system(ds), info.h, g.paper_scale, &depth, &width,
                                 &k, &epochs)) {
    shnn_dataset_free(ds);
    return fail(st);
  }
  cfg.depth = a.layers > 0 ? a.layers : depth;
  cfg.width = a.width > 0 ? a.width : width;
  cfg.epochs = a.epochs > 0 ? a.epochs : epochs;
  cfg.seed = g.seed;

  const std::string model_path = resolve(g, a.out);
  const std::string report_path =
      resolve(g, a.report.empty() ? fs::path(a.out).stem().string() + "_losses.csv" : a.report);
  auto progress = [](int epoch, double tr, double te, void*) {
    if (epoch % 100 == 0) std::fprintf(stderr, "epoch %d train %.6e test %.6e\n", epoch, tr, te);
  };
  shnn_model* model = nullptr;
  shnn_status st = shnn_train(ds, &cfg, report_path.c_str(), a.quiet ? nullptr : +progress,
                              nullptr, &model);
  shnn_dataset_free(ds);
  if (st != SHNN_OK) return fail(st);
  st = shnn_model_save(model, model_path.c_str());
  shnn_model_info mi{};
  shnn_model_info_get(model, &mi);
  shnn_model_free(model);
  if (st != SHNN_OK) return fail(st);
  std::cout << "best epoch " << mi.best_epoch << ", test loss " << mi.best_test_loss
            << "; model " << model_path << ", losses " << report_path << '\n';
  return 0;
}

int cmd_correct(const std::string& model_path, int order) {
  shnn_model* model = nullptr;
  if (auto st = shnn_model_load(model_path.c_str(), &model)) return fail(st);
  shnn_status st = shnn_model_set_correction(model, order);
  if (st == SHNN_OK) st = shnn_model_save(model, model_path.c_str());
  shnn_model_free(model);
  if (st != SHNN_OK) return fail(st);
  std::cout << "correction order " << order << " recorded in " << model_path << '\n';
  return 0;
}

int cmd_evaluate(const Globals& g, const std::string& model_path, const std::string& system,
                 int n, const std::string& out, int grid) {
  shnn_model* model = nullptr;
  if (auto st = shnn_model_load(model_path.c_str(), &model)) return fail(st);
  shnn_eval_report r{};
  shnn_status st = shnn_evaluate(model, system.c_str(), n, g.seed, &r);
  if (st == SHNN_OK && grid > 0) {
    const std::string gp = resolve(g, fs::path(out).stem().string() + "_grid.csv");
    st = shnn_error_grid(model, system.c_str(), grid, g.seed, gp.c_str());
  }
  if (st != SHNN_OK) {
    shnn_model_free(model);
    return fail(st);
  }
  const std::string path = resolve(g, out);
  {
    std::ofstream f(path);
    f.precision(17);
    f << "eps_mean,eps_q25,eps_median,eps_q75,eps_sem,offset,n\n"
      << r.mean << ',' << r.q25 << ',' << r.median << ',' << r.q75 << ',' << r.sem << ','
      << r.offset << ',' << r.n << '\n';
  }
  {
    shnn_model_info mi{};
    shnn_model_info_get(model, &mi);
    std::ofstream f(path + ".json");
    f << "{\n  \"columns\": [\"eps_mean\", \"eps_q25\", \"eps_median\", \"eps_q75\", "
         "\"eps_sem\", \"offset\", \"n\"],\n  \"model\": \""
      << model_path << "\",\n  \"system\": \""
      << (system.empty() ? shnn_model_system(model) : system.c_str())
      << "\",\n  \"correction_order\": " << mi.correction_order << ",\n  \"seed\": " << g.seed
      << "\n}\n";
  }
  shnn_model_free(model);
  std::cout << "eps_H " << r.mean << " (median " << r.median << ", sem " << r.sem << ") -> "
            << path << '\n';
  return 0;
}

int cmd_rollout(const Globals& g, const std::string& model_path, const std::string& system,
                int n_traj, double t_final, const std::string& out) {
  shnn_model* model = nullptr;
  if (auto st = shnn_model_load(model_path.c_str(), &model)) return fail(st);
  if (t_final < 0.0) t_final = g.paper_scale ? 100.0 : 20.0;
  const std::string path = resolve(g, out);
  double final_mse = 0.0;
  const shnn_status st =
      shnn_rollout(model, system.c_str(), n_traj, t_final, g.seed, path.c_str(), &final_mse);
  shnn_model_free(model);
  if (st != SHNN_OK) return fail(st);
  std::cout << "MSE at t=" << t_final << ": " << final_mse << " -> " << path << '\n';
  return 0;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Learn Hamiltonians from snapshot pairs with symplectic schemes"};
  app.require_subcommand(1);
  app.set_help_flag("--help", "Print this help message and exit");
  app.fallthrough();
  Globals g;
  app.add_option("--seed", g.seed, "Random seed")->capture_default_str();
  app.add_flag("--paper-scale", g.paper_scale, "Use the reference network and dataset sizes");
  app.add_option("--out-dir", g.out_dir, "Directory for relative output paths")
      ->capture_default_str();
  app.set_version_flag("--version", std::string(shnn_version()));

  std::string system = "spring", out;
  double h = 0.1;
  int k = 0;
  auto* gen = app.add_subcommand("generate", "Generate a dataset of (y0, y1) pairs");
  gen->add_option("--system", system, "spring | pendulum | double_pendulum")->required();
  gen->add_option("--h", h, "Time step")->required();
  gen->add_option("--k", k, "Number of pairs (default depends on scale)");
  gen->add_option("--out", out, "Output file")->required();

  TrainArgs ta;
  auto* tr = app.add_subcommand("train", "Train a Hamiltonian network");
  tr->add_option("--data", ta.data, "Dataset file")->required()->check(CLI::ExistingFile);
  tr->add_option("--scheme", ta.scheme, "forward-euler | symplectic-euler | implicit-midpoint")
      ->capture_default_str();
  tr->add_option("--epochs", ta.epochs, "Epochs (default depends on scale)");
  tr->add_option("--layers", ta.layers, "Hidden layers L");
  tr->add_option("--width", ta.width, "Neurons per hidden layer M");
  tr->add_option("--h", ta.h, "Expected time step; must match the dataset");
  tr->add_option("--out", ta.out, "Model file")->capture_default_str();
  tr->add_option("--report", ta.report, "Loss CSV (default <model>_losses.csv)");
  tr->add_flag("--quiet", ta.quiet, "No progress output");

  std::string model_path;
  int order = 2;
  auto* corr = app.add_subcommand("correct", "Record a series correction in a model file");
  corr->add_option("--model", model_path, "Model file")->required()->check(CLI::ExistingFile);
  corr->add_option("--order", order, "0 (none), 2 or 3 (symplectic Euler), 4 (midpoint)")
      ->required()
      ->check(CLI::IsMember({0, 2, 3, 4}));

  int n_samples = 2000, grid = 0;
  std::string eval_system, eval_out = "eval.csv";
  auto* ev = app.add_subcommand("evaluate", "Measure eps_H of a model");
  ev->add_option("--model", model_path, "Model file")->required()->check(CLI::ExistingFile);
  ev->add_option("--system", eval_system, "System (default: the model's)");
  ev->add_option("--n", n_samples, "Samples")->capture_default_str();
  ev->add_option("--out", eval_out, "Output CSV")->capture_default_str();
  ev->add_option("--grid", grid, "Also write an error grid of this resolution");

  int n_traj = 50;
  double t_final = -1.0;
  std::string roll_out = "rollout.csv";
  auto* ro = app.add_subcommand("rollout", "Compare trajectories of the learned and true fields");
  ro->add_option("--model", model_path, "Model file")->required()->check(CLI::ExistingFile);
  ro->add_option("--system", eval_system, "System (default: the model's)");
  ro->add_option("--n-traj", n_traj, "Trajectories")->capture_default_str();
  ro->add_option("--t-final", t_final, "Final time (default 20, or 100 with --paper-scale)");
  ro->add_option("--out", roll_out, "Output CSV")->capture_default_str();

  std::string config;
  auto* rep = app.add_subcommand("report", "Run an experiment config end to end");
  rep->add_option("--config", config, "Experiment JSON")->required()->check(CLI::ExistingFile);

  CLI11_PARSE(app, argc, argv);

  try {
    if (*gen) return cmd_generate(g, system, h, k, out);
    if (*tr) return cmd_train(g, ta);
    if (*corr) return cmd_correct(model_path, order);
    if (*ev) return cmd_evaluate(g, model_path, eval_system, n_samples, eval_out, grid);
    if (*ro) return cmd_rollout(g, model_path, eval_system, n_traj, t_final, roll_out);
    if (*rep) {
      fs::create_directories(g.out_dir);
      const auto st = shnn_run_experiment(config.c_str(), g.out_dir.c_str(),
                                          g.paper_scale ? 1 : -1);
      if (st != SHNN_OK) return fail(st);
      std::cout << "report written to " << g.out_dir << '\n';
      return 0;
    }
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << '\n';
    return 1;
  }
  return 0;
}
