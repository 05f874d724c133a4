#include "shnn/shnn.h"

#include <fstream>
#include <iostream>
#include <string>

#include <json.hpp>

#include "shnn/correction.hpp"
#include "shnn/dataset.hpp"
#include "shnn/error.hpp"
#include "shnn/evaluation.hpp"
#include "shnn/experiment.hpp"
#include "shnn/training.hpp"

struct shnn_dataset {
  shnn::Dataset data;
};

struct shnn_model {
  shnn::LearnedHamiltonian model;
};

namespace {

thread_local std::string g_last_error;

shnn_status to_status(shnn::ErrorKind k) {
  switch (k) {
    case shnn::ErrorKind::InvalidArgument: return SHNN_ERR_INVALID_ARGUMENT;
    case shnn::ErrorKind::Io: return SHNN_ERR_IO;
    case shnn::ErrorKind::Format: return SHNN_ERR_FORMAT;
    case shnn::ErrorKind::Numerical: return SHNN_ERR_NUMERICAL;
    case shnn::ErrorKind::Unsupported: return SHNN_ERR_UNSUPPORTED;
    case shnn::ErrorKind::Internal: return SHNN_ERR_INTERNAL;
  }
  return SHNN_ERR_INTERNAL;
}

template <class F>
shnn_status guarded(F&& f) {
  try {
    f();
    g_last_error.clear();
    return SHNN_OK;
  } catch (const std::bad_alloc&) {
    g_last_error = "out of memory";
    return SHNN_ERR_INTERNAL;
  } catch (const std::exception& e) {
    g_last_error = e.what();
    return to_status(shnn::classify(e));
  } catch (...) {
    g_last_error = "unknown error";
    return SHNN_ERR_INTERNAL;
  }
}

void require(bool ok, const char* what) {
  if (!ok) throw shnn::InvalidArgument(what);
}

shnn::Scheme to_scheme(shnn_scheme s) {
  switch (s) {
    case SHNN_SCHEME_FORWARD_EULER: return shnn::Scheme::ForwardEuler;
    case SHNN_SCHEME_SYMPLECTIC_EULER: return shnn::Scheme::SymplecticEuler;
    case SHNN_SCHEME_IMPLICIT_MIDPOINT: return shnn::Scheme::ImplicitMidpoint;
  }
  throw shnn::InvalidArgument("unknown scheme value");
}

shnn_scheme from_scheme(shnn::Scheme s) {
  switch (s) {
    case shnn::Scheme::ForwardEuler: return SHNN_SCHEME_FORWARD_EULER;
    case shnn::Scheme::SymplecticEuler: return SHNN_SCHEME_SYMPLECTIC_EULER;
    case shnn::Scheme::ImplicitMidpoint: return SHNN_SCHEME_IMPLICIT_MIDPOINT;
  }
  return SHNN_SCHEME_FORWARD_EULER;
}

int correction_order(shnn::Correction c) {
  switch (c) {
    case shnn::Correction::None: return 0;
    case shnn::Correction::SeOrder2: return 2;
    case shnn::Correction::SeOrder3: return 3;
    case shnn::Correction::MpOrder4: return 4;
  }
  return 0;
}

shnn::HamiltonianSystem system_for(const shnn_model* m, const char* system) {
  if (system != nullptr && *system != '\0') return shnn::system_by_id(system);
  if (m->model.system.empty()) {
    throw shnn::InvalidArgument("model does not record its system; pass one explicitly");
  }
  return shnn::system_by_id(m->model.system);
}

shnn::PhaseVector to_vector(const double* y, size_t dim, const shnn_model* m) {
  require(y != nullptr, "state pointer is null");
  require(dim == static_cast<size_t>(m->model.params.input_dim()),
          "state dimension does not match the model");
  return Eigen::Map<const Eigen::VectorXd>(y, static_cast<Eigen::Index>(dim));
}

nlohmann::ordered_json model_meta(const shnn_model* m) {
  return {{"system", m->model.system},
          {"scheme", shnn::to_string(m->model.scheme)},
          {"correction", shnn::to_string(m->model.correction)},
          {"h", m->model.h},
          {"model_seed", m->model.seed},
          {"L", m->model.params.depth()},
          {"M", m->model.params.width()}};
}

std::ofstream open_out(const char* path) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw shnn::IoError(std::string("cannot open ") + path + " for writing");
  return out;
}

}  // namespace

extern "C" {

const char* shnn_version(void) { return "0.1.0"; }

const char* shnn_last_error(void) { return g_last_error.c_str(); }

const char* shnn_status_string(shnn_status status) {
  switch (status) {
    case SHNN_OK: return "ok";
    case SHNN_ERR_INVALID_ARGUMENT: return "invalid argument";
    case SHNN_ERR_IO: return "i/o error";
    case SHNN_ERR_FORMAT: return "format error";
    case SHNN_ERR_NUMERICAL: return "numerical error";
    case SHNN_ERR_UNSUPPORTED: return "unsupported operation";
    case SHNN_ERR_INTERNAL: return "internal error";
  }
  return "unknown status";
}

shnn_status shnn_scheme_parse(const char* name, shnn_scheme* out) {
  return guarded([&] {
    require(name != nullptr && out != nullptr, "null argument");
    *out = from_scheme(shnn::parse_scheme(name));
  });
}

shnn_status shnn_dataset_generate(const char* system, double h, int k, uint64_t seed,
                                  double tolerance, shnn_dataset** out) {
  return guarded([&] {
    require(system != nullptr && out != nullptr, "null argument");
    shnn::GenerateOptions opts;
    if (tolerance > 0.0) opts.tolerance = tolerance;
    auto ds = std::make_unique<shnn_dataset>();
    ds->data = shnn::generate_dataset(shnn::system_by_id(system), h, k, seed, opts);
    *out = ds.release();
  });
}

shnn_status shnn_dataset_load(const char* path, double expected_h, shnn_dataset** out) {
  return guarded([&] {
    require(path != nullptr && out != nullptr, "null argument");
    auto ds = std::make_unique<shnn_dataset>();
    ds->data = shnn::load_dataset(path, expected_h > 0.0 ? std::optional<double>(expected_h)
                                                         : std::nullopt);
    *out = ds.release();
  });
}

shnn_status shnn_dataset_save(const shnn_dataset* ds, const char* path) {
  return guarded([&] {
    require(ds != nullptr && path != nullptr, "null argument");
    shnn::save_dataset(ds->data, path);
  });
}

shnn_status shnn_dataset_info_get(const shnn_dataset* ds, shnn_dataset_info* out) {
  return guarded([&] {
    require(ds != nullptr && out != nullptr, "null argument");
    out->n = ds->data.n;
    out->size = ds->data.size();
    out->train_size = static_cast<int>(ds->data.indices(shnn::Split::Train).size());
    out->test_size = static_cast<int>(ds->data.indices(shnn::Split::Test).size());
    out->h = ds->data.h;
    out->seed = ds->data.seed;
    out->tolerance = ds->data.tolerance;
  });
}

const char* shnn_dataset_system(const shnn_dataset* ds) {
  return ds != nullptr ? ds->data.system.c_str() : "";
}

void shnn_dataset_free(shnn_dataset* ds) { delete ds; }

void shnn_train_config_default(shnn_train_config* cfg) {
  if (cfg == nullptr) return;
  const shnn::TrainConfig d;
  cfg->scheme = from_scheme(d.scheme);
  cfg->epochs = d.epochs;
  cfg->learning_rate = d.optimizer.learning_rate;
  cfg->weight_decay = d.optimizer.weight_decay;
  cfg->beta1 = d.optimizer.beta1;
  cfg->beta2 = d.optimizer.beta2;
  cfg->eps = d.optimizer.eps;
  cfg->seed = d.seed;
  cfg->depth = d.depth;
  cfg->width = d.width;
}

shnn_status shnn_train(const shnn_dataset* ds, const shnn_train_config* cfg,
                       const char* report_csv, shnn_epoch_callback callback, void* user,
                       shnn_model** out) {
  return guarded([&] {
    require(ds != nullptr && cfg != nullptr && out != nullptr, "null argument");
    shnn::TrainConfig tc;
    tc.scheme = to_scheme(cfg->scheme);
    tc.epochs = cfg->epochs;
    tc.optimizer = {cfg->learning_rate, cfg->weight_decay, cfg->beta1, cfg->beta2, cfg->eps};
    tc.seed = cfg->seed;
    tc.depth = cfg->depth;
    tc.width = cfg->width;
    if (callback != nullptr) {
      tc.on_epoch = [callback, user](int e, double tr, double te) { callback(e, tr, te, user); };
    }
    shnn::TrainResult res = shnn::train(ds->data, tc);
    auto m = std::make_unique<shnn_model>();
    m->model = std::move(res.model);
    if (report_csv != nullptr) {
      auto f = open_out(report_csv);
      shnn::write_train_report(f, res.report);
      f.close();
      auto meta = model_meta(m.get());
      meta["columns"] = {"epoch", "train_loss", "test_loss"};
      meta["epochs"] = tc.epochs;
      meta["best_epoch"] = res.report.best_epoch;
      meta["best_test_loss"] = res.report.best_test_loss;
      shnn::write_sidecar(report_csv, meta.dump(2));
    }
    *out = m.release();
  });
}

shnn_status shnn_model_load(const char* path, shnn_model** out) {
  return guarded([&] {
    require(path != nullptr && out != nullptr, "null argument");
    auto m = std::make_unique<shnn_model>();
    m->model = shnn::load_model(path);
    *out = m.release();
  });
}

shnn_status shnn_model_save(const shnn_model* model, const char* path) {
  return guarded([&] {
    require(model != nullptr && path != nullptr, "null argument");
    shnn::save_model(model->model, path);
  });
}

shnn_status shnn_model_info_get(const shnn_model* model, shnn_model_info* out) {
  return guarded([&] {
    require(model != nullptr && out != nullptr, "null argument");
    const auto& m = model->model;
    out->n_dim = m.params.n_dim();
    out->depth = m.params.depth();
    out->width = m.params.width();
    out->scheme = from_scheme(m.scheme);
    out->h = m.h;
    out->correction_order = correction_order(m.correction);
    out->seed = m.seed;
    out->best_epoch = m.best_epoch;
    out->best_test_loss = m.best_test_loss;
  });
}

const char* shnn_model_system(const shnn_model* model) {
  return model != nullptr ? model->model.system.c_str() : "";
}

void shnn_model_free(shnn_model* model) { delete model; }

shnn_status shnn_model_set_correction(shnn_model* model, int order) {
  return guarded([&] {
    require(model != nullptr, "null argument");
    const shnn::Correction c = shnn::correction_for_order(order);
    shnn::check_correction(model->model.scheme, c);
    model->model.correction = c;
  });
}

shnn_status shnn_model_eval(const shnn_model* model, const double* y, size_t dim,
                            double* value) {
  return guarded([&] {
    require(model != nullptr && value != nullptr, "null argument");
    const shnn::CorrectedField f(model->model);
    *value = f.value(to_vector(y, dim, model));
  });
}

shnn_status shnn_model_symplectic_gradient(const shnn_model* model, const double* y,
                                           size_t dim, double* out) {
  return guarded([&] {
    require(model != nullptr && out != nullptr, "null argument");
    const shnn::CorrectedField f(model->model);
    const shnn::PhaseVector v = shnn::apply_inverse_symplectic(f.gradient(to_vector(y, dim, model)));
    for (Eigen::Index i = 0; i < v.size(); ++i) out[i] = v(i);
  });
}

shnn_status shnn_evaluate(const shnn_model* model, const char* system, int n_samples,
                          uint64_t seed, shnn_eval_report* out) {
  return guarded([&] {
    require(model != nullptr && out != nullptr, "null argument");
    const shnn::CorrectedField f(model->model);
    const shnn::EvalReport r = shnn::epsilon_h(f, system_for(model, system), n_samples, seed);
    *out = {r.mean, r.q25, r.median, r.q75, r.sem, r.offset, r.n};
  });
}

shnn_status shnn_rollout(const shnn_model* model, const char* system, int n_traj,
                         double t_final, uint64_t seed, const char* csv_path,
                         double* final_mse) {
  return guarded([&] {
    require(model != nullptr && csv_path != nullptr, "null argument");
    const auto sys = system_for(model, system);
    shnn::RolloutOptions ro;
    ro.n_traj = n_traj;
    ro.t_final = t_final;
    const shnn::RolloutReport r = shnn::rollout_mse(model->model, sys, ro, seed);
    auto f = open_out(csv_path);
    shnn::write_rollout_csv(f, r);
    f.close();
    auto meta = model_meta(model);
    meta["columns"] = {"t", "mse", "sem"};
    meta["rollout_system"] = sys.id;
    meta["n_traj"] = r.n_traj;
    meta["rejected"] = r.rejected;
    meta["energy_threshold"] = r.threshold;
    meta["rollout_seed"] = seed;
    meta["t_final"] = t_final;
    shnn::write_sidecar(csv_path, meta.dump(2));
    if (final_mse != nullptr) *final_mse = r.mse.back();
  });
}

shnn_status shnn_error_grid(const shnn_model* model, const char* system, int resolution,
                            uint64_t seed, const char* csv_path) {
  return guarded([&] {
    require(model != nullptr && csv_path != nullptr, "null argument");
    const auto sys = system_for(model, system);
    const shnn::CorrectedField f(model->model);
    const shnn::EvalReport r = shnn::epsilon_h(f, sys, 2000, seed);
    auto out = open_out(csv_path);
    shnn::write_error_grid(out, f, sys, resolution, r.offset);
    out.close();
    auto meta = model_meta(model);
    meta["columns"] = {"p", "q", "error"};
    meta["offset"] = r.offset;
    meta["offset_seed"] = seed;
    meta["resolution"] = resolution;
    shnn::write_sidecar(csv_path, meta.dump(2));
  });
}

shnn_status shnn_scale_sizes(const char* system, double h, int paper_scale, int* depth,
                             int* width, int* k, int* epochs) {
  return guarded([&] {
    require(system != nullptr, "null argument");
    (void)shnn::system_by_id(system);
    const shnn::CellSizes s = paper_scale != 0 ? shnn::paper_scale_sizes(system, h)
                                               : shnn::desk_scale_sizes(system);
    if (depth != nullptr) *depth = s.depth;
    if (width != nullptr) *width = s.width;
    if (k != nullptr) *k = s.k;
    if (epochs != nullptr) *epochs = s.epochs;
  });
}

shnn_status shnn_run_experiment(const char* config_path, const char* out_dir,
                                int paper_scale) {
  return guarded([&] {
    require(config_path != nullptr && out_dir != nullptr, "null argument");
    shnn::ExperimentConfig cfg = shnn::load_experiment_config(config_path);
    if (paper_scale >= 0) cfg.paper_scale = paper_scale != 0;
    shnn::run_experiment(cfg, out_dir, &std::clog);
  });
}

}  // extern "C"
