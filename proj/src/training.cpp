#include "shnn/training.hpp"

#include <algorithm>
#include <cmath>
#include <ostream>
#include <sstream>

#include "shnn/error.hpp"
#include "shnn/format.hpp"

namespace shnn {

PairBatch make_batch(std::span<const DataPair> pairs, Scheme scheme, double h) {
  if (pairs.empty()) throw InvalidArgument("loss needs at least one data pair");
  if (!(h > 0.0)) throw InvalidArgument("time step must be positive");
  const Eigen::Index dim = pairs.front().y0.size();
  PairBatch b{Eigen::MatrixXd(dim, static_cast<Eigen::Index>(pairs.size())),
              Eigen::MatrixXd(dim, static_cast<Eigen::Index>(pairs.size()))};
  for (std::size_t j = 0; j < pairs.size(); ++j) {
    const auto col = static_cast<Eigen::Index>(j);
    if (pairs[j].y0.size() != dim || pairs[j].y1.size() != dim) {
      throw InvalidArgument("data pairs have inconsistent dimensions");
    }
    b.points.col(col) = scheme_point(scheme, pairs[j]);
    b.targets.col(col) = (pairs[j].y1 - pairs[j].y0) / h;
  }
  return b;
}

namespace {

ad::Var symplectic_field(ad::Var grad) {
  const Eigen::Index n = grad.rows() / 2;
  return ad::concat_rows(-ad::row_block(grad, n, n), ad::row_block(grad, 0, n));
}

// Column range [begin, begin + count) of a batch.
PairBatch slice(const PairBatch& b, Eigen::Index begin, Eigen::Index count) {
  return {b.points.middleCols(begin, count), b.targets.middleCols(begin, count)};
}

// Residual sum without building the parameter-gradient graph.
double residual_sum_value(const ad::Parameters& params, const PairBatch& batch) {
  ad::Tape tape;
  std::vector<ad::Var> p;
  p.reserve(params.size());
  for (const auto& m : params) p.push_back(tape.leaf(m));
  ad::Var y = tape.leaf(batch.points);
  ad::Var out = mlp_graph(p, y);
  const ad::Var wrt[] = {y};
  const Eigen::MatrixXd g = tape.gradient(out, wrt).front();
  const Eigen::Index n = g.rows() / 2;
  Eigen::MatrixXd field(g.rows(), g.cols());
  field.topRows(n) = -g.bottomRows(n);
  field.bottomRows(n) = g.topRows(n);
  return (batch.targets - field).squaredNorm();
}

double mean_loss_value(const ad::Parameters& params, const PairBatch& batch,
                       Eigen::Index chunk) {
  const Eigen::Index total = batch.points.cols();
  double acc = 0.0;
  for (Eigen::Index begin = 0; begin < total; begin += chunk) {
    acc += residual_sum_value(params, slice(batch, begin, std::min(chunk, total - begin)));
  }
  return acc / static_cast<double>(total);
}

ad::LossAndGradient mean_loss_gradient(const ad::Parameters& params, const PairBatch& batch,
                                       Eigen::Index chunk) {
  const Eigen::Index total = batch.points.cols();
  ad::LossAndGradient acc;
  for (Eigen::Index begin = 0; begin < total; begin += chunk) {
    const PairBatch part = slice(batch, begin, std::min(chunk, total - begin));
    auto lg = ad::parameter_gradient(
        [&part](ad::Tape& tape, std::span<const ad::Var> p) {
          return residual_sum_graph(tape, p, part);
        },
        params);
    if (acc.gradient.empty()) {
      acc = std::move(lg);
    } else {
      acc.value += lg.value;
      for (std::size_t i = 0; i < acc.gradient.size(); ++i) acc.gradient[i] += lg.gradient[i];
    }
  }
  const double scale = 1.0 / static_cast<double>(total);
  acc.value *= scale;
  for (auto& g : acc.gradient) g *= scale;
  return acc;
}

}  // namespace

ad::Var residual_sum_graph(ad::Tape& tape, std::span<const ad::Var> params,
                           const PairBatch& batch) {
  ad::Var y = tape.leaf(batch.points);
  ad::Var targets = tape.leaf(batch.targets);
  ad::Var h_hat = mlp_graph(params, y);
  ad::Var field = symplectic_field(ad::input_gradient(h_hat, y));
  return ad::squared_norm(targets - field);
}

double loss(const MlpParams& params, std::span<const DataPair> pairs, Scheme scheme,
            double h) {
  const PairBatch batch = make_batch(pairs, scheme, h);
  if (batch.points.rows() != params.input_dim()) {
    throw InvalidArgument("data dimension does not match the network");
  }
  return mean_loss_value(params.to_parameters(), batch, 4096);
}

double field_loss(const GradientField& grad_h, std::span<const DataPair> pairs, Scheme scheme,
                  double h) {
  const PairBatch batch = make_batch(pairs, scheme, h);
  double acc = 0.0;
  for (Eigen::Index j = 0; j < batch.points.cols(); ++j) {
    const Eigen::VectorXd point = batch.points.col(j);
    acc += (batch.targets.col(j) - apply_inverse_symplectic(grad_h(point))).squaredNorm();
  }
  return acc / static_cast<double>(batch.points.cols());
}

ad::LossAndGradient loss_and_gradient(const MlpParams& params,
                                      std::span<const DataPair> pairs, Scheme scheme,
                                      double h) {
  const PairBatch batch = make_batch(pairs, scheme, h);
  if (batch.points.rows() != params.input_dim()) {
    throw InvalidArgument("data dimension does not match the network");
  }
  return mean_loss_gradient(params.to_parameters(), batch, 4096);
}

void adamw_step(ad::Parameters& params, const ad::Parameters& grads, AdamWState& state,
                const AdamWConfig& cfg, long step) {
  if (grads.size() != params.size()) throw InvalidArgument("gradient count mismatch");
  if (step < 1) throw InvalidArgument("AdamW step index starts at 1");
  if (state.m.empty()) {
    for (const auto& p : params) {
      state.m.push_back(Eigen::MatrixXd::Zero(p.rows(), p.cols()));
      state.v.push_back(Eigen::MatrixXd::Zero(p.rows(), p.cols()));
    }
  }
  const double bc1 = 1.0 - std::pow(cfg.beta1, static_cast<double>(step));
  const double bc2 = 1.0 - std::pow(cfg.beta2, static_cast<double>(step));
  for (std::size_t i = 0; i < params.size(); ++i) {
    if (grads[i].rows() != params[i].rows() || grads[i].cols() != params[i].cols()) {
      throw InvalidArgument("gradient shape mismatch");
    }
    auto& m = state.m[i];
    auto& v = state.v[i];
    m = cfg.beta1 * m + (1.0 - cfg.beta1) * grads[i];
    v = cfg.beta2 * v + (1.0 - cfg.beta2) * grads[i].cwiseAbs2();
    params[i] *= 1.0 - cfg.learning_rate * cfg.weight_decay;
    params[i].array() -= cfg.learning_rate * (m.array() / bc1) /
                         ((v.array() / bc2).sqrt() + cfg.eps);
  }
}

TrainResult train(const Dataset& ds, const TrainConfig& cfg) {
  if (cfg.epochs < 1) throw InvalidArgument("epochs must be at least 1");
  if (!(cfg.optimizer.learning_rate > 0.0) || cfg.optimizer.weight_decay < 0.0) {
    throw InvalidArgument("learning rate must be positive and weight decay non-negative");
  }
  if (cfg.chunk_size < 1) throw InvalidArgument("chunk size must be positive");
  const auto train_pairs = ds.subset(Split::Train);
  const auto test_pairs = ds.subset(Split::Test);
  if (train_pairs.empty() || test_pairs.empty()) {
    throw InvalidArgument("dataset needs both train and test pairs");
  }

  const PairBatch train_batch = make_batch(train_pairs, cfg.scheme, ds.h);
  const PairBatch test_batch = make_batch(test_pairs, cfg.scheme, ds.h);
  if (train_batch.points.rows() != 2 * ds.n) {
    throw InvalidArgument("dataset dimension does not match its header");
  }

  MlpParams init = init_mlp(cfg.seed, ds.n, cfg.depth, cfg.width);
  ad::Parameters params = init.to_parameters();
  ad::Parameters best = params;
  AdamWState state;
  TrainReport report;
  report.train_loss.reserve(static_cast<std::size_t>(cfg.epochs));
  report.test_loss.reserve(static_cast<std::size_t>(cfg.epochs));

  for (int epoch = 0; epoch < cfg.epochs; ++epoch) {
    auto lg = mean_loss_gradient(params, train_batch, cfg.chunk_size);
    const double test = mean_loss_value(params, test_batch, cfg.chunk_size);
    if (!std::isfinite(lg.value) || !std::isfinite(test)) {
      std::ostringstream msg;
      msg << "non-finite loss at epoch " << epoch << " (train " << lg.value << ", test "
          << test << "); last losses:";
      const std::size_t from = report.train_loss.size() > 5 ? report.train_loss.size() - 5 : 0;
      for (std::size_t i = from; i < report.train_loss.size(); ++i) {
        msg << " [" << i << "] " << report.train_loss[i] << "/" << report.test_loss[i];
      }
      throw TrainingDiverged(msg.str());
    }
    report.train_loss.push_back(lg.value);
    report.test_loss.push_back(test);
    if (report.best_epoch < 0 || test < report.best_test_loss) {
      report.best_epoch = epoch;
      report.best_test_loss = test;
      best = params;
    }
    if (cfg.on_epoch) cfg.on_epoch(epoch, lg.value, test);
    adamw_step(params, lg.gradient, state, cfg.optimizer, epoch + 1);
  }

  TrainResult result;
  result.model.params = MlpParams::from_parameters(ds.n, cfg.depth, cfg.width, best);
  result.model.scheme = cfg.scheme;
  result.model.h = ds.h;
  result.model.system = ds.system;
  result.model.seed = cfg.seed;
  result.model.best_epoch = report.best_epoch;
  result.model.best_test_loss = report.best_test_loss;
  result.report = std::move(report);
  return result;
}

void write_train_report(std::ostream& os, const TrainReport& report) {
  os << "epoch,train_loss,test_loss\n";
  for (std::size_t i = 0; i < report.train_loss.size(); ++i) {
    os << i << ',' << fmt_double(report.train_loss[i]) << ','
       << fmt_double(report.test_loss[i]) << '\n';
  }
}

}  // namespace shnn
