#pragma once

#include <cstdint>
#include <functional>
#include <iosfwd>
#include <span>
#include <vector>

#include "shnn/autodiff.hpp"
#include "shnn/dataset.hpp"
#include "shnn/integrators.hpp"
#include "shnn/model.hpp"

namespace shnn {

/// Scheme evaluation points and finite-difference targets of a set of pairs,
/// one column per pair.
struct PairBatch {
  Eigen::MatrixXd points;   // s(y0, y1)
  Eigen::MatrixXd targets;  // (y1 - y0) / h
};

PairBatch make_batch(std::span<const DataPair> pairs, Scheme scheme, double h);

/// Sum over columns of ||targets - J^{-1} grad H(points)||^2, recorded on the tape.
ad::Var residual_sum_graph(ad::Tape& tape, std::span<const ad::Var> params,
                           const PairBatch& batch);

/// Mean over pairs of ||(y1 - y0)/h - J^{-1} grad H(s(y0, y1))||^2.
double loss(const MlpParams& params, std::span<const DataPair> pairs, Scheme scheme,
            double h);

/// The same loss for an arbitrary Hamiltonian given by its gradient field.
double field_loss(const GradientField& grad_h, std::span<const DataPair> pairs, Scheme scheme,
                  double h);

/// The same loss with its gradient with respect to the network parameters
/// (ordered as MlpParams::to_parameters()).
ad::LossAndGradient loss_and_gradient(const MlpParams& params,
                                      std::span<const DataPair> pairs, Scheme scheme,
                                      double h);

struct AdamWConfig {
  double learning_rate = 1e-3;
  double weight_decay = 1e-2;
  double beta1 = 0.9;
  double beta2 = 0.999;
  double eps = 1e-8;
};

struct AdamWState {
  ad::Parameters m;
  ad::Parameters v;
};

/// One decoupled-weight-decay Adam update; `step` counts from 1.
void adamw_step(ad::Parameters& params, const ad::Parameters& grads, AdamWState& state,
                const AdamWConfig& cfg, long step);

struct TrainConfig {
  Scheme scheme = Scheme::SymplecticEuler;
  int epochs = 5000;
  AdamWConfig optimizer;
  std::uint64_t seed = 0;
  int depth = 1;    // L
  int width = 200;  // M
  /// Pairs per differentiation tape; bounds memory, does not change results
  /// beyond floating-point summation order.
  int chunk_size = 4096;
  /// Called after every epoch with (epoch, train loss, test loss).
  std::function<void(int, double, double)> on_epoch;
};

struct TrainReport {
  std::vector<double> train_loss;  // evaluated at the parameters of each epoch
  std::vector<double> test_loss;
  int best_epoch = -1;
  double best_test_loss = 0.0;
};

struct TrainResult {
  LearnedHamiltonian model;  // parameters of the best-test-loss epoch
  TrainReport report;
};

/// Full-batch AdamW on the training split; keeps the epoch with the lowest
/// test loss. Throws TrainingDiverged on a non-finite loss.
TrainResult train(const Dataset& ds, const TrainConfig& cfg);

/// CSV with columns epoch, train_loss, test_loss.
void write_train_report(std::ostream& os, const TrainReport& report);

}  // namespace shnn
