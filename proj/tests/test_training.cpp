#include <doctest.h>

#include <algorithm>
#include <sstream>

#include "shnn/correction.hpp"
#include "shnn/error.hpp"
#include "shnn/training.hpp"
#include "support.hpp"

using namespace shnn;
using testing::rel_err;

namespace {

MlpParams zero_net(int n, int width) {
  auto p = init_mlp(0, n, 1, width).to_parameters();
  for (auto& m : p) m.setZero();
  return MlpParams::from_parameters(n, 1, width, p);
}

// Independent scalar Adam/AdamW, one parameter.
struct ScalarAdam {
  double lr, wd, b1 = 0.9, b2 = 0.999, eps = 1e-8;
  double m = 0.0, v = 0.0;
  int t = 0;
  double step(double theta, double g) {
    ++t;
    m = b1 * m + (1 - b1) * g;
    v = b2 * v + (1 - b2) * g * g;
    const double mh = m / (1 - std::pow(b1, t));
    const double vh = v / (1 - std::pow(b2, t));
    return theta - lr * (mh / (std::sqrt(vh) + eps) + wd * theta);
  }
};

}  // namespace

TEST_CASE("scheme points") {
  const DataPair same{Eigen::Vector2d(0.3, 0.7), Eigen::Vector2d(0.3, 0.7)};
  for (Scheme s : {Scheme::ForwardEuler, Scheme::SymplecticEuler, Scheme::ImplicitMidpoint}) {
    CHECK(scheme_point(s, same) == same.y0);
  }
  const DataPair pair{Eigen::Vector2d(0, 1), Eigen::Vector2d(2, 3)};
  CHECK(scheme_point(Scheme::ForwardEuler, pair) == Eigen::Vector2d(0, 1));
  CHECK(scheme_point(Scheme::SymplecticEuler, pair) == Eigen::Vector2d(2, 1));
  CHECK(scheme_point(Scheme::ImplicitMidpoint, pair) == Eigen::Vector2d(1, 2));

  const DataPair wide{Eigen::Vector4d(1, 2, 3, 4), Eigen::Vector4d(5, 6, 7, 8)};
  CHECK(scheme_point(Scheme::SymplecticEuler, wide) == Eigen::Vector4d(5, 6, 3, 4));
  CHECK(parse_scheme("implicit-midpoint") == Scheme::ImplicitMidpoint);
  CHECK(to_string(Scheme::ForwardEuler) == "forward-euler");
  CHECK_THROWS_AS(parse_scheme("rk4"), InvalidArgument);
}

TEST_CASE("loss of the zero network") {
  const DataPair pair{Eigen::Vector2d(0.2, -0.1), Eigen::Vector2d(0.5, 0.3)};
  const std::vector<DataPair> pairs{pair};
  const double h = 0.1;
  const double expected = ((pair.y1 - pair.y0) / h).squaredNorm();
  for (Scheme s : {Scheme::ForwardEuler, Scheme::SymplecticEuler, Scheme::ImplicitMidpoint}) {
    CHECK(loss(zero_net(1, 4), pairs, s, h) == doctest::Approx(expected).epsilon(1e-14));
  }
  CHECK_THROWS_AS(loss(zero_net(1, 4), std::vector<DataPair>{}, Scheme::ForwardEuler, h),
                  InvalidArgument);
}

TEST_CASE("loss is the mean squared residual") {
  const MlpParams net = init_mlp(6, 1, 1, 8);
  const Dataset ds = generate_dataset(pendulum(), 0.2, 20, 2);
  for (Scheme s : {Scheme::ForwardEuler, Scheme::SymplecticEuler, Scheme::ImplicitMidpoint}) {
    double acc = 0.0;
    for (const auto& p : ds.pairs) {
      acc += ((p.y1 - p.y0) / 0.2 - symplectic_gradient(net, scheme_point(s, p))).squaredNorm();
    }
    CHECK(loss(net, ds.pairs, s, 0.2) == doctest::Approx(acc / 20.0).epsilon(1e-13));
    const GradientField g = [&net](const PhaseVector& y) { return input_gradient(net, y); };
    CHECK(field_loss(g, ds.pairs, s, 0.2) == doctest::Approx(acc / 20.0).epsilon(1e-13));
  }
}

TEST_CASE("loss follows the quadratic expansion when targets are doubled") {
  const MlpParams net = init_mlp(7, 1, 1, 8);
  const double h = 0.1;
  std::vector<DataPair> pairs = generate_dataset(spring(), h, 10, 3).pairs;
  double expected = 0.0;
  std::vector<DataPair> doubled;
  for (const auto& p : pairs) {
    const Eigen::VectorXd a = (p.y1 - p.y0) / h;
    const Eigen::VectorXd b = symplectic_gradient(net, p.y0);
    expected += (2.0 * a - b).squaredNorm();
    doubled.push_back({p.y0, p.y0 + 2.0 * (p.y1 - p.y0)});
  }
  CHECK(loss(net, doubled, Scheme::ForwardEuler, h) ==
        doctest::Approx(expected / 10.0).epsilon(1e-12));
}

TEST_CASE("loss of the order-2 series on spring data scales as h^6") {
  const SystemField h_field(spring());
  auto series_loss = [&](double h) {
    const Dataset ds = generate_dataset(spring(), h, 40, 8, {1e-13});
    const FunctionField series(2, [&](const PhaseVector& y) {
      return forward_series(h_field, Scheme::SymplecticEuler, 2, y, h);
    });
    const GradientField g = [&series](const PhaseVector& y) { return series.gradient(y); };
    return field_loss(g, ds.pairs, Scheme::SymplecticEuler, h);
  };
  const double l1 = series_loss(0.1);
  const double l2 = series_loss(0.05);
  CHECK(l1 <= std::pow(0.1, 6));
  CHECK(l1 / l2 >= 40.0);
}

TEST_CASE("all three losses coincide when y1 = y0") {
  const MlpParams net = init_mlp(2, 1, 1, 8);
  std::vector<DataPair> pairs;
  std::mt19937_64 rng(1);
  for (int i = 0; i < 5; ++i) {
    const Eigen::VectorXd y = testing::random_vector(rng, 2);
    pairs.push_back({y, y});
  }
  const double a = loss(net, pairs, Scheme::ForwardEuler, 0.1);
  CHECK(loss(net, pairs, Scheme::SymplecticEuler, 0.1) == a);
  CHECK(loss(net, pairs, Scheme::ImplicitMidpoint, 0.1) == a);
}

TEST_CASE("loss gradient matches finite differences for every scheme") {
  const MlpParams net = init_mlp(13, 1, 1, 8);
  const Dataset ds = generate_dataset(pendulum(), 0.1, 12, 4);
  const auto shapes = net.parameter_shapes();
  for (Scheme s : {Scheme::ForwardEuler, Scheme::SymplecticEuler, Scheme::ImplicitMidpoint}) {
    CAPTURE(to_string(s));
    const auto lg = loss_and_gradient(net, ds.pairs, s, 0.1);
    CHECK(lg.value == doctest::Approx(loss(net, ds.pairs, s, 0.1)).epsilon(1e-13));
    const Eigen::VectorXd fd = testing::fd_gradient(
        [&](const Eigen::VectorXd& flat) {
          return loss(MlpParams::from_parameters(1, 1, 8, ad::unflatten(shapes, flat)), ds.pairs,
                      s, 0.1);
        },
        ad::flatten(net.to_parameters()), 1e-6);
    CHECK(rel_err(ad::flatten(lg.gradient), fd) <= 1e-4);
  }
}

TEST_CASE("AdamW update") {
  ad::Parameters theta{Eigen::MatrixXd::Zero(2, 2)};
  AdamWState st;
  adamw_step(theta, {Eigen::MatrixXd::Zero(2, 2)}, st, {}, 1);
  CHECK(theta[0].isZero(0.0));

  ad::Parameters one{Eigen::MatrixXd::Ones(1, 1)};
  AdamWState s1;
  adamw_step(one, {Eigen::MatrixXd::Ones(1, 1)}, s1, {}, 1);
  CHECK(one[0](0, 0) == doctest::Approx(1.0 - 1e-3 * (1.0 / (1.0 + 1e-8) + 1e-2)).epsilon(1e-15));
  CHECK(one[0](0, 0) == doctest::Approx(0.99899).epsilon(1e-9));

  CHECK_THROWS_AS(adamw_step(one, {}, s1, {}, 2), InvalidArgument);
  CHECK_THROWS_AS(adamw_step(one, {Eigen::MatrixXd::Ones(2, 1)}, s1, {}, 2), InvalidArgument);
}

TEST_CASE("AdamW matches an independent implementation over 100 steps") {
  for (double wd : {0.0, 1e-2}) {
    AdamWConfig cfg;
    cfg.weight_decay = wd;
    ad::Parameters theta{Eigen::MatrixXd::Constant(1, 1, 0.7)};
    AdamWState st;
    ScalarAdam ref{cfg.learning_rate, wd};
    double t_ref = 0.7;
    for (int k = 1; k <= 100; ++k) {
      const double g = std::sin(0.3 * k) + 0.5 * theta[0](0, 0);
      const double g_ref = std::sin(0.3 * k) + 0.5 * t_ref;
      adamw_step(theta, {Eigen::MatrixXd::Constant(1, 1, g)}, st, cfg, k);
      t_ref = ref.step(t_ref, g_ref);
    }
    CHECK(theta[0](0, 0) == doctest::Approx(t_ref).epsilon(1e-14));
  }
}

TEST_CASE("one epoch is one optimizer step") {
  const Dataset ds = generate_dataset(spring(), 0.1, 20, 1);
  TrainConfig cfg;
  cfg.epochs = 1;
  cfg.depth = 1;
  cfg.width = 8;
  cfg.seed = 5;
  const TrainResult r = train(ds, cfg);
  CHECK(r.report.train_loss.size() == 1);
  CHECK(r.report.test_loss.size() == 1);
  CHECK(r.report.best_epoch == 0);
  // the returned model is the checkpoint taken before the step
  CHECK(r.model.params == init_mlp(5, 1, 1, 8));

  ad::Parameters p = init_mlp(5, 1, 1, 8).to_parameters();
  const auto lg = loss_and_gradient(init_mlp(5, 1, 1, 8), ds.subset(Split::Train),
                                    Scheme::SymplecticEuler, 0.1);
  CHECK(lg.value == doctest::Approx(r.report.train_loss[0]).epsilon(1e-13));
  const ad::Parameters before = p;
  AdamWState st;
  adamw_step(p, lg.gradient, st, {}, 1);
  // the output bias never receives a gradient, the hidden weights always do
  CHECK(p[0] != before[0]);
  CHECK(p.back() == before.back());
}

TEST_CASE("training keeps the best test-loss checkpoint") {
  const Dataset ds = generate_dataset(spring(), 0.2, 64, 2);
  TrainConfig cfg;
  cfg.epochs = 300;
  cfg.width = 12;
  cfg.seed = 1;
  int calls = 0;
  cfg.on_epoch = [&](int, double, double) { ++calls; };
  const TrainResult r = train(ds, cfg);
  CHECK(calls == 300);
  const auto& t = r.report.test_loss;
  const auto best = std::min_element(t.begin(), t.end());
  CHECK(r.report.best_test_loss == *best);
  CHECK(r.report.best_epoch == static_cast<int>(best - t.begin()));
  CHECK(loss(r.model.params, ds.subset(Split::Test), Scheme::SymplecticEuler, 0.2) ==
        doctest::Approx(*best).epsilon(1e-12));
  CHECK(r.model.h == 0.2);
  CHECK(r.model.system == "spring");

  const TrainResult again = train(ds, cfg);
  CHECK(again.report.train_loss == r.report.train_loss);
  CHECK(again.model.params == r.model.params);

  std::ostringstream os;
  write_train_report(os, r.report);
  CHECK(os.str().rfind("epoch,train_loss,test_loss\n0,", 0) == 0);
}

TEST_CASE("chunked evaluation agrees with one tape") {
  const Dataset ds = generate_dataset(pendulum(), 0.1, 50, 6);
  TrainConfig cfg;
  cfg.epochs = 20;
  cfg.width = 8;
  TrainConfig chunked = cfg;
  chunked.chunk_size = 7;
  const auto a = train(ds, cfg);
  const auto b = train(ds, chunked);
  for (std::size_t i = 0; i < a.report.train_loss.size(); ++i) {
    CHECK(a.report.train_loss[i] == doctest::Approx(b.report.train_loss[i]).epsilon(1e-12));
  }
}

TEST_CASE("test loss decreases over training for several seeds") {
  const Dataset ds = generate_dataset(spring(), 0.1, 128, 11);
  for (std::uint64_t seed : {0, 1, 2}) {
    TrainConfig cfg;
    cfg.epochs = 2001;
    cfg.width = 16;
    cfg.seed = seed;
    const auto r = train(ds, cfg);
    CHECK(r.report.test_loss[2000] < r.report.test_loss[100]);
  }
}

TEST_CASE("divergence aborts with a diagnostic") {
  Dataset ds = generate_dataset(spring(), 0.1, 10, 1);
  ds.pairs[0].y1 = Eigen::Vector2d(1e200, 0.0);
  ds.split[0] = Split::Train;
  TrainConfig cfg;
  cfg.epochs = 3;
  cfg.width = 4;
  try {
    train(ds, cfg);
    FAIL("expected divergence");
  } catch (const TrainingDiverged& e) {
    CHECK(std::string(e.what()).find("epoch 0") != std::string::npos);
  }
}

TEST_CASE("training preconditions") {
  const Dataset ds = generate_dataset(spring(), 0.1, 10, 1);
  TrainConfig cfg;
  cfg.epochs = 0;
  CHECK_THROWS_AS(train(ds, cfg), InvalidArgument);
  cfg.epochs = 1;
  cfg.optimizer.learning_rate = 0.0;
  CHECK_THROWS_AS(train(ds, cfg), InvalidArgument);
}
