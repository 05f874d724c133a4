#include <doctest.h>

#include <filesystem>
#include <fstream>
#include <numbers>
#include <sstream>

#include <nlohmann/json.hpp>

#include "shnn/error.hpp"
#include "shnn/evaluation.hpp"
#include "shnn/experiment.hpp"
#include "support.hpp"

using namespace shnn;
namespace fs = std::filesystem;
using std::numbers::pi;

namespace {

std::string slurp(const fs::path& p) {
  std::ifstream in(p);
  std::stringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

}  // namespace

TEST_CASE("measurement region") {
  for (const auto& sys : {spring(), pendulum(), double_pendulum()}) {
    CAPTURE(sys.id);
    const Box m = measure_region(sys);
    CHECK(sys.data_region.volume() / m.volume() == doctest::Approx(std::pow(2.0, sys.n)));
    CHECK((m.center() - sys.data_region.center()).norm() <= 1e-15);
  }
}

TEST_CASE("epsilon of the true Hamiltonian and of shifted copies") {
  const auto sys = pendulum();
  const SystemField h(sys);
  const EvalReport r = epsilon_h(h, sys, 500, 1);
  CHECK(r.mean == 0.0);
  CHECK(r.offset == 0.0);
  CHECK(r.n == 500);
  CHECK(r.system == "pendulum");
  const FunctionField shifted(2, [&](const PhaseVector& y) { return sys.energy(y) + 3.7; });
  const EvalReport s = epsilon_h(shifted, sys, 500, 1);
  CHECK(s.mean <= 1e-12);
  CHECK(s.offset == doctest::Approx(3.7));
  CHECK_THROWS_AS(epsilon_h(h, sys, 5, 1), InvalidArgument);
  CHECK_THROWS_AS(epsilon_h(SystemField(spring()), double_pendulum(), 50, 1), InvalidArgument);
}

TEST_CASE("epsilon of a linear perturbation against brute force") {
  const auto sys = spring();
  const double alpha = 0.3;
  const FunctionField f(2, [&](const PhaseVector& y) { return sys.energy(y) + alpha * y(0); });
  const EvalReport r = epsilon_h(f, sys, 2000, 9);
  // d = alpha p with p uniform on [-a, a]; brute force with an independent stream
  const double a = measure_region(sys).upper(0);
  std::mt19937_64 rng(12345);
  std::uniform_real_distribution<double> u(-a, a);
  const int big = 1'000'000;
  std::vector<double> d(big);
  double mean = 0.0;
  for (auto& x : d) {
    x = alpha * u(rng);
    mean += x;
  }
  mean /= big;
  double acc = 0.0;
  for (double x : d) acc += std::abs(x - mean);
  const double brute = acc / big;
  CHECK(std::abs(r.mean - brute) <= 3.0 * r.sem);
  CHECK(brute == doctest::Approx(alpha * a / 2).epsilon(1e-2));
  CHECK(r.q25 <= r.median);
  CHECK(r.median <= r.q75);

  const EvalReport again = epsilon_h(f, sys, 2000, 9);
  CHECK(again.mean == r.mean);
  CHECK(epsilon_h(f, sys, 2000, 10).mean != r.mean);
}

TEST_CASE("energy gate thresholds") {
  CHECK(energy_gate_threshold(spring()) == doctest::Approx(0.5).epsilon(1e-6));
  CHECK(energy_gate_threshold(pendulum()) == doctest::Approx(2.0).epsilon(1e-6));
  CHECK(pendulum().energy(Eigen::Vector2d(0, 2.5)) < energy_gate_threshold(pendulum()));

  const auto dp = double_pendulum();
  const double t = energy_gate_threshold(dp);
  // lowest boundary point: upper bob inverted at rest, lower bob hanging, H = -2 + 1
  CHECK(t == doctest::Approx(-1.0).epsilon(1e-12));
  CHECK(dp.energy(Eigen::Vector4d(0, 0, 0, pi)) == doctest::Approx(t).epsilon(1e-12));
  std::mt19937_64 rng(3);
  for (int i = 0; i < 200; ++i) {
    Eigen::Vector4d y = testing::random_vector(rng, 4, pi);
    y(i % 4) = (i % 2 ? pi : -pi);
    CHECK(dp.energy(y) >= t - 0.05);
  }
}

TEST_CASE("rollout of the true field has no error") {
  const auto sys = pendulum();
  const SystemField h(sys);
  RolloutOptions opts;
  opts.n_traj = 5;
  opts.t_final = 5.0;
  const RolloutReport r = rollout_mse(h, sys, 0.1, opts, 4);
  REQUIRE(r.times.size() == 51);
  for (double m : r.mse) CHECK(m <= 1e-12);
  CHECK(r.n_traj == 5);
  CHECK(r.threshold == doctest::Approx(2.0).epsilon(1e-6));
  for (const auto& traj : r.true_states) CHECK(sys.energy(traj.front()) < r.threshold);

  opts.n_traj = 1;
  opts.t_final = 0.0;
  const RolloutReport zero = rollout_mse(h, sys, 0.1, opts, 4);
  REQUIRE(zero.mse.size() == 1);
  CHECK(zero.mse[0] == 0.0);

  std::ostringstream os;
  write_rollout_csv(os, r);
  CHECK(os.str().rfind("t,mse,sem\n", 0) == 0);
}

TEST_CASE("rollout error grows for a perturbed field") {
  const auto sys = spring();
  const FunctionField f(2, [](const PhaseVector& y) { return 0.55 * y.squaredNorm(); });
  RolloutOptions opts;
  opts.n_traj = 4;
  opts.t_final = 10.0;
  const RolloutReport r = rollout_mse(f, sys, 0.5, opts, 2);
  CHECK(r.mse.front() == 0.0);
  CHECK(r.mse[4] > r.mse[1]);
  CHECK(r.mse.back() > 1e-3);
}

TEST_CASE("order fits") {
  const std::vector<double> hs{0.1, 0.2, 0.4, 0.8};
  std::vector<double> lin, quad, noisy;
  const double noise[] = {1.05, 0.95, 1.03, 0.98};
  for (std::size_t i = 0; i < hs.size(); ++i) {
    lin.push_back(3.0 * hs[i]);
    quad.push_back(0.5 * hs[i] * hs[i]);
    noisy.push_back(2.0 * std::pow(hs[i], 1.5) * noise[i]);
  }
  CHECK(order_fit(hs, lin).slope == doctest::Approx(1.0));
  CHECK(order_fit(hs, lin).intercept == doctest::Approx(std::log(3.0)));
  CHECK(order_fit(hs, quad).slope == doctest::Approx(2.0));
  const double s = order_fit(hs, noisy).slope;
  CHECK(s >= 1.4);
  CHECK(s <= 1.6);
  const std::vector<double> two{0.1, 0.2};
  CHECK_THROWS_AS(order_fit(two, two), InvalidArgument);
  const std::vector<double> bad{1.0, 0.0, 2.0, 3.0};
  CHECK_THROWS(order_fit(hs, bad));

  const std::vector<double> flat(4, 1e-6);
  CHECK(std::abs(plateau_check(hs, flat)) <= 1e-12);
  CHECK(plateau_check(hs, quad) == doctest::Approx(2.0));
  const std::vector<double> with_zero{1e-6, 0.0, 1e-6, 1e-6};
  CHECK_THROWS_AS(plateau_check(hs, with_zero), DegenerateInput);
}

TEST_CASE("error grid") {
  const auto sys = spring();
  const FunctionField f(2, [&](const PhaseVector& y) { return sys.energy(y) + 0.1 * y(1); });
  std::ostringstream os;
  write_error_grid(os, f, sys, 5, 0.0);
  const std::string csv = os.str();
  CHECK(csv.rfind("p,q,error\n", 0) == 0);
  CHECK(std::count(csv.begin(), csv.end(), '\n') == 26);
  std::ostringstream dp;
  CHECK_THROWS_AS(write_error_grid(dp, SystemField(double_pendulum()), double_pendulum(), 4, 0.0),
                  UnsupportedOperation);
}

TEST_CASE("experiment sizes") {
  const CellSizes s = paper_scale_sizes("spring", 0.1);
  CHECK(s.depth == 2);
  CHECK(s.width == 200);
  CHECK(s.k == 4000);
  CHECK(s.epochs == 5000);
  CHECK(paper_scale_sizes("pendulum", 0.4).k == 2000);
  CHECK(paper_scale_sizes("double_pendulum", 0.05).width == 600);
  CHECK_THROWS_AS(paper_scale_sizes("kepler", 0.1), InvalidArgument);

  ExperimentConfig cfg = parse_experiment_config(R"({"system": "pendulum", "paper_scale": true,
      "h": [0.05, 0.2], "schemes": ["implicit-midpoint"]})");
  CHECK(cfg.sizes(0.05).depth == 3);
  CHECK(cfg.sizes(0.2).k == 2000);
  CHECK(cfg.t_final() == 100.0);
  cfg = parse_experiment_config(R"({"system": "spring", "K": 30, "epochs": 7})");
  CHECK(cfg.sizes(0.1).k == 30);
  CHECK(cfg.sizes(0.1).epochs == 7);
  CHECK(cfg.sizes(0.1).width == desk_scale_sizes("spring").width);

  CHECK_THROWS_AS(parse_experiment_config("{"), FormatError);
  CHECK_THROWS_AS(parse_experiment_config("[1]"), FormatError);
  CHECK_THROWS_AS(parse_experiment_config(R"({"system": "spring", "h": [-0.1]})"), InvalidArgument);
  CHECK_THROWS_AS(parse_experiment_config(R"({"system": "spring", "schemes": ["rk4"]})"),
                  InvalidArgument);
  CHECK_THROWS_AS(parse_experiment_config(R"({"h": [0.1]})"), FormatError);
}

TEST_CASE("shipped configs parse") {
  int count = 0;
  for (const auto& entry : fs::directory_iterator(SHNN_CONFIG_DIR)) {
    if (entry.path().extension() != ".json") continue;
    CAPTURE(entry.path().string());
    const ExperimentConfig cfg = load_experiment_config(entry.path());
    CHECK_NOTHROW(system_by_id(cfg.system));
    ++count;
  }
  CHECK(count >= 6);
}

TEST_CASE("experiment run writes every artifact deterministically") {
  const std::string text = R"({"system": "spring", "schemes": ["symplectic-euler", "implicit-midpoint"],
      "h": [0.1, 0.2, 0.4], "seeds": [0], "K": 20, "L": 1, "M": 4, "epochs": 5,
      "corrections": ["none", "se_order2", "mp_order4"], "eps_samples": 50,
      "rollout": {"n_traj": 2, "t_final": 1.0}, "error_grid": 4})";
  const ExperimentConfig cfg = parse_experiment_config(text);
  const fs::path a = fs::temp_directory_path() / "shnn_exp_a";
  const fs::path b = fs::temp_directory_path() / "shnn_exp_b";
  fs::remove_all(a);
  fs::remove_all(b);
  const ExperimentResult ra = run_experiment(cfg, a);
  const ExperimentResult rb = run_experiment(cfg, b);
  // two schemes x three h, each with one compatible correction beyond none
  CHECK(ra.rows.size() == 12);
  for (const char* f : {"summary.csv", "summary.csv.json", "order_fits.csv", "metadata.json",
                        "data_h0.1.csv", "losses_symplectic-euler_h0.2_seed0.csv",
                        "losses_symplectic-euler_h0.2_seed0.csv.json"}) {
    CAPTURE(f);
    CHECK(fs::exists(a / f));
  }
  for (const auto& p : ra.files) CHECK(fs::exists(p));
  CHECK(slurp(a / "summary.csv") == slurp(b / "summary.csv"));
  CHECK(slurp(a / "order_fits.csv") == slurp(b / "order_fits.csv"));

  const auto meta = nlohmann::json::parse(slurp(a / "metadata.json"));
  CHECK(meta["format"] == "shnn-experiment/1");
  CHECK(meta["cells"].size() == 3);
  CHECK(meta["cells"][0]["sizes"]["K"] == 20);

  const std::string fits = slurp(a / "order_fits.csv");
  CHECK(fits.find("eps_h,implicit-midpoint,mp_order4,0,") != std::string::npos);
  fs::remove_all(a);
  fs::remove_all(b);
}

TEST_CASE("experiment failures name their stage") {
  ExperimentConfig cfg;
  cfg.system = "kepler";
  try {
    run_experiment(cfg, fs::temp_directory_path() / "shnn_exp_fail");
    FAIL("expected a stage error");
  } catch (const StageError& e) {
    CHECK(e.stage() == "setup");
    CHECK(e.kind() == ErrorKind::InvalidArgument);
  }
  fs::remove_all(fs::temp_directory_path() / "shnn_exp_fail");
}
