#include <doctest.h>

#include <cmath>

#include "shnn/error.hpp"
#include "shnn/mlp.hpp"
#include "support.hpp"

using namespace shnn;
using testing::rel_err;

namespace {

// Independent straight-line evaluator: loops over neurons explicitly.
double reference_forward(const MlpParams& net, const Eigen::VectorXd& y) {
  std::vector<double> a(y.data(), y.data() + y.size());
  const auto& layers = net.layers();
  for (std::size_t l = 0; l < layers.size(); ++l) {
    std::vector<double> z(static_cast<std::size_t>(layers[l].weight.rows()));
    for (Eigen::Index i = 0; i < layers[l].weight.rows(); ++i) {
      double s = layers[l].bias(i);
      for (Eigen::Index j = 0; j < layers[l].weight.cols(); ++j) {
        s += layers[l].weight(i, j) * a[static_cast<std::size_t>(j)];
      }
      z[static_cast<std::size_t>(i)] = (l + 1 == layers.size()) ? s : std::tanh(s);
    }
    a = z;
  }
  return a[0];
}

MlpParams zeros(int n, int depth, int width) {
  MlpParams base = init_mlp(0, n, depth, width);
  auto p = base.to_parameters();
  for (auto& m : p) m.setZero();
  return MlpParams::from_parameters(n, depth, width, p);
}

}  // namespace

TEST_CASE("init is deterministic and Glorot-bounded") {
  const MlpParams a = init_mlp(0, 1, 1, 200);
  const MlpParams b = init_mlp(0, 1, 1, 200);
  CHECK(a == b);
  CHECK_FALSE(a == init_mlp(1, 1, 1, 200));
  for (const auto& layer : a.layers()) {
    const double bound = std::sqrt(6.0 / static_cast<double>(layer.weight.rows() + layer.weight.cols()));
    CHECK(layer.weight.cwiseAbs().maxCoeff() <= bound);
    CHECK(layer.bias.isZero(0.0));
  }
}

TEST_CASE("parameter shapes follow the architecture") {
  const MlpParams a = init_mlp(0, 1, 1, 200);
  const auto s = a.parameter_shapes();
  REQUIRE(s.size() == 4);
  CHECK(s[0] == ad::Shape{200, 2});
  CHECK(s[1] == ad::Shape{200, 1});
  CHECK(s[2] == ad::Shape{1, 200});
  CHECK(s[3] == ad::Shape{1, 1});

  const MlpParams b = init_mlp(0, 2, 3, 600);
  REQUIRE(b.layers().size() == 4);
  CHECK(b.layers()[0].weight.rows() == 600);
  CHECK(b.layers()[0].weight.cols() == 4);
  CHECK(b.layers()[3].weight.rows() == 1);
}

TEST_CASE("init rejects non-positive dimensions") {
  CHECK_THROWS_AS(init_mlp(0, 0, 1, 8), InvalidArgument);
  CHECK_THROWS_AS(init_mlp(0, 1, 0, 8), InvalidArgument);
  CHECK_THROWS_AS(init_mlp(0, 1, 1, 0), InvalidArgument);
}

TEST_CASE("forward pass") {
  const MlpParams z = zeros(1, 2, 5);
  CHECK(forward(z, Eigen::Vector2d(0.3, 7.0)) == 0.0);

  // zero hidden weights: pre-activations vanish and the output is the final bias
  auto p = init_mlp(2, 1, 1, 4).to_parameters();
  p[0].setZero();
  p[3](0, 0) = 1.25;
  const MlpParams c = MlpParams::from_parameters(1, 1, 4, p);
  CHECK(forward(c, Eigen::Vector2d(-0.8, 0.4)) == 1.25);

  std::mt19937_64 rng(9);
  for (int depth : {1, 2, 3}) {
    MlpParams net = init_mlp(static_cast<std::uint64_t>(depth), 2, depth, 7);
    auto q = net.to_parameters();
    for (std::size_t i = 1; i < q.size(); i += 2) q[i] = testing::random_matrix(rng, q[i].rows(), 1);
    net = MlpParams::from_parameters(2, depth, 7, q);
    const Eigen::VectorXd y = testing::random_vector(rng, 4);
    CHECK(std::abs(forward(net, y) - reference_forward(net, y)) <= 1e-12);
  }
  CHECK_THROWS_AS(forward(c, Eigen::Vector3d(1, 2, 3)), InvalidArgument);
}

TEST_CASE("forward is finite on large inputs") {
  const MlpParams net = init_mlp(5, 2, 2, 16);
  std::mt19937_64 rng(5);
  for (int i = 0; i < 50; ++i) {
    Eigen::VectorXd y = testing::random_vector(rng, 4);
    y *= 1e3 / y.norm();
    CHECK(std::isfinite(forward(net, y)));
  }
}

TEST_CASE("symplectic gradient") {
  const MlpParams z = zeros(1, 1, 3);
  CHECK(symplectic_gradient(z, Eigen::Vector2d(0.5, 0.5)).isZero(0.0));

  const MlpParams net = init_mlp(21, 1, 1, 16);
  std::mt19937_64 rng(21);
  for (int i = 0; i < 20; ++i) {
    const Eigen::VectorXd y = testing::random_vector(rng, 2);
    const Eigen::VectorXd g = input_gradient(net, y);
    const Eigen::VectorXd s = symplectic_gradient(net, y);
    CHECK(s(0) == -g(1));
    CHECK(s(1) == g(0));
    const Eigen::VectorXd fd =
        testing::fd_gradient([&](const Eigen::VectorXd& x) { return forward(net, x); }, y);
    CHECK(rel_err(s, Eigen::Vector2d(-fd(1), fd(0))) <= 1e-5);
  }
}

TEST_CASE("symplectic gradient of a quadratic emulator") {
  // 0.5 (p^2 + q^2) is not a tanh network, but J^{-1} applied to its
  // gradient fixes the orientation convention.
  const PhaseVector v = apply_inverse_symplectic(Eigen::Vector2d(1.0, 0.0));
  CHECK(v(0) == 0.0);
  CHECK(v(1) == 1.0);
}

TEST_CASE("serialization round trip") {
  const MlpParams net = init_mlp(8, 2, 2, 9);
  const auto blob = serialize_parameters(net);
  CHECK(blob.size() == static_cast<std::size_t>(net.parameter_count()) * 8);
  const MlpParams back = deserialize_parameters(2, 2, 9, blob);
  CHECK(back == net);
  const Eigen::Vector4d y(0.1, -0.2, 0.3, -0.4);
  CHECK(forward(back, y) == forward(net, y));
  CHECK_THROWS_AS(deserialize_parameters(2, 2, 10, blob), FormatError);
  std::vector<unsigned char> shortened(blob.begin(), blob.end() - 8);
  CHECK_THROWS_AS(deserialize_parameters(2, 2, 9, shortened), FormatError);
}

TEST_CASE("construction validates shapes and finiteness") {
  auto p = init_mlp(1, 1, 1, 4).to_parameters();
  p[0](0, 0) = std::nan("");
  CHECK_THROWS_AS(MlpParams::from_parameters(1, 1, 4, p), DegenerateInput);
  auto q = init_mlp(1, 1, 1, 4).to_parameters();
  CHECK_THROWS_AS(MlpParams::from_parameters(1, 1, 5, q), InvalidArgument);
}
