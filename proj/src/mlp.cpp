#include "shnn/mlp.hpp"

#include <bit>
#include <cmath>
#include <cstring>
#include <random>
#include <string>

namespace shnn {

PhaseVector apply_inverse_symplectic(const Eigen::VectorXd& gradient) {
  const Eigen::Index n = gradient.size() / 2;
  PhaseVector v(gradient.size());
  v.head(n) = -gradient.tail(n);
  v.tail(n) = gradient.head(n);
  return v;
}

MlpParams::MlpParams(int n_dim, int depth, int width, std::vector<DenseLayer> layers)
    : n_dim_(n_dim), depth_(depth), width_(width), layers_(std::move(layers)) {
  validate();
}

void MlpParams::validate() const {
  if (n_dim_ < 1 || depth_ < 1 || width_ < 1) {
    throw InvalidArgument("network dimensions must be positive");
  }
  if (layers_.size() != static_cast<std::size_t>(depth_) + 1) {
    throw InvalidArgument("expected " + std::to_string(depth_ + 1) + " layers");
  }
  Eigen::Index in = 2 * n_dim_;
  for (std::size_t l = 0; l < layers_.size(); ++l) {
    const Eigen::Index out = (l + 1 == layers_.size()) ? 1 : width_;
    const DenseLayer& layer = layers_[l];
    if (layer.weight.rows() != out || layer.weight.cols() != in || layer.bias.size() != out) {
      throw InvalidArgument("layer " + std::to_string(l) + " has inconsistent shape");
    }
    if (!layer.weight.allFinite() || !layer.bias.allFinite()) {
      throw DegenerateInput("layer " + std::to_string(l) + " has non-finite entries");
    }
    in = out;
  }
}

ad::Parameters MlpParams::to_parameters() const {
  ad::Parameters p;
  p.reserve(2 * layers_.size());
  for (const DenseLayer& layer : layers_) {
    p.push_back(layer.weight);
    p.push_back(layer.bias);
  }
  return p;
}

MlpParams MlpParams::from_parameters(int n_dim, int depth, int width,
                                     const ad::Parameters& params) {
  if (params.size() % 2 != 0) throw InvalidArgument("odd number of parameter matrices");
  std::vector<DenseLayer> layers;
  for (std::size_t i = 0; i < params.size(); i += 2) {
    if (params[i + 1].cols() != 1) throw InvalidArgument("bias must be a column");
    layers.push_back({params[i], params[i + 1].col(0)});
  }
  return MlpParams(n_dim, depth, width, std::move(layers));
}

std::vector<ad::Shape> MlpParams::parameter_shapes() const {
  std::vector<ad::Shape> s;
  for (const DenseLayer& layer : layers_) {
    s.push_back({layer.weight.rows(), layer.weight.cols()});
    s.push_back({layer.bias.size(), 1});
  }
  return s;
}

Eigen::Index MlpParams::parameter_count() const {
  Eigen::Index n = 0;
  for (const DenseLayer& layer : layers_) n += layer.weight.size() + layer.bias.size();
  return n;
}

bool operator==(const MlpParams& a, const MlpParams& b) {
  if (a.n_dim_ != b.n_dim_ || a.depth_ != b.depth_ || a.width_ != b.width_) return false;
  for (std::size_t l = 0; l < a.layers_.size(); ++l) {
    if (a.layers_[l].weight != b.layers_[l].weight || a.layers_[l].bias != b.layers_[l].bias) {
      return false;
    }
  }
  return true;
}

MlpParams init_mlp(std::uint64_t seed, int n_dim, int depth, int width) {
  if (n_dim < 1 || depth < 1 || width < 1) {
    throw InvalidArgument("network dimensions must be positive");
  }
  std::mt19937_64 rng(seed);
  std::vector<DenseLayer> layers;
  int in = 2 * n_dim;
  for (int l = 0; l <= depth; ++l) {
    const int out = (l == depth) ? 1 : width;
    const double bound = std::sqrt(6.0 / static_cast<double>(in + out));
    std::uniform_real_distribution<double> dist(-bound, bound);
    DenseLayer layer{Eigen::MatrixXd(out, in), Eigen::VectorXd::Zero(out)};
    // row-major fill order so the draw sequence reads like the layer's rows
    for (int r = 0; r < out; ++r) {
      for (int c = 0; c < in; ++c) layer.weight(r, c) = dist(rng);
    }
    layers.push_back(std::move(layer));
    in = out;
  }
  return MlpParams(n_dim, depth, width, std::move(layers));
}

Eigen::RowVectorXd forward_batch(const MlpParams& params, const Eigen::MatrixXd& ys) {
  if (ys.rows() != params.input_dim()) {
    throw InvalidArgument("state dimension " + std::to_string(ys.rows()) +
                          " does not match network input " +
                          std::to_string(params.input_dim()));
  }
  Eigen::MatrixXd a = ys;
  const auto& layers = params.layers();
  for (std::size_t l = 0; l < layers.size(); ++l) {
    Eigen::MatrixXd z = layers[l].weight * a;
    z.colwise() += layers[l].bias;
    a = (l + 1 == layers.size()) ? z : Eigen::MatrixXd(z.array().tanh().matrix());
  }
  return a.row(0);
}

double forward(const MlpParams& params, const PhaseVector& y) {
  return forward_batch(params, y)(0);
}

ad::Var mlp_graph(std::span<const ad::Var> params, ad::Var y) {
  if (params.size() < 4 || params.size() % 2 != 0) {
    throw InvalidArgument("network needs at least one hidden layer");
  }
  ad::Var a = y;
  const std::size_t n_layers = params.size() / 2;
  for (std::size_t l = 0; l < n_layers; ++l) {
    ad::Var z = ad::affine(params[2 * l], a, params[2 * l + 1]);
    a = (l + 1 == n_layers) ? z : ad::tanh(z);
  }
  return a;
}

ad::Differentiable as_differentiable(const MlpParams& params) {
  ad::Differentiable f;
  f.input_dim = params.input_dim();
  f.param_shapes = params.parameter_shapes();
  f.program = [](ad::Tape&, std::span<const ad::Var> p, ad::Var y) {
    return mlp_graph(p, y);
  };
  return f;
}

Eigen::VectorXd input_gradient(const MlpParams& params, const PhaseVector& y) {
  return ad::value_and_input_gradient(as_differentiable(params), params.to_parameters(), y)
      .gradient;
}

PhaseVector symplectic_gradient(const MlpParams& params, const PhaseVector& y) {
  return apply_inverse_symplectic(input_gradient(params, y));
}

Eigen::MatrixXd input_hessian(const MlpParams& params, const PhaseVector& y) {
  return ad::input_hessian(as_differentiable(params), params.to_parameters(), y);
}

namespace {

void put_f64(std::vector<unsigned char>& out, double v) {
  auto bits = std::bit_cast<std::uint64_t>(v);
  for (int i = 0; i < 8; ++i) out.push_back(static_cast<unsigned char>(bits >> (8 * i)));
}

double get_f64(std::span<const unsigned char> in, std::size_t offset) {
  std::uint64_t bits = 0;
  for (int i = 0; i < 8; ++i) bits |= static_cast<std::uint64_t>(in[offset + i]) << (8 * i);
  return std::bit_cast<double>(bits);
}

}  // namespace

std::vector<unsigned char> serialize_parameters(const MlpParams& params) {
  std::vector<unsigned char> out;
  out.reserve(static_cast<std::size_t>(params.parameter_count()) * 8);
  for (const auto& m : params.to_parameters()) {
    for (Eigen::Index i = 0; i < m.size(); ++i) put_f64(out, m.data()[i]);
  }
  return out;
}

MlpParams deserialize_parameters(int n_dim, int depth, int width,
                                 std::span<const unsigned char> blob) {
  if (n_dim < 1 || depth < 1 || width < 1) {
    throw FormatError("network dimensions must be positive");
  }
  std::vector<ad::Shape> shapes;
  std::size_t count = 0;
  Eigen::Index in = 2 * n_dim;
  for (int l = 0; l <= depth; ++l) {
    const Eigen::Index out = (l == depth) ? 1 : width;
    shapes.push_back({out, in});
    shapes.push_back({out, 1});
    count += static_cast<std::size_t>(out * in + out);
    in = out;
  }
  const std::size_t expected = count * 8;
  if (blob.size() != expected) {
    throw FormatError("parameter blob has " + std::to_string(blob.size()) +
                      " bytes, expected " + std::to_string(expected));
  }
  ad::Parameters params;
  std::size_t off = 0;
  for (const ad::Shape& s : shapes) {
    Eigen::MatrixXd m(s.rows, s.cols);
    for (Eigen::Index i = 0; i < m.size(); ++i, off += 8) m.data()[i] = get_f64(blob, off);
    params.push_back(std::move(m));
  }
  return MlpParams::from_parameters(n_dim, depth, width, params);
}

}  // namespace shnn
