#pragma once

#include <cstdint>
#include <span>
#include <vector>

#include <Eigen/Dense>

#include "shnn/autodiff.hpp"

namespace shnn {

/// A phase-space point y = (p_1..p_n, q_1..q_n).
using PhaseVector = Eigen::VectorXd;

inline auto momenta(const PhaseVector& y) { return y.head(y.size() / 2); }
inline auto positions(const PhaseVector& y) { return y.tail(y.size() / 2); }

/// Applies J^{-1} to a gradient: (g_p, g_q) -> (-g_q, g_p).
PhaseVector apply_inverse_symplectic(const Eigen::VectorXd& gradient);

struct DenseLayer {
  Eigen::MatrixXd weight;  // out x in
  Eigen::VectorXd bias;    // out
};

/// Parameters of the scalar network R^{2n} -> R with `depth` tanh hidden
/// layers of `width` neurons and an affine output layer.
class MlpParams {
 public:
  MlpParams() = default;
  MlpParams(int n_dim, int depth, int width, std::vector<DenseLayer> layers);

  [[nodiscard]] int n_dim() const { return n_dim_; }
  [[nodiscard]] int input_dim() const { return 2 * n_dim_; }
  [[nodiscard]] int depth() const { return depth_; }
  [[nodiscard]] int width() const { return width_; }
  [[nodiscard]] const std::vector<DenseLayer>& layers() const { return layers_; }

  /// Weight/bias matrices in layer order: W_1, b_1, ..., W_out, b_out.
  [[nodiscard]] ad::Parameters to_parameters() const;
  static MlpParams from_parameters(int n_dim, int depth, int width,
                                   const ad::Parameters& params);
  [[nodiscard]] std::vector<ad::Shape> parameter_shapes() const;
  [[nodiscard]] Eigen::Index parameter_count() const;

  friend bool operator==(const MlpParams& a, const MlpParams& b);

 private:
  void validate() const;

  int n_dim_ = 0;
  int depth_ = 0;
  int width_ = 0;
  std::vector<DenseLayer> layers_;
};

/// Glorot-uniform weights, zero biases. Deterministic in `seed`.
MlpParams init_mlp(std::uint64_t seed, int n_dim, int depth, int width);

double forward(const MlpParams& params, const PhaseVector& y);

/// Forward pass over the columns of `ys` (2n x B); returns a row of B values.
Eigen::RowVectorXd forward_batch(const MlpParams& params, const Eigen::MatrixXd& ys);

/// Records the network on a tape. `params` follows to_parameters() order.
ad::Var mlp_graph(std::span<const ad::Var> params, ad::Var y);

/// The network as a program for the differentiation engine.
ad::Differentiable as_differentiable(const MlpParams& params);

Eigen::VectorXd input_gradient(const MlpParams& params, const PhaseVector& y);

/// J^{-1} grad H(y) = (-grad_q H, grad_p H).
PhaseVector symplectic_gradient(const MlpParams& params, const PhaseVector& y);

Eigen::MatrixXd input_hessian(const MlpParams& params, const PhaseVector& y);

// Flat float64 little-endian blob of to_parameters(), column-major per matrix.
std::vector<unsigned char> serialize_parameters(const MlpParams& params);
MlpParams deserialize_parameters(int n_dim, int depth, int width,
                                 std::span<const unsigned char> blob);

}  // namespace shnn
