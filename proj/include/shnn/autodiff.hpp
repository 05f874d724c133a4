#pragma once

// Reverse-mode differentiation over a tape of dense matrices.
//
// Every node holds an Eigen matrix whose columns are independent samples, so
// one tape evaluates a whole batch. A backward sweep can either produce plain
// matrices or record itself onto the same tape ("graph mode"); the recorded
// gradient can then be differentiated once more. That single extra level is
// all the training loss (parameter gradient of an input gradient) and the
// input Hessian require, and deeper nesting is rejected.

#include <cstdint>
#include <deque>
#include <functional>
#include <span>
#include <vector>

#include <Eigen/Dense>

#include "shnn/error.hpp"

namespace shnn::ad {

using Matrix = Eigen::MatrixXd;
using Vector = Eigen::VectorXd;

class Tape;

/// Handle to a node on a tape. Cheap to copy; only valid while its tape lives.
class Var {
 public:
  Var() = default;
  Var(Tape* tape, std::int32_t id) : tape_(tape), id_(id) {}

  [[nodiscard]] Tape& tape() const { return *tape_; }
  [[nodiscard]] std::int32_t id() const { return id_; }
  [[nodiscard]] bool valid() const { return tape_ != nullptr; }
  [[nodiscard]] const Matrix& value() const;
  [[nodiscard]] Eigen::Index rows() const { return value().rows(); }
  [[nodiscard]] Eigen::Index cols() const { return value().cols(); }

 private:
  Tape* tape_ = nullptr;
  std::int32_t id_ = -1;
};

enum class Op : std::uint8_t {
  Leaf,
  Affine,         // W X + b 1^T
  MatMul,         // A B
  MatMulTN,       // A^T B
  MatMulNT,       // A B^T
  Add,
  Sub,
  Scale,          // c A
  Hadamard,       // A .* B
  Tanh,
  TanhDeriv,      // 1 - A.^2
  Square,         // A.^2
  SumAll,         // -> 1x1
  RowSum,         // -> r x 1
  ColSum,         // -> 1 x c
  BroadcastAll,   // 1x1 -> r x c
  BroadcastCols,  // r x 1 -> r x c
  BroadcastRows,  // 1 x c -> r x c
  RowBlock,       // rows [start, start+count)
  PadRows,        // embed into zero rows
  ConcatRows,
};

class Tape {
 public:
  Tape() = default;
  Tape(const Tape&) = delete;
  Tape& operator=(const Tape&) = delete;

  /// Records a leaf. Non-finite entries are rejected.
  Var leaf(Matrix value);

  [[nodiscard]] const Matrix& value(Var v) const { return node(v).value; }
  /// 0 for ordinary nodes, 1 for nodes that depend on a recorded gradient.
  [[nodiscard]] int depth(Var v) const { return node(v).depth; }
  [[nodiscard]] std::size_t size() const { return nodes_.size(); }

  /// d<seed, out>/d wrt as plain matrices. `seed` defaults to all ones with
  /// the shape of `out`. Nodes of any depth may be swept in this mode.
  std::vector<Matrix> gradient(Var out, std::span<const Var> wrt,
                               const Matrix* seed = nullptr);

  /// Same as gradient(), but the result is recorded on this tape so it can
  /// be differentiated again. Throws UnsupportedOperation when `out` already
  /// depends on a recorded gradient.
  std::vector<Var> gradient_graph(Var out, std::span<const Var> wrt,
                                  const Matrix* seed = nullptr);

  // Node construction; prefer the free functions below.
  Var record(Op op, Matrix value, std::int32_t a, std::int32_t b = -1,
             std::int32_t c = -1, double scalar = 0.0, Eigen::Index i0 = 0,
             Eigen::Index i1 = 0);

 private:
  struct Node {
    Matrix value;
    Op op = Op::Leaf;
    std::int32_t in[3] = {-1, -1, -1};
    double scalar = 0.0;
    Eigen::Index i0 = 0;
    Eigen::Index i1 = 0;
    int depth = 0;
  };

  template <class Policy>
  friend class Sweep;

  const Node& node(Var v) const;
  std::vector<char> needs_gradient(std::int32_t out,
                                   std::span<const Var> wrt) const;
  Var leaf_at_depth(Matrix value, int depth);

  // deque keeps references stable while graph-mode sweeps append nodes
  std::deque<Node> nodes_;
};

// Primitives. Operands must live on the same tape.
Var affine(Var weight, Var x, Var bias);
Var matmul(Var a, Var b);
Var matmul_tn(Var a, Var b);
Var matmul_nt(Var a, Var b);
Var operator+(Var a, Var b);
Var operator-(Var a, Var b);
Var operator*(double c, Var a);
Var operator-(Var a);
Var hadamard(Var a, Var b);
Var tanh(Var a);
Var tanh_deriv(Var a);
Var square(Var a);
Var sum(Var a);
Var row_sum(Var a);
Var col_sum(Var a);
Var broadcast_all(Var a, Eigen::Index rows, Eigen::Index cols);
Var broadcast_cols(Var a, Eigen::Index cols);
Var broadcast_rows(Var a, Eigen::Index rows);
Var row_block(Var a, Eigen::Index start, Eigen::Index count);
Var pad_rows(Var a, Eigen::Index start, Eigen::Index total_rows);
Var concat_rows(Var a, Var b);
/// Column-wise inner products, 1 x c.
Var dot(Var a, Var b);
/// Sum of squares of all entries, 1 x 1.
Var squared_norm(Var a);

/// Graph-mode gradient of `out` (seeded with ones) with respect to `y`.
Var input_gradient(Var out, Var y);

// ---------------------------------------------------------------------------
// Function-level interface.

using Parameters = std::vector<Matrix>;

struct Shape {
  Eigen::Index rows = 0;
  Eigen::Index cols = 0;
  friend bool operator==(const Shape&, const Shape&) = default;
};

/// A scalar program y -> f(y; params). `program` receives a d x B batch and
/// must return a 1 x B row whose column j only depends on column j of y.
struct Differentiable {
  Eigen::Index input_dim = 0;
  std::vector<Shape> param_shapes;
  std::function<Var(Tape&, std::span<const Var> params, Var y)> program;
};

/// A scalar loss of the parameters; may call input_gradient() internally.
using LossProgram = std::function<Var(Tape&, std::span<const Var> params)>;

struct ValueAndGradient {
  double value = 0.0;
  Vector gradient;
};

struct LossAndGradient {
  double value = 0.0;
  Parameters gradient;
};

ValueAndGradient value_and_input_gradient(const Differentiable& f,
                                          const Parameters& params,
                                          const Vector& y);

/// Symmetrized d x d Hessian with respect to the input.
Matrix input_hessian(const Differentiable& f, const Parameters& params,
                     const Vector& y);

/// Hessian before symmetrization, for diagnostics.
Matrix input_hessian_raw(const Differentiable& f, const Parameters& params,
                         const Vector& y);

LossAndGradient parameter_gradient(const LossProgram& loss,
                                   const Parameters& params);

std::vector<Shape> shapes_of(const Parameters& params);
Vector flatten(const Parameters& params);
Parameters unflatten(std::span<const Shape> shapes, const Vector& flat);

}  // namespace shnn::ad
