#include "shnn/autodiff.hpp"

#include <algorithm>
#include <optional>
#include <sstream>
#include <string>

namespace shnn::ad {

namespace {

std::string shape_str(const Matrix& m) {
  std::ostringstream os;
  os << m.rows() << "x" << m.cols();
  return os.str();
}

void require_same_shape(const char* op, const Matrix& a, const Matrix& b) {
  if (a.rows() != b.rows() || a.cols() != b.cols()) {
    throw InvalidArgument(std::string(op) + ": shape mismatch " +
                          shape_str(a) + " vs " + shape_str(b));
  }
}

void require_same_tape(const Var& a, const Var& b) {
  if (&a.tape() != &b.tape()) {
    throw InvalidArgument("operands recorded on different tapes");
  }
}

}  // namespace

const Matrix& Var::value() const { return tape_->value(*this); }

const Tape::Node& Tape::node(Var v) const {
  if (v.id() < 0 || static_cast<std::size_t>(v.id()) >= nodes_.size()) {
    throw InvalidArgument("variable does not belong to this tape");
  }
  return nodes_[static_cast<std::size_t>(v.id())];
}

Var Tape::leaf_at_depth(Matrix value, int depth) {
  if (!value.allFinite()) {
    throw DegenerateInput("non-finite value passed to the differentiation tape");
  }
  Node n;
  n.value = std::move(value);
  n.depth = depth;
  nodes_.push_back(std::move(n));
  return {this, static_cast<std::int32_t>(nodes_.size() - 1)};
}

Var Tape::leaf(Matrix value) { return leaf_at_depth(std::move(value), 0); }

Var Tape::record(Op op, Matrix value, std::int32_t a, std::int32_t b,
                 std::int32_t c, double scalar, Eigen::Index i0,
                 Eigen::Index i1) {
  Node n;
  n.value = std::move(value);
  n.op = op;
  n.in[0] = a;
  n.in[1] = b;
  n.in[2] = c;
  n.scalar = scalar;
  n.i0 = i0;
  n.i1 = i1;
  for (std::int32_t p : n.in) {
    if (p >= 0) n.depth = std::max(n.depth, nodes_[static_cast<std::size_t>(p)].depth);
  }
  nodes_.push_back(std::move(n));
  return {this, static_cast<std::int32_t>(nodes_.size() - 1)};
}

std::vector<char> Tape::needs_gradient(std::int32_t out,
                                       std::span<const Var> wrt) const {
  std::vector<char> needs(static_cast<std::size_t>(out) + 1, 0);
  for (const Var& w : wrt) {
    if (&w.tape() != this) throw InvalidArgument("wrt variable from another tape");
    if (w.id() <= out) needs[static_cast<std::size_t>(w.id())] = 1;
  }
  for (std::int32_t i = 0; i <= out; ++i) {
    const Node& n = nodes_[static_cast<std::size_t>(i)];
    if (n.op == Op::Leaf) continue;
    for (std::int32_t p : n.in) {
      if (p >= 0 && needs[static_cast<std::size_t>(p)]) {
        needs[static_cast<std::size_t>(i)] = 1;
        break;
      }
    }
  }
  return needs;
}

// ---------------------------------------------------------------------------
// Vector-Jacobian products, written once for both sweep modes.

struct ValuePolicy {
  using T = Matrix;
  Tape* tape;

  const Matrix& node_value(std::int32_t id) const { return tape->value(Var(tape, id)); }
  const Matrix& operand(std::int32_t id) const { return node_value(id); }

  static Matrix mm(const Matrix& a, const Matrix& b) { return a * b; }
  static Matrix mm_tn(const Matrix& a, const Matrix& b) { return a.transpose() * b; }
  static Matrix mm_nt(const Matrix& a, const Matrix& b) { return a * b.transpose(); }
  static Matrix add(const Matrix& a, const Matrix& b) { return a + b; }
  static Matrix scale(double c, const Matrix& a) { return c * a; }
  static Matrix had(const Matrix& a, const Matrix& b) { return a.cwiseProduct(b); }
  static Matrix tanh_d(const Matrix& a) {
    return (1.0 - a.array().square()).matrix();
  }
  static Matrix sum_all(const Matrix& a) { return Matrix::Constant(1, 1, a.sum()); }
  static Matrix row_sum(const Matrix& a) { return a.rowwise().sum(); }
  static Matrix col_sum(const Matrix& a) { return a.colwise().sum(); }
  static Matrix bc_all(const Matrix& a, Eigen::Index r, Eigen::Index c) {
    return Matrix::Constant(r, c, a(0, 0));
  }
  static Matrix bc_cols(const Matrix& a, Eigen::Index c) { return a.replicate(1, c); }
  static Matrix bc_rows(const Matrix& a, Eigen::Index r) { return a.replicate(r, 1); }
  static Matrix block(const Matrix& a, Eigen::Index s, Eigen::Index k) {
    return a.middleRows(s, k);
  }
  static Matrix pad(const Matrix& a, Eigen::Index s, Eigen::Index total) {
    Matrix m = Matrix::Zero(total, a.cols());
    m.middleRows(s, a.rows()) = a;
    return m;
  }
  static void accumulate(std::optional<Matrix>& slot, Matrix g) {
    if (slot) {
      *slot += g;
    } else {
      slot = std::move(g);
    }
  }
};

struct GraphPolicy {
  using T = Var;
  Tape* tape;

  const Matrix& node_value(std::int32_t id) const { return tape->value(Var(tape, id)); }
  Var operand(std::int32_t id) const { return {tape, id}; }

  static Var mm(Var a, Var b) { return matmul(a, b); }
  static Var mm_tn(Var a, Var b) { return matmul_tn(a, b); }
  static Var mm_nt(Var a, Var b) { return matmul_nt(a, b); }
  static Var add(Var a, Var b) { return a + b; }
  static Var scale(double c, Var a) { return c * a; }
  static Var had(Var a, Var b) { return hadamard(a, b); }
  static Var tanh_d(Var a) { return tanh_deriv(a); }
  static Var sum_all(Var a) { return sum(a); }
  static Var row_sum(Var a) { return ad::row_sum(a); }
  static Var col_sum(Var a) { return ad::col_sum(a); }
  static Var bc_all(Var a, Eigen::Index r, Eigen::Index c) { return broadcast_all(a, r, c); }
  static Var bc_cols(Var a, Eigen::Index c) { return broadcast_cols(a, c); }
  static Var bc_rows(Var a, Eigen::Index r) { return broadcast_rows(a, r); }
  static Var block(Var a, Eigen::Index s, Eigen::Index k) { return row_block(a, s, k); }
  static Var pad(Var a, Eigen::Index s, Eigen::Index total) { return pad_rows(a, s, total); }
  static void accumulate(std::optional<Var>& slot, Var g) {
    if (slot) {
      slot = *slot + g;
    } else {
      slot = g;
    }
  }
};

template <class Policy>
class Sweep {
 public:
  using T = typename Policy::T;

  Sweep(Tape& tape, Policy policy) : tape_(tape), pol_(policy) {}

  std::vector<std::optional<T>> run(std::int32_t out, std::span<const Var> wrt,
                                    T seed) {
    const auto needs = tape_.needs_gradient(out, wrt);
    std::vector<std::optional<T>> grads(static_cast<std::size_t>(out) + 1);
    grads[static_cast<std::size_t>(out)] = std::move(seed);

    for (std::int32_t i = out; i >= 0; --i) {
      auto& slot = grads[static_cast<std::size_t>(i)];
      if (!slot || !needs[static_cast<std::size_t>(i)]) continue;
      const Tape::Node& n = tape_.nodes_[static_cast<std::size_t>(i)];
      if (n.op == Op::Leaf) continue;
      backprop(i, n, *slot, needs, grads);
      slot.reset();
    }
    return grads;
  }

 private:
  void backprop(std::int32_t self, const Tape::Node& n, const T& g,
                const std::vector<char>& needs,
                std::vector<std::optional<T>>& grads) {
    const std::int32_t a = n.in[0];
    const std::int32_t b = n.in[1];
    const std::int32_t c = n.in[2];
    auto want = [&](std::int32_t p) {
      return p >= 0 && needs[static_cast<std::size_t>(p)] != 0;
    };
    auto acc = [&](std::int32_t p, T v) {
      Policy::accumulate(grads[static_cast<std::size_t>(p)], std::move(v));
    };
    const auto rows_of = [&](std::int32_t p) { return pol_.node_value(p).rows(); };
    const auto cols_of = [&](std::int32_t p) { return pol_.node_value(p).cols(); };

    switch (n.op) {
      case Op::Leaf:
        break;
      case Op::Affine:  // W X + b
        if (want(a)) acc(a, Policy::mm_nt(g, pol_.operand(b)));
        if (want(b)) acc(b, Policy::mm_tn(pol_.operand(a), g));
        if (want(c)) acc(c, Policy::row_sum(g));
        break;
      case Op::MatMul:
        if (want(a)) acc(a, Policy::mm_nt(g, pol_.operand(b)));
        if (want(b)) acc(b, Policy::mm_tn(pol_.operand(a), g));
        break;
      case Op::MatMulTN:  // A^T B
        if (want(a)) acc(a, Policy::mm_nt(pol_.operand(b), g));
        if (want(b)) acc(b, Policy::mm(pol_.operand(a), g));
        break;
      case Op::MatMulNT:  // A B^T
        if (want(a)) acc(a, Policy::mm(g, pol_.operand(b)));
        if (want(b)) acc(b, Policy::mm_tn(g, pol_.operand(a)));
        break;
      case Op::Add:
        if (want(a)) acc(a, T(g));
        if (want(b)) acc(b, T(g));
        break;
      case Op::Sub:
        if (want(a)) acc(a, T(g));
        if (want(b)) acc(b, Policy::scale(-1.0, g));
        break;
      case Op::Scale:
        if (want(a)) acc(a, Policy::scale(n.scalar, g));
        break;
      case Op::Hadamard:
        if (want(a)) acc(a, Policy::had(g, pol_.operand(b)));
        if (want(b)) acc(b, Policy::had(g, pol_.operand(a)));
        break;
      case Op::Tanh:
        if (want(a)) acc(a, Policy::had(g, Policy::tanh_d(pol_.operand(self))));
        break;
      case Op::TanhDeriv:
        if (want(a)) acc(a, Policy::scale(-2.0, Policy::had(g, pol_.operand(a))));
        break;
      case Op::Square:
        if (want(a)) acc(a, Policy::scale(2.0, Policy::had(g, pol_.operand(a))));
        break;
      case Op::SumAll:
        if (want(a)) acc(a, Policy::bc_all(g, rows_of(a), cols_of(a)));
        break;
      case Op::RowSum:
        if (want(a)) acc(a, Policy::bc_cols(g, cols_of(a)));
        break;
      case Op::ColSum:
        if (want(a)) acc(a, Policy::bc_rows(g, rows_of(a)));
        break;
      case Op::BroadcastAll:
        if (want(a)) acc(a, Policy::sum_all(g));
        break;
      case Op::BroadcastCols:
        if (want(a)) acc(a, Policy::row_sum(g));
        break;
      case Op::BroadcastRows:
        if (want(a)) acc(a, Policy::col_sum(g));
        break;
      case Op::RowBlock:
        if (want(a)) acc(a, Policy::pad(g, n.i0, rows_of(a)));
        break;
      case Op::PadRows:
        if (want(a)) acc(a, Policy::block(g, n.i0, rows_of(a)));
        break;
      case Op::ConcatRows:
        if (want(a)) acc(a, Policy::block(g, 0, rows_of(a)));
        if (want(b)) acc(b, Policy::block(g, rows_of(a), rows_of(b)));
        break;
    }
  }

  Tape& tape_;
  Policy pol_;
};

std::vector<Matrix> Tape::gradient(Var out, std::span<const Var> wrt,
                                   const Matrix* seed) {
  const Matrix& ov = node(out).value;
  Matrix s = seed ? *seed : Matrix::Ones(ov.rows(), ov.cols());
  require_same_shape("gradient seed", s, ov);
  Sweep<ValuePolicy> sweep(*this, ValuePolicy{this});
  auto grads = sweep.run(out.id(), wrt, std::move(s));
  std::vector<Matrix> result;
  result.reserve(wrt.size());
  for (const Var& w : wrt) {
    const auto id = static_cast<std::size_t>(w.id());
    if (id < grads.size() && grads[id]) {
      result.push_back(*grads[id]);
    } else {
      const Matrix& wv = value(w);
      result.push_back(Matrix::Zero(wv.rows(), wv.cols()));
    }
  }
  return result;
}

std::vector<Var> Tape::gradient_graph(Var out, std::span<const Var> wrt,
                                      const Matrix* seed) {
  const int d = node(out).depth;
  if (d >= 1) {
    throw UnsupportedOperation(
        "differentiation nested deeper than one level is not supported");
  }
  const Matrix& ov = node(out).value;
  Matrix s = seed ? *seed : Matrix::Ones(ov.rows(), ov.cols());
  require_same_shape("gradient seed", s, ov);
  Var seed_var = leaf_at_depth(std::move(s), d + 1);
  Sweep<GraphPolicy> sweep(*this, GraphPolicy{this});
  auto grads = sweep.run(out.id(), wrt, seed_var);
  std::vector<Var> result;
  result.reserve(wrt.size());
  for (const Var& w : wrt) {
    const auto id = static_cast<std::size_t>(w.id());
    if (id < grads.size() && grads[id]) {
      result.push_back(*grads[id]);
    } else {
      const Matrix& wv = value(w);
      result.push_back(leaf_at_depth(Matrix::Zero(wv.rows(), wv.cols()), d + 1));
    }
  }
  return result;
}

// ---------------------------------------------------------------------------
// Primitives.

Var affine(Var w, Var x, Var b) {
  require_same_tape(w, x);
  require_same_tape(w, b);
  const Matrix& W = w.value();
  const Matrix& X = x.value();
  const Matrix& B = b.value();
  if (W.cols() != X.rows() || B.rows() != W.rows() || B.cols() != 1) {
    throw InvalidArgument("affine: incompatible shapes W " + shape_str(W) +
                          ", x " + shape_str(X) + ", b " + shape_str(B));
  }
  Matrix out = W * X;
  out.colwise() += B.col(0);
  return w.tape().record(Op::Affine, std::move(out), w.id(), x.id(), b.id());
}

Var matmul(Var a, Var b) {
  require_same_tape(a, b);
  if (a.cols() != b.rows()) {
    throw InvalidArgument("matmul: " + shape_str(a.value()) + " * " + shape_str(b.value()));
  }
  return a.tape().record(Op::MatMul, a.value() * b.value(), a.id(), b.id());
}

Var matmul_tn(Var a, Var b) {
  require_same_tape(a, b);
  if (a.rows() != b.rows()) {
    throw InvalidArgument("matmul_tn: " + shape_str(a.value()) + "^T * " +
                          shape_str(b.value()));
  }
  return a.tape().record(Op::MatMulTN, a.value().transpose() * b.value(), a.id(), b.id());
}

Var matmul_nt(Var a, Var b) {
  require_same_tape(a, b);
  if (a.cols() != b.cols()) {
    throw InvalidArgument("matmul_nt: " + shape_str(a.value()) + " * " +
                          shape_str(b.value()) + "^T");
  }
  return a.tape().record(Op::MatMulNT, a.value() * b.value().transpose(), a.id(), b.id());
}

Var operator+(Var a, Var b) {
  require_same_tape(a, b);
  require_same_shape("add", a.value(), b.value());
  return a.tape().record(Op::Add, a.value() + b.value(), a.id(), b.id());
}

Var operator-(Var a, Var b) {
  require_same_tape(a, b);
  require_same_shape("sub", a.value(), b.value());
  return a.tape().record(Op::Sub, a.value() - b.value(), a.id(), b.id());
}

Var operator*(double c, Var a) {
  return a.tape().record(Op::Scale, c * a.value(), a.id(), -1, -1, c);
}

Var operator-(Var a) { return -1.0 * a; }

Var hadamard(Var a, Var b) {
  require_same_tape(a, b);
  require_same_shape("hadamard", a.value(), b.value());
  return a.tape().record(Op::Hadamard, a.value().cwiseProduct(b.value()), a.id(), b.id());
}

Var tanh(Var a) {
  return a.tape().record(Op::Tanh, a.value().array().tanh().matrix(), a.id());
}

Var tanh_deriv(Var a) {
  return a.tape().record(Op::TanhDeriv, (1.0 - a.value().array().square()).matrix(), a.id());
}

Var square(Var a) {
  return a.tape().record(Op::Square, a.value().array().square().matrix(), a.id());
}

Var sum(Var a) {
  return a.tape().record(Op::SumAll, Matrix::Constant(1, 1, a.value().sum()), a.id());
}

Var row_sum(Var a) {
  return a.tape().record(Op::RowSum, a.value().rowwise().sum(), a.id());
}

Var col_sum(Var a) {
  return a.tape().record(Op::ColSum, a.value().colwise().sum(), a.id());
}

Var broadcast_all(Var a, Eigen::Index rows, Eigen::Index cols) {
  if (a.rows() != 1 || a.cols() != 1) throw InvalidArgument("broadcast_all expects 1x1");
  return a.tape().record(Op::BroadcastAll, Matrix::Constant(rows, cols, a.value()(0, 0)),
                         a.id(), -1, -1, 0.0, rows, cols);
}

Var broadcast_cols(Var a, Eigen::Index cols) {
  if (a.cols() != 1) throw InvalidArgument("broadcast_cols expects a column");
  return a.tape().record(Op::BroadcastCols, a.value().replicate(1, cols), a.id(), -1, -1,
                         0.0, cols);
}

Var broadcast_rows(Var a, Eigen::Index rows) {
  if (a.rows() != 1) throw InvalidArgument("broadcast_rows expects a row");
  return a.tape().record(Op::BroadcastRows, a.value().replicate(rows, 1), a.id(), -1, -1,
                         0.0, rows);
}

Var row_block(Var a, Eigen::Index start, Eigen::Index count) {
  if (start < 0 || count < 0 || start + count > a.rows()) {
    throw InvalidArgument("row_block out of range");
  }
  return a.tape().record(Op::RowBlock, a.value().middleRows(start, count), a.id(), -1, -1,
                         0.0, start, count);
}

Var pad_rows(Var a, Eigen::Index start, Eigen::Index total_rows) {
  if (start < 0 || start + a.rows() > total_rows) {
    throw InvalidArgument("pad_rows out of range");
  }
  Matrix m = Matrix::Zero(total_rows, a.cols());
  m.middleRows(start, a.rows()) = a.value();
  return a.tape().record(Op::PadRows, std::move(m), a.id(), -1, -1, 0.0, start, total_rows);
}

Var concat_rows(Var a, Var b) {
  require_same_tape(a, b);
  if (a.cols() != b.cols()) throw InvalidArgument("concat_rows: column mismatch");
  Matrix m(a.rows() + b.rows(), a.cols());
  m.topRows(a.rows()) = a.value();
  m.bottomRows(b.rows()) = b.value();
  return a.tape().record(Op::ConcatRows, std::move(m), a.id(), b.id());
}

Var dot(Var a, Var b) { return col_sum(hadamard(a, b)); }

Var squared_norm(Var a) { return sum(square(a)); }

Var input_gradient(Var out, Var y) {
  const Var wrt[] = {y};
  return out.tape().gradient_graph(out, wrt).front();
}

// ---------------------------------------------------------------------------

namespace {

std::vector<Var> make_param_leaves(Tape& tape, const Parameters& params) {
  std::vector<Var> vars;
  vars.reserve(params.size());
  for (const Matrix& p : params) vars.push_back(tape.leaf(p));
  return vars;
}

void check_call(const Differentiable& f, const Parameters& params, const Vector& y) {
  if (y.size() != f.input_dim) {
    throw InvalidArgument("input dimension " + std::to_string(y.size()) +
                          " does not match expected " + std::to_string(f.input_dim));
  }
  if (shapes_of(params) != f.param_shapes) {
    throw InvalidArgument("parameter shapes do not match the program");
  }
}

Var evaluate(Tape& tape, const Differentiable& f, std::span<const Var> p, Var y) {
  Var out = f.program(tape, p, y);
  if (out.rows() != 1 || out.cols() != y.cols()) {
    throw InvalidArgument("scalar program must return a 1 x batch row");
  }
  return out;
}

}  // namespace

ValueAndGradient value_and_input_gradient(const Differentiable& f,
                                          const Parameters& params,
                                          const Vector& y) {
  check_call(f, params, y);
  Tape tape;
  auto p = make_param_leaves(tape, params);
  Var yv = tape.leaf(y);
  Var out = evaluate(tape, f, p, yv);
  const Var wrt[] = {yv};
  auto g = tape.gradient(out, wrt);
  return {out.value()(0, 0), g.front().col(0)};
}

Matrix input_hessian_raw(const Differentiable& f, const Parameters& params,
                         const Vector& y) {
  check_call(f, params, y);
  Tape tape;
  auto p = make_param_leaves(tape, params);
  Var yv = tape.leaf(y);
  Var out = evaluate(tape, f, p, yv);
  Var g = input_gradient(out, yv);
  const auto d = y.size();
  Matrix hess(d, d);
  const Var wrt[] = {yv};
  for (Eigen::Index k = 0; k < d; ++k) {
    Matrix seed = Matrix::Zero(d, 1);
    seed(k, 0) = 1.0;
    hess.row(k) = tape.gradient(g, wrt, &seed).front().col(0).transpose();
  }
  return hess;
}

Matrix input_hessian(const Differentiable& f, const Parameters& params,
                     const Vector& y) {
  Matrix h = input_hessian_raw(f, params, y);
  return 0.5 * (h + h.transpose());
}

LossAndGradient parameter_gradient(const LossProgram& loss, const Parameters& params) {
  for (const Matrix& p : params) {
    if (!p.allFinite()) throw DegenerateInput("non-finite parameter");
  }
  Tape tape;
  auto p = make_param_leaves(tape, params);
  Var l = loss(tape, p);
  if (l.rows() != 1 || l.cols() != 1) throw InvalidArgument("loss must be 1x1");
  LossAndGradient result;
  result.value = l.value()(0, 0);
  result.gradient = tape.gradient(l, p);
  return result;
}

std::vector<Shape> shapes_of(const Parameters& params) {
  std::vector<Shape> s;
  s.reserve(params.size());
  for (const Matrix& p : params) s.push_back({p.rows(), p.cols()});
  return s;
}

Vector flatten(const Parameters& params) {
  Eigen::Index total = 0;
  for (const Matrix& p : params) total += p.size();
  Vector flat(total);
  Eigen::Index off = 0;
  for (const Matrix& p : params) {
    flat.segment(off, p.size()) = p.reshaped();
    off += p.size();
  }
  return flat;
}

Parameters unflatten(std::span<const Shape> shapes, const Vector& flat) {
  Parameters params;
  params.reserve(shapes.size());
  Eigen::Index off = 0;
  for (const Shape& s : shapes) {
    const Eigen::Index n = s.rows * s.cols;
    if (off + n > flat.size()) throw InvalidArgument("flat parameter vector too short");
    params.push_back(flat.segment(off, n).reshaped(s.rows, s.cols));
    off += n;
  }
  if (off != flat.size()) throw InvalidArgument("flat parameter vector too long");
  return params;
}

}  // namespace shnn::ad
