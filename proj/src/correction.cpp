#include "shnn/correction.hpp"

#include <cmath>
#include <string>

#include "shnn/error.hpp"

namespace shnn {

namespace {

void require_dim(const ScalarField& f, const PhaseVector& y) {
  if (y.size() != f.dim() || y.size() % 2 != 0) {
    throw InvalidArgument("state has dimension " + std::to_string(y.size()) +
                          ", field expects " + std::to_string(f.dim()));
  }
}

// Fourth-order central difference of g along coordinate i.
template <class G>
auto central4(const G& g, const PhaseVector& y, Eigen::Index i, double step) {
  PhaseVector a = y, b = y, c = y, d = y;
  a(i) += 2.0 * step;
  b(i) += step;
  c(i) -= step;
  d(i) -= 2.0 * step;
  return (-g(a) + 8.0 * g(b) - 8.0 * g(c) + g(d)) / (12.0 * step);
}

Eigen::VectorXd fd_gradient(const std::function<double(const PhaseVector&)>& f,
                            const PhaseVector& y, double step) {
  Eigen::VectorXd g(y.size());
  for (Eigen::Index i = 0; i < y.size(); ++i) g(i) = central4(f, y, i, step);
  return g;
}

Eigen::MatrixXd fd_jacobian(const std::function<Eigen::VectorXd(const PhaseVector&)>& g,
                            const PhaseVector& y, double step) {
  Eigen::MatrixXd m(y.size(), y.size());
  for (Eigen::Index i = 0; i < y.size(); ++i) {
    m.col(i) = central4([&g](const PhaseVector& x) -> Eigen::VectorXd { return g(x); }, y, i,
                        step);
  }
  return 0.5 * (m + m.transpose());
}

struct Blocks {
  Eigen::VectorXd fp, fq;
  Eigen::MatrixXd pp, pq, qq;
};

Blocks split(const Eigen::VectorXd& g, const Eigen::MatrixXd& hess) {
  const Eigen::Index n = g.size() / 2;
  return {g.head(n), g.tail(n), hess.topLeftCorner(n, n), hess.topRightCorner(n, n),
          hess.bottomRightCorner(n, n)};
}

// F_pp(F_q,F_q) + c * F_pq(F_p,F_q) + F_qq(F_p,F_p)
double quadratic_terms(const Blocks& b, double mixed) {
  return b.fq.dot(b.pp * b.fq) + mixed * b.fp.dot(b.pq * b.fq) + b.fp.dot(b.qq * b.fp);
}

}  // namespace

double SystemField::value(const PhaseVector& y) const { return system_.energy(y); }
Eigen::VectorXd SystemField::gradient(const PhaseVector& y) const {
  return system_.gradient(y);
}
Eigen::MatrixXd SystemField::hessian(const PhaseVector& y) const {
  return system_.hessian(y);
}

NetworkField::NetworkField(MlpParams params)
    : params_(std::move(params)),
      program_(as_differentiable(params_)),
      flat_(params_.to_parameters()) {}

double NetworkField::value(const PhaseVector& y) const { return forward(params_, y); }

Eigen::VectorXd NetworkField::gradient(const PhaseVector& y) const {
  return ad::value_and_input_gradient(program_, flat_, y).gradient;
}

Eigen::MatrixXd NetworkField::hessian(const PhaseVector& y) const {
  return ad::input_hessian(program_, flat_, y);
}

FunctionField::FunctionField(int dim, Value value, Gradient gradient, Hessian hessian,
                             double step)
    : dim_(dim),
      value_(std::move(value)),
      gradient_(std::move(gradient)),
      hessian_(std::move(hessian)),
      step_(step) {
  if (dim_ < 2 || dim_ % 2 != 0) throw InvalidArgument("field dimension must be even");
  if (!value_) throw InvalidArgument("field needs a value function");
  if (!(step_ > 0.0)) throw InvalidArgument("difference step must be positive");
}

double FunctionField::value(const PhaseVector& y) const { return value_(y); }

Eigen::VectorXd FunctionField::gradient(const PhaseVector& y) const {
  return gradient_ ? gradient_(y) : fd_gradient(value_, y, step_);
}

Eigen::MatrixXd FunctionField::hessian(const PhaseVector& y) const {
  if (hessian_) return hessian_(y);
  return fd_jacobian([this](const PhaseVector& x) { return gradient(x); }, y, step_);
}

double correct_se_order2(const ScalarField& f, const PhaseVector& y, double h) {
  require_dim(f, y);
  const Eigen::VectorXd g = f.gradient(y);
  const Eigen::Index n = g.size() / 2;
  return f.value(y) - 0.5 * h * g.head(n).dot(g.tail(n));
}

double correct_se_order3(const ScalarField& f, const PhaseVector& y, double h) {
  require_dim(f, y);
  const Eigen::VectorXd g = f.gradient(y);
  const Blocks b = split(g, f.hessian(y));
  return f.value(y) - 0.5 * h * b.fp.dot(b.fq) + h * h / 12.0 * quadratic_terms(b, 4.0);
}

double correct_mp_order4(const ScalarField& f, const PhaseVector& y, double h) {
  require_dim(f, y);
  const PhaseVector v = apply_inverse_symplectic(f.gradient(y));
  return f.value(y) - h * h / 24.0 * v.dot(f.hessian(y) * v);
}

double apply_correction(const ScalarField& f, Correction c, const PhaseVector& y, double h) {
  switch (c) {
    case Correction::None:
      require_dim(f, y);
      return f.value(y);
    case Correction::SeOrder2: return correct_se_order2(f, y, h);
    case Correction::SeOrder3: return correct_se_order3(f, y, h);
    case Correction::MpOrder4: return correct_mp_order4(f, y, h);
  }
  throw InvalidArgument("unknown correction");
}

Eigen::VectorXd corrected_gradient(const ScalarField& f, Correction c, const PhaseVector& y,
                                   double h) {
  require_dim(f, y);
  switch (c) {
    case Correction::None:
      return f.gradient(y);
    case Correction::SeOrder2: {
      // d/dy (F_p . F_q) = Hess[:, p] F_q + Hess[:, q] F_p
      const Eigen::VectorXd g = f.gradient(y);
      const Eigen::MatrixXd hess = f.hessian(y);
      const Eigen::Index n = g.size() / 2;
      return g - 0.5 * h * (hess.leftCols(n) * g.tail(n) + hess.rightCols(n) * g.head(n));
    }
    case Correction::SeOrder3:
    case Correction::MpOrder4:
      return fd_gradient(
          [&](const PhaseVector& x) { return apply_correction(f, c, x, h); }, y, 1e-3);
  }
  throw InvalidArgument("unknown correction");
}

double forward_series(const ScalarField& h_field, Scheme scheme, int order,
                      const PhaseVector& y, double h) {
  require_dim(h_field, y);
  if (order != 1 && order != 2) {
    throw UnsupportedOperation("forward series is available for orders 1 and 2 only");
  }
  switch (scheme) {
    case Scheme::ForwardEuler:
      throw UnsupportedOperation(
          "forward Euler has no modified Hamiltonian; no forward series exists");
    case Scheme::SymplecticEuler: {
      const Eigen::VectorXd g = h_field.gradient(y);
      const Eigen::Index n = g.size() / 2;
      double out = h_field.value(y) + 0.5 * h * g.head(n).dot(g.tail(n));
      if (order == 2) {
        out += h * h / 6.0 * quadratic_terms(split(g, h_field.hessian(y)), 1.0);
      }
      return out;
    }
    case Scheme::ImplicitMidpoint: {
      if (order == 1) return h_field.value(y);
      const PhaseVector v = apply_inverse_symplectic(h_field.gradient(y));
      return h_field.value(y) + h * h / 24.0 * v.dot(h_field.hessian(y) * v);
    }
  }
  throw InvalidArgument("unknown scheme");
}

double mixed_derivative_mismatch(const ScalarField& h_field, const PhaseVector& y) {
  if (h_field.dim() != 2) {
    throw InvalidArgument("mixed derivative mismatch is defined for one degree of freedom");
  }
  require_dim(h_field, y);
  const Eigen::MatrixXd m = h_field.hessian(y);
  return -m(0, 0) * m(1, 1) + m(1, 0) * m(0, 1);
}

CorrectedField::CorrectedField(const LearnedHamiltonian& model)
    : CorrectedField(std::make_shared<NetworkField>(model.params), model.correction,
                     model.h) {
  check_correction(model.scheme, model.correction);
}

CorrectedField::CorrectedField(std::shared_ptr<const ScalarField> base, Correction c,
                               double h)
    : base_(std::move(base)), correction_(c), h_(h) {
  if (!base_) throw InvalidArgument("corrected field needs a base field");
  if (!(h_ >= 0.0)) throw InvalidArgument("time step must be non-negative");
}

double CorrectedField::value(const PhaseVector& y) const {
  return apply_correction(*base_, correction_, y, h_);
}

Eigen::VectorXd CorrectedField::gradient(const PhaseVector& y) const {
  return corrected_gradient(*base_, correction_, y, h_);
}

Eigen::MatrixXd CorrectedField::hessian(const PhaseVector& y) const {
  if (correction_ == Correction::None) return base_->hessian(y);
  return fd_jacobian([this](const PhaseVector& x) { return gradient(x); }, y, 1e-3);
}

}  // namespace shnn
