#pragma once

#include <functional>
#include <memory>
#include <string>

#include <Eigen/Dense>

#include "shnn/model.hpp"
#include "shnn/systems.hpp"

namespace shnn {

/// A scalar function on R^{2n} with first and second derivatives.
class ScalarField {
 public:
  virtual ~ScalarField() = default;
  [[nodiscard]] virtual int dim() const = 0;
  [[nodiscard]] virtual double value(const PhaseVector& y) const = 0;
  [[nodiscard]] virtual Eigen::VectorXd gradient(const PhaseVector& y) const = 0;
  [[nodiscard]] virtual Eigen::MatrixXd hessian(const PhaseVector& y) const = 0;
};

/// The analytic Hamiltonian of a system.
class SystemField final : public ScalarField {
 public:
  explicit SystemField(HamiltonianSystem system) : system_(std::move(system)) {}
  [[nodiscard]] int dim() const override { return 2 * system_.n; }
  [[nodiscard]] double value(const PhaseVector& y) const override;
  [[nodiscard]] Eigen::VectorXd gradient(const PhaseVector& y) const override;
  [[nodiscard]] Eigen::MatrixXd hessian(const PhaseVector& y) const override;

 private:
  HamiltonianSystem system_;
};

/// A network Hamiltonian; derivatives come from the differentiation engine.
class NetworkField final : public ScalarField {
 public:
  explicit NetworkField(MlpParams params);
  [[nodiscard]] int dim() const override { return params_.input_dim(); }
  [[nodiscard]] double value(const PhaseVector& y) const override;
  [[nodiscard]] Eigen::VectorXd gradient(const PhaseVector& y) const override;
  [[nodiscard]] Eigen::MatrixXd hessian(const PhaseVector& y) const override;

 private:
  MlpParams params_;
  ad::Differentiable program_;
  ad::Parameters flat_;
};

/// Wraps callables. Missing derivatives are filled in by fourth-order central
/// differences (of the value for the gradient, of the gradient for the Hessian).
class FunctionField final : public ScalarField {
 public:
  using Value = std::function<double(const PhaseVector&)>;
  using Gradient = std::function<Eigen::VectorXd(const PhaseVector&)>;
  using Hessian = std::function<Eigen::MatrixXd(const PhaseVector&)>;

  FunctionField(int dim, Value value, Gradient gradient = {}, Hessian hessian = {},
                double step = 1e-3);
  [[nodiscard]] int dim() const override { return dim_; }
  [[nodiscard]] double value(const PhaseVector& y) const override;
  [[nodiscard]] Eigen::VectorXd gradient(const PhaseVector& y) const override;
  [[nodiscard]] Eigen::MatrixXd hessian(const PhaseVector& y) const override;

 private:
  int dim_;
  Value value_;
  Gradient gradient_;
  Hessian hessian_;
  double step_;
};

/// F(y) - (h/2) grad_p F . grad_q F.
double correct_se_order2(const ScalarField& f, const PhaseVector& y, double h);

/// correct_se_order2 plus (h^2/12)(F_pp(F_q, F_q) + 4 F_pq(F_p, F_q) + F_qq(F_p, F_p)),
/// where F_pq(a, b) = sum_ij d2F/dp_i dq_j a_i b_j.
double correct_se_order3(const ScalarField& f, const PhaseVector& y, double h);

/// F(y) - (h^2/24) hess F(y)(J^{-1} grad F, J^{-1} grad F).
double correct_mp_order4(const ScalarField& f, const PhaseVector& y, double h);

/// Dispatches on `c`; Correction::None returns F(y).
double apply_correction(const ScalarField& f, Correction c, const PhaseVector& y, double h);

/// Gradient of apply_correction. None and SeOrder2 are exact given the
/// field's Hessian; the higher orders use central differences of the value.
Eigen::VectorXd corrected_gradient(const ScalarField& f, Correction c, const PhaseVector& y,
                                   double h);

/// Truncated series for the modified Hamiltonian built from a known H.
///   symplectic Euler, order 1: H + (h/2) H_p.H_q
///   symplectic Euler, order 2: adds (h^2/6)(H_pp(H_q,H_q) + H_pq(H_p,H_q) + H_qq(H_p,H_p))
///   implicit midpoint, order 1: H
///   implicit midpoint, order 2: H + (h^2/24) hess H(J^{-1} grad H, J^{-1} grad H)
/// Throws UnsupportedOperation for forward Euler or other orders.
double forward_series(const ScalarField& h_field, Scheme scheme, int order,
                      const PhaseVector& y, double h);

/// h-coefficient of the curl obstruction for one degree of freedom:
/// -H_pp H_qq + H_qp H_pq. Throws InvalidArgument unless dim() == 2.
double mixed_derivative_mismatch(const ScalarField& h_field, const PhaseVector& y);

/// The model's network with its correction tag applied at evaluation time.
class CorrectedField final : public ScalarField {
 public:
  explicit CorrectedField(const LearnedHamiltonian& model);
  CorrectedField(std::shared_ptr<const ScalarField> base, Correction c, double h);
  [[nodiscard]] int dim() const override { return base_->dim(); }
  [[nodiscard]] double value(const PhaseVector& y) const override;
  [[nodiscard]] Eigen::VectorXd gradient(const PhaseVector& y) const override;
  /// Central differences of gradient().
  [[nodiscard]] Eigen::MatrixXd hessian(const PhaseVector& y) const override;

 private:
  std::shared_ptr<const ScalarField> base_;
  Correction correction_;
  double h_;
};

}  // namespace shnn
