#pragma once

// D-optimality criterion
//
//   Phi(O) = 1/2 log det(I + Gamma_pr^{1/2} F^t O^t Sigma(O)^{-1} O F Gamma_pr^{1/2})
//
// together with its gradient with respect to the observation rows, the
// unit-norm constraints, first-order optimality residuals and closed-form
// gains for appending one measurement.
//
// Gradients are stored as m x n matrices G with the Frobenius pairing
// dPhi(O)[V] = sum_{jk} V_jk G_jk, so row j of G pairs with row j of V.

#include <Eigen/Dense>

#include <cmath>
#include <string>

#include "dopt/errors.hpp"
#include "dopt/linalg.hpp"
#include "dopt/model.hpp"

namespace dopt {

/// Perturbation of an observation matrix (same shape as the design).
struct Direction {
  MatrixXd mat;
};

struct Gradient {
  MatrixXd mat;
};

inline double frobenius_pair(const Direction& v, const Gradient& g) {
  detail::require_dims(v.mat.rows() == g.mat.rows() &&
                           v.mat.cols() == g.mat.cols(),
                       "frobenius_pair: shapes differ");
  return (v.mat.array() * g.mat.array()).sum();
}

/// Multipliers fitted to grad Phi = diag(xi) O, row by row.
struct LagrangeFit {
  VectorXd xi;
  double residual = 0.0;
  double xi_spread = 0.0;
};

/// Closed-form gain of the last measurement next to the difference of two
/// objective evaluations.
struct GainReport {
  double direct = 0.0;
  double formula = 0.0;
  double abs_diff = 0.0;
};

namespace detail {

inline GainReport make_report(double direct, double formula) {
  return {direct, formula, std::abs(direct - formula)};
}

/// F Gamma F^t, exploiting diagonal structure when both factors are diagonal.
inline MatrixXd output_prior_cov(const Model& model) {
  const MatrixXd& f = model.forward();
  if (model.prior_is_diagonal() && linalg::is_diagonal(f)) {
    const VectorXd d =
        f.diagonal().array().square() * model.prior_cov().diagonal().array();
    return d.asDiagonal();
  }
  return linalg::symmetrized(f * model.prior_cov() * f.transpose());
}

}  // namespace detail

/// Evaluated on the m x m side via Sylvester's identity:
/// 1/2 sum log(1 + mu_i), mu the eigenvalues of
/// L^{-1} O F Gamma_pr F^t O^t L^{-t} with Sigma = L L^t.
inline double objective(const ObservationMatrix& design, const Model& model) {
  detail::require_compatible(design, model, "objective");
  if (design.m() == 0) return 0.0;
  const auto sigma_llt =
      linalg::checked_llt(assemble_noise_cov(design, model).mat, "Sigma(O)");
  const MatrixXd c =
      sigma_llt.matrixL().solve(design.matrix() * model.forward());
  MatrixXd b;
  if (model.prior_is_diagonal())
    b = c * model.prior_cov().diagonal().asDiagonal() * c.transpose();
  else
    b = c * model.prior_cov() * c.transpose();
  Eigen::SelfAdjointEigenSolver<MatrixXd> es(linalg::symmetrized(b),
                                             Eigen::EigenvaluesOnly);
  double phi = 0.0;
  for (Index i = 0; i < es.eigenvalues().size(); ++i)
    phi += 0.5 * std::log1p(std::max(es.eigenvalues()(i), 0.0));
  return phi;
}

/// Determinant-lemma factor: det(A + u v^t) = mdl_factor(A, u, v) * det(A).
inline double mdl_factor(const MatrixXd& a, const VectorXd& u,
                         const VectorXd& v) {
  detail::require_dims(a.rows() == a.cols() && u.size() == a.rows() &&
                           v.size() == a.rows(),
                       "mdl_factor: A must be n x n with u, v of length n");
  Eigen::PartialPivLU<MatrixXd> lu(a);
  if (!(lu.rcond() > 1e-14))
    throw NumericalError("mdl_factor: A is numerically singular");
  return 1.0 + v.dot(lu.solve(u));
}

/// First variation of T(O) = O^t Sigma(O)^{-1} O in direction V.
inline MatrixXd noise_term_variation(const ObservationMatrix& design,
                                     const Direction& direction,
                                     const Model& model) {
  detail::require_compatible(design, model, "noise_term_variation");
  detail::require_dims(direction.mat.rows() == design.m() &&
                           direction.mat.cols() == design.n(),
                       "noise_term_variation: direction shape");
  const MatrixXd& o = design.matrix();
  const MatrixXd& v = direction.mat;
  const auto sigma_llt =
      linalg::checked_llt(assemble_noise_cov(design, model).mat, "Sigma(O)");
  const MatrixXd si_o = sigma_llt.solve(o);  // Sigma^{-1} O
  const MatrixXd si_v = sigma_llt.solve(v);  // Sigma^{-1} V

  MatrixXd out = v.transpose() * si_o + o.transpose() * si_v;
  if (model.has_model_error()) {
    const MatrixXd& delta = model.model_err();
    const MatrixXd ot_si = si_o.transpose();  // O^t Sigma^{-1}
    out -= ot_si * (v * delta * o.transpose()) * si_o;
    out -= ot_si * (o * delta * v.transpose()) * si_o;
  }
  return out;
}

/// grad Phi(O) = (I - Delta O^t Sigma^{-1} O) F Gamma_post F^t O^t Sigma^{-1},
/// returned transposed into the m x n layout.
inline Gradient objective_gradient(const ObservationMatrix& design,
                                   const Model& model) {
  detail::require_compatible(design, model, "objective_gradient");
  if (design.m() == 0) return {MatrixXd(0, design.n())};
  const MatrixXd& o = design.matrix();
  const MatrixXd& f = model.forward();
  const auto sigma_llt =
      linalg::checked_llt(assemble_noise_cov(design, model).mat, "Sigma(O)");
  const MatrixXd si_o = sigma_llt.solve(o);
  const MatrixXd post = posterior_cov(design, model).mat;
  const MatrixXd si_o_p = si_o * (f * post * f.transpose());
  if (!model.has_model_error()) return {si_o_p};
  // (Sigma^{-1} O F Gamma_post F^t)(I - O^t Sigma^{-1} O Delta)
  return {si_o_p - (si_o_p * o.transpose()) * (si_o * model.model_err())};
}

/// phi_j = 1/2 |o_j|^2 - 1/2.
inline VectorXd constraint_values(const ObservationMatrix& design) {
  return (0.5 * design.matrix().rowwise().squaredNorm().array() - 0.5)
      .matrix();
}

/// Gradient of phi_j: row j equal to o_j, every other row zero. j is 0-based.
inline Gradient constraint_gradient(const ObservationMatrix& design, Index j) {
  if (j < 0 || j >= design.m())
    throw std::out_of_range("constraint_gradient: index " + std::to_string(j) +
                            " outside [0, " + std::to_string(design.m()) + ")");
  MatrixXd g = MatrixXd::Zero(design.m(), design.n());
  g.row(j) = design.matrix().row(j);
  return {g};
}

inline LagrangeFit lagrange_residual(const ObservationMatrix& design,
                                     const Model& model) {
  const MatrixXd& o = design.matrix();
  const VectorXd norms2 = o.rowwise().squaredNorm();
  for (Index j = 0; j < design.m(); ++j)
    if (!(norms2(j) > 0.0))
      throw std::invalid_argument("lagrange_residual: row " +
                                  std::to_string(j) + " is zero");
  const MatrixXd g = objective_gradient(design, model).mat;
  LagrangeFit fit;
  fit.xi = (g.array() * o.array()).rowwise().sum().matrix().cwiseQuotient(
      norms2);
  fit.residual = (g - fit.xi.asDiagonal() * o).norm();
  fit.xi_spread =
      design.m() == 0 ? 0.0 : fit.xi.maxCoeff() - fit.xi.minCoeff();
  return fit;
}

/// Gain of the last row o_m against the design of the first m-1 rows,
/// 1/2 log(1 + <F Gamma_post(O_) F^t g, g> / s) with
/// g = (O_^t Sigma_^{-1} O_ Delta - I) o_m and s the Schur complement of
/// Sigma_ in Sigma(O).
inline GainReport gain_of_measurement(const ObservationMatrix& design,
                                      const Model& model) {
  detail::require_compatible(design, model, "gain_of_measurement");
  if (design.m() < 1)
    throw std::invalid_argument("gain_of_measurement: need at least one row");
  const ObservationMatrix base = design.head(design.m() - 1);
  const VectorXd om = design.row(design.m() - 1);
  const MatrixXd& ob = base.matrix();
  const MatrixXd& delta = model.model_err();
  const MatrixXd& f = model.forward();

  VectorXd g = -om;
  double den = model.sigma2();
  if (model.has_model_error()) {
    const VectorXd delta_om = delta * om;
    den += om.dot(delta_om);
    if (base.m() > 0) {
      const auto sigma_llt = linalg::checked_llt(
          assemble_noise_cov(base, model).mat, "Sigma(O_)");
      const VectorXd w = ob * delta_om;  // O_ Delta o_m
      const VectorXd si_w = sigma_llt.solve(w);
      g += ob.transpose() * si_w;
      den -= w.dot(si_w);
    }
  }
  if (!(den > 0.0))
    throw NumericalError("gain_of_measurement: Schur complement " +
                         std::to_string(den) + " is not positive");
  const VectorXd ftg = f.transpose() * g;
  const double num = ftg.dot(posterior_cov(base, model).mat * ftg);
  const double formula = 0.5 * std::log1p(num / den);
  return detail::make_report(objective(design, model) - objective(base, model),
                             formula);
}

/// Gain of the last row with Delta = 0, written with the posterior of the
/// full design: -1/2 log(1 - sigma^{-2} <F Gamma_post(O) F^t o_m, o_m>).
inline GainReport gain_no_model_error(const ObservationMatrix& design,
                                      const Model& model) {
  detail::require_compatible(design, model, "gain_no_model_error");
  if (model.has_model_error())
    throw std::invalid_argument("gain_no_model_error: model error must be 0");
  if (design.m() < 1)
    throw std::invalid_argument("gain_no_model_error: need at least one row");
  const VectorXd ftom = model.forward().transpose() * design.row(design.m() - 1);
  const double x =
      ftom.dot(posterior_cov(design, model).mat * ftom) / model.sigma2();
  if (!(x < 1.0))
    throw NumericalError("gain_no_model_error: log argument is not positive");
  const double formula = -0.5 * std::log1p(-x);
  const ObservationMatrix base = design.head(design.m() - 1);
  return detail::make_report(objective(design, model) - objective(base, model),
                             formula);
}

/// Gain of repeating row j (0-based) of `base`:
/// 1/2 log(1 + sigma2 q / (2 - sigma2 e_j^t Sigma_^{-1} e_j)),
/// q = <F Gamma_post(O_) F^t O_^t s, O_^t s>, s = Sigma_^{-1} e_j.
inline GainReport gain_identical_measurement(const ObservationMatrix& base,
                                             Index j, const Model& model) {
  detail::require_compatible(base, model, "gain_identical_measurement");
  if (!model.has_model_error())
    throw std::invalid_argument(
        "gain_identical_measurement: requires nonzero model error");
  if (j < 0 || j >= base.m())
    throw std::out_of_range("gain_identical_measurement: index " +
                            std::to_string(j) + " outside the base design");
  const double s2 = model.sigma2();
  const auto sigma_llt = linalg::checked_llt(
      assemble_noise_cov(base, model).mat, "Sigma(O_)");
  const VectorXd s = sigma_llt.solve(VectorXd::Unit(base.m(), j));
  const double den = 2.0 - s2 * s(j);
  if (!(den > 0.0))
    throw NumericalError("gain_identical_measurement: denominator " +
                         std::to_string(den) + " is not positive");
  const VectorXd ft_ot_s =
      model.forward().transpose() * (base.matrix().transpose() * s);
  const double q = ft_ot_s.dot(posterior_cov(base, model).mat * ft_ot_s);
  const double formula = 0.5 * std::log1p(s2 * q / den);
  const ObservationMatrix full = base.with_row(base.row(j));
  return detail::make_report(objective(full, model) - objective(base, model),
                             formula);
}

namespace detail {

/// Value and gradient of Phi computed entirely in data space:
/// Phi = 1/2 [log det(Sigma + O K O^t) - log det Sigma] with K = F Gamma F^t,
/// grad = A^{-1} O (K + Delta) - Sigma^{-1} O Delta, A = Sigma + O K O^t.
/// Avoids the n x n posterior, which matters inside optimization loops.
class DataSpaceCriterion {
 public:
  explicit DataSpaceCriterion(const Model& model)
      : k_(output_prior_cov(model)),
        delta_(model.model_err()),
        sigma2_(model.sigma2()),
        has_delta_(model.has_model_error()),
        k_diagonal_(linalg::is_diagonal(k_)),
        delta_diagonal_(linalg::is_diagonal(delta_)) {}

  struct Eval {
    double value = 0.0;
    MatrixXd gradient;
  };

  Eval evaluate(const MatrixXd& o, bool with_gradient = true) const {
    const Index m = o.rows();
    Eval out;
    if (m == 0) {
      out.gradient = MatrixXd(0, o.cols());
      return out;
    }
    const MatrixXd ok = right_mul(o, k_, k_diagonal_);
    MatrixXd sigma = sigma2_ * MatrixXd::Identity(m, m);
    MatrixXd od;
    if (has_delta_) {
      od = right_mul(o, delta_, delta_diagonal_);
      sigma.noalias() += od * o.transpose();
    }
    sigma = linalg::symmetrized(sigma);
    const auto sigma_llt = linalg::checked_llt(sigma, "Sigma(O)");
    const MatrixXd lc = sigma_llt.matrixL().solve(ok * o.transpose());
    const MatrixXd b =
        sigma_llt.matrixL().solve(lc.transpose());  // L^{-1} O K O^t L^{-t}
    Eigen::SelfAdjointEigenSolver<MatrixXd> es(linalg::symmetrized(b),
                                               Eigen::EigenvaluesOnly);
    for (Index i = 0; i < m; ++i)
      out.value += 0.5 * std::log1p(std::max(es.eigenvalues()(i), 0.0));
    if (!with_gradient) return out;

    MatrixXd a = sigma;
    a.noalias() += ok * o.transpose();
    const auto a_llt = linalg::checked_llt(linalg::symmetrized(a), "A(O)");
    if (has_delta_)
      out.gradient = a_llt.solve(ok + od) - sigma_llt.solve(od);
    else
      out.gradient = a_llt.solve(ok);
    return out;
  }

 private:
  static MatrixXd right_mul(const MatrixXd& o, const MatrixXd& s,
                            bool diagonal) {
    if (diagonal) return o * s.diagonal().asDiagonal();
    return o * s;
  }

  MatrixXd k_;
  MatrixXd delta_;
  double sigma2_;
  bool has_delta_;
  bool k_diagonal_;
  bool delta_diagonal_;
};

}  // namespace detail
}  // namespace dopt
