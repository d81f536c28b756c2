#pragma once

// Problem data for a linear Gaussian inverse problem truncated to n spectral
// modes, and the two covariance assemblies built from it:
//
//   Sigma(O)   = O Delta O^t + sigma2 I            (data-error covariance)
//   Gamma_post = (Gamma_pr^{-1} + F^t O^t Sigma^{-1} O F)^{-1}
//
// All matrices are dense and expressed in one orthonormal coordinate basis.

#include <Eigen/Dense>

#include <cmath>
#include <string>
#include <utility>

#include "dopt/errors.hpp"
#include "dopt/linalg.hpp"

namespace dopt {

using Eigen::Index;
using Eigen::MatrixXd;
using Eigen::VectorXd;

/// Prior covariance, forward operator, model-error covariance and noise
/// variance. The constructor enforces the invariants, so a Model that exists
/// is valid.
class Model {
 public:
  Model(MatrixXd prior_cov, MatrixXd forward, MatrixXd model_err,
        double sigma2)
      : prior_cov_(std::move(prior_cov)),
        forward_(std::move(forward)),
        model_err_(std::move(model_err)),
        sigma2_(sigma2) {
    const Index n = prior_cov_.rows();
    detail::require_dims(n >= 1 && prior_cov_.cols() == n,
                         "Model: prior_cov must be square and non-empty");
    detail::require_dims(forward_.rows() == n && forward_.cols() == n,
                         "Model: forward must be n x n");
    detail::require_dims(model_err_.rows() == n && model_err_.cols() == n,
                         "Model: model_err must be n x n");
    if (!prior_cov_.allFinite() || !forward_.allFinite() ||
        !model_err_.allFinite())
      throw std::invalid_argument("Model: non-finite entries");
    if (!(sigma2_ > 0.0) || !std::isfinite(sigma2_))
      throw std::invalid_argument("Model: sigma2 must be positive");
    if (!linalg::is_symmetric(prior_cov_))
      throw std::invalid_argument("Model: prior_cov is not symmetric");
    if (!linalg::is_symmetric(model_err_))
      throw std::invalid_argument("Model: model_err is not symmetric");

    prior_diagonal_ = linalg::is_diagonal(prior_cov_);
    const auto [pmin, pmax] = linalg::eigen_range(prior_cov_);
    if (!(pmin > 0.0))
      throw std::invalid_argument("Model: prior_cov is not positive definite");
    if (pmax / pmin > 1e14)
      throw NumericalError("Model: prior_cov is numerically singular");

    has_model_err_ = linalg::max_abs(model_err_) > 0.0;
    if (has_model_err_) {
      const auto [dmin, dmax] = linalg::eigen_range(model_err_);
      if (dmin < -1e-12 * std::max(dmax, 0.0))
        throw std::invalid_argument(
            "Model: model_err is not positive semidefinite");
    }
  }

  Index n() const { return prior_cov_.rows(); }
  const MatrixXd& prior_cov() const { return prior_cov_; }
  const MatrixXd& forward() const { return forward_; }
  const MatrixXd& model_err() const { return model_err_; }
  double sigma2() const { return sigma2_; }

  bool prior_is_diagonal() const { return prior_diagonal_; }
  bool has_model_error() const { return has_model_err_; }

  /// Same problem with a different noise variance.
  Model with_sigma2(double sigma2) const {
    Model copy = *this;
    if (!(sigma2 > 0.0) || !std::isfinite(sigma2))
      throw std::invalid_argument("Model: sigma2 must be positive");
    copy.sigma2_ = sigma2;
    return copy;
  }

 private:
  MatrixXd prior_cov_;
  MatrixXd forward_;
  MatrixXd model_err_;
  double sigma2_;
  bool prior_diagonal_ = false;
  bool has_model_err_ = false;
};

/// m measurement functionals stored as rows in spectral coordinates. m = 0 is
/// allowed and stands for "no measurements".
class ObservationMatrix {
 public:
  ObservationMatrix() = default;
  explicit ObservationMatrix(MatrixXd rows) : rows_(std::move(rows)) {
    if (!rows_.allFinite())
      throw std::invalid_argument("ObservationMatrix: non-finite entries");
  }

  static ObservationMatrix empty(Index n) {
    return ObservationMatrix(MatrixXd(0, n));
  }

  const MatrixXd& matrix() const { return rows_; }
  Index m() const { return rows_.rows(); }
  Index n() const { return rows_.cols(); }
  VectorXd row(Index j) const { return rows_.row(j).transpose(); }

  /// First `count` rows.
  ObservationMatrix head(Index count) const {
    return ObservationMatrix(rows_.topRows(count));
  }

  ObservationMatrix with_row(const VectorXd& o) const {
    detail::require_dims(o.size() == n(), "ObservationMatrix: row length");
    MatrixXd out(m() + 1, n());
    out.topRows(m()) = rows_;
    out.row(m()) = o.transpose();
    return ObservationMatrix(std::move(out));
  }

 private:
  MatrixXd rows_;
};

/// Sigma(O) = O Delta O^t + sigma2 I.
struct NoiseCov {
  MatrixXd mat;
};

struct PosteriorCov {
  MatrixXd mat;
};

namespace detail {

inline void require_compatible(const ObservationMatrix& design,
                               const Model& model, const char* op) {
  require_dims(design.n() == model.n(),
               std::string(op) + ": design has " + std::to_string(design.n()) +
                   " columns, model has n = " + std::to_string(model.n()));
}

}  // namespace detail

inline NoiseCov assemble_noise_cov(const ObservationMatrix& design,
                                   const Model& model) {
  detail::require_compatible(design, model, "assemble_noise_cov");
  const Index m = design.m();
  MatrixXd sigma = model.sigma2() * MatrixXd::Identity(m, m);
  if (model.has_model_error()) {
    const MatrixXd& o = design.matrix();
    sigma.noalias() += o * model.model_err() * o.transpose();
  }
  return {linalg::symmetrized(sigma)};
}

/// O^t v, i.e. sum_j v_j o_j.
inline VectorXd apply_adjoint(const ObservationMatrix& design,
                              const VectorXd& v) {
  detail::require_dims(v.size() == design.m(),
                       "apply_adjoint: vector length must equal m");
  return design.matrix().transpose() * v;
}

/// Posterior covariance from the precision form. A diagonal prior enters as
/// its reciprocal diagonal; a dense prior is handled through its Cholesky
/// factor L as L (I + L^t F^t O^t Sigma^{-1} O F L)^{-1} L^t so that its
/// inverse is never formed.
inline PosteriorCov posterior_cov(const ObservationMatrix& design,
                                  const Model& model) {
  detail::require_compatible(design, model, "posterior_cov");
  const Index n = model.n();
  if (design.m() == 0) return {model.prior_cov()};

  const auto sigma_llt =
      linalg::checked_llt(assemble_noise_cov(design, model).mat, "Sigma(O)");
  // B = L_Sigma^{-1} O F, so F^t O^t Sigma^{-1} O F = B^t B.
  const MatrixXd b =
      sigma_llt.matrixL().solve(design.matrix() * model.forward());

  if (model.prior_is_diagonal()) {
    MatrixXd precision = b.transpose() * b;
    precision.diagonal() += model.prior_cov().diagonal().cwiseInverse();
    return {linalg::spd_inverse(linalg::symmetrized(precision),
                                "posterior precision")};
  }

  const auto prior_llt = linalg::checked_llt(model.prior_cov(), "Gamma_pr");
  const MatrixXd l = prior_llt.matrixL();
  const MatrixXd bl = b * l;
  MatrixXd h = MatrixXd::Identity(n, n);
  h.noalias() += bl.transpose() * bl;
  const auto h_llt = linalg::checked_llt(linalg::symmetrized(h),
                                         "I + L^t F^t O^t Sigma^-1 O F L");
  const MatrixXd post = l * h_llt.solve(l.transpose());
  return {linalg::symmetrized(post)};
}

}  // namespace dopt
