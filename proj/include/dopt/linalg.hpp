#pragma once

#include <Eigen/Dense>

#include <algorithm>
#include <cmath>
#include <string>

#include "dopt/errors.hpp"

namespace dopt::linalg {

using Eigen::MatrixXd;
using Eigen::VectorXd;

inline MatrixXd symmetrized(const MatrixXd& a) {
  return 0.5 * (a + a.transpose());
}

inline double max_abs(const MatrixXd& a) {
  return a.size() == 0 ? 0.0 : a.cwiseAbs().maxCoeff();
}

inline bool is_symmetric(const MatrixXd& a, double rel_tol = 1e-12) {
  if (a.rows() != a.cols()) return false;
  return max_abs(a - a.transpose()) <= rel_tol * std::max(1.0, max_abs(a));
}

inline bool is_diagonal(const MatrixXd& a) {
  for (Eigen::Index j = 0; j < a.cols(); ++j)
    for (Eigen::Index i = 0; i < a.rows(); ++i)
      if (i != j && a(i, j) != 0.0) return false;
  return true;
}

inline bool all_finite(const MatrixXd& a) { return a.allFinite(); }

/// Smallest and largest eigenvalue of a symmetric matrix. Diagonal input
/// skips the eigensolver.
inline std::pair<double, double> eigen_range(const MatrixXd& a) {
  if (a.size() == 0) return {0.0, 0.0};
  if (is_diagonal(a)) {
    const VectorXd d = a.diagonal();
    return {d.minCoeff(), d.maxCoeff()};
  }
  Eigen::SelfAdjointEigenSolver<MatrixXd> es(symmetrized(a),
                                             Eigen::EigenvaluesOnly);
  return {es.eigenvalues().minCoeff(), es.eigenvalues().maxCoeff()};
}

/// Cholesky factorization that throws instead of returning garbage.
inline Eigen::LLT<MatrixXd> checked_llt(const MatrixXd& a,
                                        const std::string& what) {
  Eigen::LLT<MatrixXd> llt(a);
  if (llt.info() != Eigen::Success)
    throw NumericalError(what + ": matrix is not positive definite");
  return llt;
}

/// log det of an SPD matrix from its Cholesky factor.
inline double logdet(const Eigen::LLT<MatrixXd>& llt) {
  const auto& l = llt.matrixLLT();
  double s = 0.0;
  for (Eigen::Index i = 0; i < l.rows(); ++i) s += std::log(l(i, i));
  return 2.0 * s;
}

inline MatrixXd spd_inverse(const MatrixXd& a, const std::string& what) {
  const auto llt = checked_llt(a, what);
  return symmetrized(llt.solve(MatrixXd::Identity(a.rows(), a.cols())));
}

}  // namespace dopt::linalg
