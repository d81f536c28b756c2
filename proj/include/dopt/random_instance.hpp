#pragma once

// Seeded generators of random problem instances for property checks.

#include <Eigen/Dense>

#include <cstdint>
#include <random>

#include "dopt/model.hpp"

namespace dopt::random {

using Rng = std::mt19937_64;

inline MatrixXd gaussian(Index rows, Index cols, Rng& rng) {
  std::normal_distribution<double> normal(0.0, 1.0);
  MatrixXd a(rows, cols);
  for (Index j = 0; j < cols; ++j)
    for (Index i = 0; i < rows; ++i) a(i, j) = normal(rng);
  return a;
}

inline double uniform(double lo, double hi, Rng& rng) {
  return std::uniform_real_distribution<double>(lo, hi)(rng);
}

inline Index uniform_index(Index lo, Index hi, Rng& rng) {
  return std::uniform_int_distribution<Index>(lo, hi)(rng);
}

inline MatrixXd orthogonal(Index n, Rng& rng) {
  Eigen::HouseholderQR<MatrixXd> qr(gaussian(n, n, rng));
  return qr.householderQ() * MatrixXd::Identity(n, n);
}

/// Symmetric positive definite with eigenvalues in [lo, hi].
inline MatrixXd spd(Index n, Rng& rng, double lo = 0.2, double hi = 2.0) {
  const MatrixXd q = orthogonal(n, rng);
  VectorXd d(n);
  for (Index i = 0; i < n; ++i) d(i) = uniform(lo, hi, rng);
  return linalg::symmetrized(q * d.asDiagonal() * q.transpose());
}

/// Symmetric PSD of the given rank, scaled to unit average eigenvalue.
inline MatrixXd psd(Index n, Index rank, Rng& rng) {
  const MatrixXd b = gaussian(n, rank, rng);
  return linalg::symmetrized(b * b.transpose() / static_cast<double>(rank));
}

struct ModelSpec {
  Index n = 5;
  bool model_error = true;
  double model_error_scale = 1.0;
  double sigma2 = -1.0;  // negative: draw from [0.1, 1]
};

inline Model model(const ModelSpec& spec, Rng& rng) {
  const Index n = spec.n;
  const MatrixXd prior = spd(n, rng);
  const MatrixXd fwd = gaussian(n, n, rng) / std::sqrt(static_cast<double>(n));
  const MatrixXd delta = spec.model_error
                             ? MatrixXd(spec.model_error_scale * psd(n, n, rng))
                             : MatrixXd::Zero(n, n);
  const double s2 = spec.sigma2 > 0.0 ? spec.sigma2 : uniform(0.1, 1.0, rng);
  return Model(prior, fwd, delta, s2);
}

inline ObservationMatrix design(Index m, Index n, Rng& rng) {
  return ObservationMatrix(gaussian(m, n, rng));
}

}  // namespace dopt::random
