#pragma once

// Relaxed D-optimal design with iid noise. With unit-norm measurement rows
// the criterion reduces to maximizing sum_i log(p_i + eta_i / sigma2) over
// allocations eta >= 0 with sum eta = m, where p_i are the prior precisions
// of the eigenmodes of F Gamma_pr F^t. The maximizer fills the lowest
// precisions up to a common level (water-filling). An allocation is turned
// back into an observation matrix with unit rows by a Givens-rotation
// construction of a Gram factor with unit columns.

#include <Eigen/Dense>

#include <algorithm>
#include <cmath>
#include <numeric>
#include <string>
#include <utility>
#include <vector>

#include "dopt/criterion.hpp"
#include "dopt/errors.hpp"
#include "dopt/linalg.hpp"
#include "dopt/model.hpp"

namespace dopt {

/// Eigenpairs of F Gamma_pr F^t in descending eigenvalue order.
struct SpectralDecomp {
  VectorXd lambdas;
  MatrixXd vecs;  // n x k_max, orthonormal columns

  /// Number of strictly positive eigenvalues (the leading block).
  Index positive_count() const {
    Index k = 0;
    while (k < lambdas.size() && lambdas(k) > 0.0) ++k;
    return k;
  }
};

struct Allocation {
  VectorXd eta;
  double level = 0.0;
  Index active = 0;
  double budget = 0.0;
};

/// Sequence of unit-budget water-fills. Row t holds the weights spent by
/// measurement t; each row sums to 1.
struct GreedyAllocation {
  MatrixXd steps;
  VectorXd totals;
};

struct GramFactor {
  MatrixXd a;         // k x m, unit columns, a a^t = M
  MatrixXd rotation;  // m x m orthogonal accumulator
};

inline SpectralDecomp spectral_decomp(const Model& model) {
  const MatrixXd k = detail::output_prior_cov(model);
  const Index n = k.rows();
  SpectralDecomp out;
  if (linalg::is_diagonal(k)) {
    std::vector<Index> order(static_cast<std::size_t>(n));
    std::iota(order.begin(), order.end(), Index{0});
    std::stable_sort(order.begin(), order.end(), [&](Index a, Index b) {
      return k(a, a) > k(b, b);
    });
    out.lambdas.resize(n);
    out.vecs = MatrixXd::Zero(n, n);
    for (Index i = 0; i < n; ++i) {
      out.lambdas(i) = k(order[i], order[i]);
      out.vecs(order[i], i) = 1.0;
    }
  } else {
    Eigen::SelfAdjointEigenSolver<MatrixXd> es(k);
    if (es.info() != Eigen::Success)
      throw NumericalError("spectral_decomp: eigensolver failed");
    out.lambdas = es.eigenvalues().reverse();
    out.vecs = es.eigenvectors().rowwise().reverse();
  }
  const double scale = n > 0 ? std::max(out.lambdas.maxCoeff(), 0.0) : 0.0;
  for (Index i = 0; i < n; ++i)
    if (out.lambdas(i) < 0.0 && out.lambdas(i) >= -1e-12 * scale)
      out.lambdas(i) = 0.0;
  return out;
}

/// Maximizes sum_i log(p_i + eta_i / sigma2) subject to sum eta = budget and
/// eta >= 0. Ties at the waterline all enter the active set. Results are in
/// input order.
inline Allocation water_fill(const VectorXd& prior_precisions, double budget,
                             double sigma2) {
  const Index k = prior_precisions.size();
  if (k == 0) throw std::invalid_argument("water_fill: no modes");
  if (!(budget > 0.0) || !std::isfinite(budget))
    throw std::invalid_argument("water_fill: budget must be positive");
  if (!(sigma2 > 0.0) || !std::isfinite(sigma2))
    throw std::invalid_argument("water_fill: sigma2 must be positive");
  for (Index i = 0; i < k; ++i)
    if (!(prior_precisions(i) > 0.0) || !std::isfinite(prior_precisions(i)))
      throw std::invalid_argument("water_fill: precisions must be positive");

  std::vector<Index> order(static_cast<std::size_t>(k));
  std::iota(order.begin(), order.end(), Index{0});
  std::stable_sort(order.begin(), order.end(), [&](Index a, Index b) {
    return prior_precisions(a) < prior_precisions(b);
  });

  const double water = budget / sigma2;
  double prefix = 0.0;
  double level = 0.0;
  Index count = 0;
  for (Index i = 0; i < k; ++i) {
    prefix += prior_precisions(order[i]);
    count = i + 1;
    level = (water + prefix) / static_cast<double>(count);
    if (count == k || level <= prior_precisions(order[count])) break;
  }

  Allocation out;
  out.eta = VectorXd::Zero(k);
  for (Index i = 0; i < count; ++i) {
    const Index idx = order[i];
    out.eta(idx) = std::max(0.0, sigma2 * (level - prior_precisions(idx)));
  }
  out.level = level;
  out.active = (out.eta.array() > 0.0).count();
  out.budget = budget;
  return out;
}

/// m sequential unit-budget water-fills, each updating the precisions.
inline GreedyAllocation greedy_unit_allocation(const VectorXd& prior_precisions,
                                               Index m, double sigma2) {
  if (m < 1) throw std::invalid_argument("greedy_unit_allocation: m >= 1");
  const Index k = prior_precisions.size();
  GreedyAllocation out;
  out.steps = MatrixXd::Zero(m, k);
  VectorXd current = prior_precisions;
  for (Index t = 0; t < m; ++t) {
    const Allocation step = water_fill(current, 1.0, sigma2);
    out.steps.row(t) = step.eta.transpose();
    current += step.eta / sigma2;
  }
  out.totals = out.steps.colwise().sum().transpose();
  return out;
}

/// Pairs (t-1, t), 0-based, of consecutive greedy steps that spend identical
/// weights, i.e. repeated measurements.
inline std::vector<std::pair<Index, Index>> repeated_steps(
    const GreedyAllocation& greedy, double tol = 1e-12) {
  std::vector<std::pair<Index, Index>> out;
  for (Index t = 1; t < greedy.steps.rows(); ++t)
    if ((greedy.steps.row(t) - greedy.steps.row(t - 1)).cwiseAbs().maxCoeff() <=
        tol)
      out.emplace_back(t - 1, t);
  return out;
}

/// A (k x m) with unit-norm columns and A A^t = M for symmetric PSD M with
/// trace m. M = U D U^t, A = U S V^t with S_ii = sqrt(d_i); V is a product
/// of Givens rotations that zeroes the diagonal of C = S^t S - I from the
/// last entry to the first, pairing each entry with the first earlier entry
/// of opposite sign.
inline GramFactor unit_norm_gram_factor(const MatrixXd& target, Index m) {
  const Index k = target.rows();
  detail::require_dims(k >= 1 && target.cols() == k,
                       "unit_norm_gram_factor: M must be square");
  if (m < k)
    throw std::invalid_argument("unit_norm_gram_factor: need m >= k");
  if (!linalg::is_symmetric(target, 1e-10))
    throw std::invalid_argument("unit_norm_gram_factor: M is not symmetric");
  const double trace = target.trace();
  if (std::abs(trace - static_cast<double>(m)) >= 1e-10)
    throw std::invalid_argument("unit_norm_gram_factor: trace " +
                                std::to_string(trace) + " differs from m = " +
                                std::to_string(m));

  Eigen::SelfAdjointEigenSolver<MatrixXd> es(linalg::symmetrized(target));
  VectorXd d = es.eigenvalues();
  const double scale = std::max(1.0, d.cwiseAbs().maxCoeff());
  if (d.minCoeff() < -1e-10 * scale)
    throw std::invalid_argument("unit_norm_gram_factor: M is not PSD");
  d = d.cwiseMax(0.0);

  MatrixXd s = MatrixXd::Zero(k, m);
  for (Index i = 0; i < k; ++i) s(i, i) = std::sqrt(d(i));

  MatrixXd c = s.transpose() * s - MatrixXd::Identity(m, m);
  MatrixXd v = MatrixXd::Identity(m, m);
  const double tol = 1e-14 * static_cast<double>(m);

  for (Index j = m - 1; j >= 1; --j) {
    const double cjj = c(j, j);
    if (std::abs(cjj) <= tol) continue;
    Index p = -1;
    for (Index q = 0; q < j; ++q)
      if (c(q, q) * cjj < 0.0) {
        p = q;
        break;
      }
    if (p < 0) continue;  // remaining diagonal is zero up to rounding
    // c_jj cot^2 + 2 c_jp cot + c_pp = 0
    const double cjp = c(j, p);
    const double disc = std::sqrt(cjp * cjp - cjj * c(p, p));
    const double cot = (-cjp + disc) / cjj;
    const double r = std::hypot(1.0, cot);
    const double sn = 1.0 / r;
    const double cs = cot / r;
    // R = I except R_pp = R_jj = cs, R_pj = -sn, R_jp = sn.
    MatrixXd rot = MatrixXd::Identity(m, m);
    rot(p, p) = cs;
    rot(j, j) = cs;
    rot(p, j) = -sn;
    rot(j, p) = sn;
    c = linalg::symmetrized(rot * c * rot.transpose());
    c(j, j) = 0.0;
    v = rot * v;
  }
  return {es.eigenvectors() * s * v.transpose(), v};
}

/// Spectral form of the criterion for an allocation aligned with `lambdas`:
/// 1/2 sum log(1 + lambda_i eta_i / sigma2).
inline double spectral_objective(const Allocation& alloc,
                                 const VectorXd& lambdas, double sigma2) {
  detail::require_dims(alloc.eta.size() == lambdas.size(),
                       "spectral_objective: eta and lambdas differ in length");
  double phi = 0.0;
  for (Index i = 0; i < lambdas.size(); ++i)
    if (alloc.eta(i) != 0.0)
      phi += 0.5 * std::log1p(lambdas(i) * alloc.eta(i) / sigma2);
  return phi;
}

/// Builds unit-row observations whose Gram matrix O^t O is
/// W diag(eta) W^t, W the eigenvectors of F Gamma_pr F^t. `alloc.eta[i]`
/// refers to mode i of spectral_decomp(model).
inline ObservationMatrix design_from_allocation(const Model& model,
                                                const Allocation& alloc) {
  if (model.has_model_error())
    throw std::invalid_argument(
        "design_from_allocation: requires zero model error");
  const double rounded = std::round(alloc.budget);
  if (!(rounded >= 1.0) || std::abs(alloc.budget - rounded) > 1e-9)
    throw std::invalid_argument(
        "design_from_allocation: budget must be a positive integer");
  const Index m = static_cast<Index>(rounded);

  const SpectralDecomp decomp = spectral_decomp(model);
  detail::require_dims(alloc.eta.size() <= decomp.positive_count(),
                       "design_from_allocation: allocation covers modes with "
                       "zero eigenvalue or beyond n");
  std::vector<Index> active;
  for (Index i = 0; i < alloc.eta.size(); ++i)
    if (alloc.eta(i) > 0.0) active.push_back(i);
  const Index a = static_cast<Index>(active.size());
  if (a == 0)
    throw std::invalid_argument("design_from_allocation: empty allocation");
  if (a > m)
    throw std::invalid_argument(
        "design_from_allocation: " + std::to_string(a) +
        " active modes cannot be spanned by " + std::to_string(m) + " rows");

  MatrixXd target = MatrixXd::Zero(a, a);
  MatrixXd w(model.n(), a);
  for (Index i = 0; i < a; ++i) {
    target(i, i) = alloc.eta(active[i]);
    w.col(i) = decomp.vecs.col(active[i]);
  }
  target *= static_cast<double>(m) / target.trace();
  const GramFactor gram = unit_norm_gram_factor(target, m);
  return ObservationMatrix((w * gram.a).transpose());
}

/// Relative Frobenius norm of [O^t O, F Gamma_pr F^t].
inline double commutator_residual(const ObservationMatrix& design,
                                  const Model& model) {
  detail::require_compatible(design, model, "commutator_residual");
  const MatrixXd gram = design.matrix().transpose() * design.matrix();
  const MatrixXd k = detail::output_prior_cov(model);
  const MatrixXd comm = gram * k - k * gram;
  return comm.norm() / (gram.norm() * k.norm() + 1e-300);
}

}  // namespace dopt
