#pragma once

// Testbed: u_t = u_xx on [0, pi] with homogeneous Dirichlet conditions. The
// unknown is the initial condition u_0 ~ N(0, (-d^2/dx^2)^{-1}) and data are
// noisy point values of u(., T). In the sine basis e_k(x) = sqrt(2/pi)
// sin(k x) both the prior and the heat semigroup are diagonal:
//   prior_cov_kk = 1/k^2,  forward_kk = exp(-k^2 T).

#include <Eigen/Dense>

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <limits>
#include <numbers>
#include <optional>
#include <random>
#include <string>
#include <thread>
#include <vector>

#include "dopt/criterion.hpp"
#include "dopt/errors.hpp"
#include "dopt/model.hpp"

namespace dopt::heat1d {

inline constexpr double kPi = std::numbers::pi;

struct HeatConfig {
  double T = 0.05;
  Index n_modes = 100;
  double sigma2 = 1.0;
  std::optional<VectorXd> model_err_diag;
  Index grid_points = 512;
};

struct PlacementOptions {
  int restarts = 200;
  int max_iters = 500;
  double grad_tol = 1e-8;
  std::uint64_t seed = 0;
  double cluster_tol = 1e-2 * kPi;
  /// Worker threads for restarts; 0 picks the hardware concurrency.
  unsigned threads = 0;
};

struct Cluster {
  double representative = 0.0;
  int multiplicity = 0;
};

struct PlacementResult {
  VectorXd locations;
  double objective_value = 0.0;
  std::vector<Cluster> clusters;
  int restarts_used = 0;
  bool converged = false;
};

/// One run of projected gradient ascent.
struct LocalAscent {
  VectorXd locations;
  double value = -std::numeric_limits<double>::infinity();
  int iterations = 0;
  bool converged = false;
  std::vector<double> trace;  // objective after every accepted step
};

inline Model build_heat_model(const HeatConfig& config) {
  if (!(config.T >= 0.0) || !std::isfinite(config.T))
    throw std::invalid_argument("heat1d: T must be nonnegative");
  if (config.n_modes < 1)
    throw std::invalid_argument("heat1d: n_modes must be at least 1");
  const Index n = config.n_modes;
  VectorXd prior(n), fwd(n);
  for (Index i = 0; i < n; ++i) {
    const double k = static_cast<double>(i + 1);
    prior(i) = 1.0 / (k * k);
    fwd(i) = std::exp(-k * k * config.T);
  }
  MatrixXd delta = MatrixXd::Zero(n, n);
  if (config.model_err_diag) {
    detail::require_dims(config.model_err_diag->size() == n,
                         "heat1d: model_err_diag must have n_modes entries");
    if ((config.model_err_diag->array() < 0.0).any())
      throw std::invalid_argument("heat1d: model error variances must be >= 0");
    delta.diagonal() = *config.model_err_diag;
  }
  return Model(prior.asDiagonal(), fwd.asDiagonal(), std::move(delta),
               config.sigma2);
}

namespace detail {

inline void require_in_domain(const VectorXd& x, const char* op) {
  for (Index j = 0; j < x.size(); ++j)
    if (!(x(j) >= 0.0 && x(j) <= kPi))
      throw std::invalid_argument(std::string(op) + ": location " +
                                  std::to_string(x(j)) +
                                  " outside [0, pi]");
}

}  // namespace detail

/// O_jk = sqrt(2/pi) sin(k x_j), k = 1..n_modes.
inline ObservationMatrix sensor_rows(const VectorXd& locations, Index n_modes) {
  detail::require_in_domain(locations, "sensor_rows");
  const double c = std::sqrt(2.0 / kPi);
  MatrixXd o(locations.size(), n_modes);
  for (Index j = 0; j < locations.size(); ++j)
    for (Index i = 0; i < n_modes; ++i)
      o(j, i) = c * std::sin(static_cast<double>(i + 1) * locations(j));
  return ObservationMatrix(std::move(o));
}

/// d O_jk / d x_j = sqrt(2/pi) k cos(k x_j).
inline MatrixXd sensor_rows_jacobian(const VectorXd& locations,
                                     Index n_modes) {
  detail::require_in_domain(locations, "sensor_rows_jacobian");
  const double c = std::sqrt(2.0 / kPi);
  MatrixXd d(locations.size(), n_modes);
  for (Index j = 0; j < locations.size(); ++j)
    for (Index i = 0; i < n_modes; ++i) {
      const double k = static_cast<double>(i + 1);
      d(j, i) = c * k * std::cos(k * locations(j));
    }
  return d;
}

inline VectorXd uniform_grid(Index points) {
  if (points < 2) throw std::invalid_argument("uniform_grid: need >= 2 points");
  return VectorXd::LinSpaced(points, 0.0, kPi);
}

/// s(x) = sqrt(e(x)^t Gamma_post e(x)) at every grid point.
inline VectorXd posterior_pointwise_std(const ObservationMatrix& design,
                                        const Model& model,
                                        const VectorXd& grid) {
  const MatrixXd e = sensor_rows(grid, model.n()).matrix();
  const MatrixXd post = posterior_cov(design, model).mat;
  VectorXd var;
  if (linalg::is_diagonal(post))
    var = e.array().square().matrix() * post.diagonal();
  else
    var = (e * post).cwiseProduct(e).rowwise().sum();
  return var.cwiseMax(0.0).cwiseSqrt();
}

/// Single-linkage grouping: neighbours (after sorting) closer than or equal
/// to `tol` share a cluster. Representative is the group mean.
inline std::vector<Cluster> cluster_locations(const VectorXd& locations,
                                              double tol) {
  if (!(tol > 0.0)) throw std::invalid_argument("cluster_locations: tol > 0");
  std::vector<double> xs(locations.data(), locations.data() + locations.size());
  std::sort(xs.begin(), xs.end());
  std::vector<Cluster> out;
  std::vector<double> sums;
  for (std::size_t i = 0; i < xs.size(); ++i) {
    if (i == 0 || xs[i] - xs[i - 1] > tol) {
      out.push_back({0.0, 0});
      sums.push_back(0.0);
    }
    sums.back() += xs[i];
    ++out.back().multiplicity;
  }
  for (std::size_t c = 0; c < out.size(); ++c)
    out[c].representative = sums[c] / out[c].multiplicity;
  return out;
}

/// x -> Phi(sensor_rows(x)) with its gradient in x.
class LocationCriterion {
 public:
  explicit LocationCriterion(const Model& model)
      : n_(model.n()), criterion_(model) {}

  double value(const VectorXd& x) const {
    return criterion_.evaluate(sensor_rows(x, n_).matrix(), false).value;
  }

  double value_and_gradient(const VectorXd& x, VectorXd& grad) const {
    const auto eval = criterion_.evaluate(sensor_rows(x, n_).matrix(), true);
    grad = eval.gradient.cwiseProduct(sensor_rows_jacobian(x, n_))
               .rowwise()
               .sum();
    return eval.value;
  }

 private:
  Index n_;
  dopt::detail::DataSpaceCriterion criterion_;
};

/// Projected gradient ascent on [0, pi]^m with Armijo backtracking.
/// Trial steps use a Barzilai-Borwein length; every accepted step satisfies
/// the sufficient-increase condition, so the trace is nondecreasing.
inline LocalAscent ascend(const LocationCriterion& crit, VectorXd x,
                          int max_iters, double grad_tol) {
  constexpr double kArmijo = 1e-4;
  const auto clip = [](VectorXd v) { return v.cwiseMax(0.0).cwiseMin(kPi); };
  const auto projected = [](const VectorXd& at, const VectorXd& g) {
    VectorXd pg = g;
    for (Index j = 0; j < g.size(); ++j)
      if ((at(j) <= 0.0 && g(j) < 0.0) || (at(j) >= kPi && g(j) > 0.0))
        pg(j) = 0.0;
    return pg;
  };

  x = clip(std::move(x));
  LocalAscent out;
  VectorXd g;
  double f = crit.value_and_gradient(x, g);
  out.trace.push_back(f);
  double step = 1.0;

  for (int it = 0; it < max_iters; ++it) {
    const VectorXd pg = projected(x, g);
    if (pg.lpNorm<Eigen::Infinity>() < grad_tol) {
      out.converged = true;
      break;
    }
    bool accepted = false;
    VectorXd x_new, g_new;
    double f_new = f;
    for (int bt = 0; bt < 60; ++bt) {
      x_new = clip(x + step * g);
      const VectorXd d = x_new - x;
      if (d.lpNorm<Eigen::Infinity>() == 0.0) break;
      f_new = crit.value(x_new);
      if (f_new >= f + kArmijo * g.dot(d)) {
        accepted = true;
        break;
      }
      step *= 0.5;
    }
    if (!accepted) break;
    crit.value_and_gradient(x_new, g_new);
    const VectorXd s = x_new - x;
    const VectorXd y = g_new - g;
    const double sy = s.dot(y);
    step = sy < 0.0 ? std::clamp(-s.squaredNorm() / sy, 1e-10, 1e3)
                    : std::min(2.0 * step, 1e3);
    x = std::move(x_new);
    g = std::move(g_new);
    f = f_new;
    out.trace.push_back(f);
    out.iterations = it + 1;
  }
  if (!out.converged)
    out.converged = projected(x, g).lpNorm<Eigen::Infinity>() < grad_tol;
  out.locations = std::move(x);
  out.value = f;
  return out;
}

/// Uniform random start in [0, pi]^m for restart `index`.
inline VectorXd random_start(Index m, std::uint64_t seed, std::uint64_t index) {
  std::seed_seq seq{static_cast<std::uint32_t>(seed),
                    static_cast<std::uint32_t>(seed >> 32),
                    static_cast<std::uint32_t>(index),
                    static_cast<std::uint32_t>(index >> 32)};
  std::mt19937_64 gen(seq);
  std::uniform_real_distribution<double> unif(0.0, kPi);
  VectorXd x(m);
  for (Index j = 0; j < m; ++j) x(j) = unif(gen);
  return x;
}

/// Multi-start maximization of Phi over sensor locations. The best restart
/// wins; ties go to the lowest restart index, so the result does not depend
/// on thread scheduling.
inline PlacementResult optimize_placement(const HeatConfig& config, Index m,
                                          const PlacementOptions& opts = {}) {
  if (m < 1) throw std::invalid_argument("optimize_placement: m >= 1");
  if (opts.restarts < 1)
    throw std::invalid_argument("optimize_placement: restarts >= 1");
  const Model model = build_heat_model(config);
  const LocationCriterion crit(model);

  const auto runs = static_cast<std::size_t>(opts.restarts);
  std::vector<LocalAscent> results(runs);
  unsigned workers = opts.threads != 0 ? opts.threads
                                       : std::max(1u, std::thread::hardware_concurrency());
  workers = std::min<unsigned>(workers, static_cast<unsigned>(runs));

  const auto work = [&](std::size_t begin, std::size_t stride) {
    for (std::size_t r = begin; r < runs; r += stride)
      results[r] = ascend(crit, random_start(m, opts.seed, r), opts.max_iters,
                          opts.grad_tol);
  };
  if (workers <= 1) {
    work(0, 1);
  } else {
    std::vector<std::thread> pool;
    pool.reserve(workers);
    for (unsigned w = 0; w < workers; ++w) pool.emplace_back(work, w, workers);
    for (auto& t : pool) t.join();
  }

  std::size_t best = 0;
  for (std::size_t r = 1; r < runs; ++r)
    if (results[r].value > results[best].value) best = r;

  PlacementResult out;
  out.locations = results[best].locations;
  std::sort(out.locations.data(), out.locations.data() + out.locations.size());
  out.objective_value = objective(sensor_rows(out.locations, model.n()), model);
  out.clusters = cluster_locations(out.locations, opts.cluster_tol);
  out.restarts_used = opts.restarts;
  out.converged = results[best].converged;
  return out;
}

}  // namespace dopt::heat1d
