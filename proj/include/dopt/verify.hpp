#pragma once

// Self-check suite behind `dopt verify`: runs the library's invariants on
// seeded random instances and on the four-mode water-filling example.

#include <Eigen/Dense>

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <limits>
#include <string>
#include <vector>

#include "dopt/criterion.hpp"
#include "dopt/model.hpp"
#include "dopt/random_instance.hpp"
#include "dopt/waterfill.hpp"

namespace dopt::verify {

struct Options {
  std::uint64_t seed = 0;
  Index max_n = 8;
  Index max_m = 5;
  /// Negative control: adds 1e-2 to every gradient entry before the
  /// finite-difference comparison.
  bool corrupt_gradient = false;
};

struct PropertyCheck {
  std::string name;
  bool passed = true;
  double worst = 0.0;      // largest observed error measure
  double threshold = 0.0;  // pass iff worst < threshold
  int cases = 0;
};

struct Report {
  std::vector<PropertyCheck> checks;

  bool all_passed() const {
    return std::all_of(checks.begin(), checks.end(),
                       [](const PropertyCheck& c) { return c.passed; });
  }
};

namespace detail {

class Tracker {
 public:
  Tracker(std::string name, double threshold) {
    check_.name = std::move(name);
    check_.threshold = threshold;
  }
  void record(double err) {
    ++check_.cases;
    if (!std::isfinite(err)) err = std::numeric_limits<double>::infinity();
    check_.worst = std::max(check_.worst, err);
  }
  void fail() {
    ++check_.cases;
    check_.worst = std::numeric_limits<double>::infinity();
  }
  PropertyCheck done() {
    check_.passed = check_.cases > 0 && check_.worst < check_.threshold;
    return check_;
  }

 private:
  PropertyCheck check_;
};

inline double central_difference(const ObservationMatrix& o,
                                 const MatrixXd& v, const Model& model,
                                 double tau) {
  const ObservationMatrix plus(o.matrix() + tau * v);
  const ObservationMatrix minus(o.matrix() - tau * v);
  return (objective(plus, model) - objective(minus, model)) / (2.0 * tau);
}

/// Four prior precisions and six measurements with sigma2 = 1.
inline Model reference_model() {
  VectorXd lambdas(4);
  lambdas << 1.0 / 0.2, 1.0 / 0.8, 1.0 / 2.2, 1.0 / 3.5;
  return Model(lambdas.asDiagonal(), MatrixXd::Identity(4, 4),
               MatrixXd::Zero(4, 4), 1.0);
}

}  // namespace detail

inline Report run(const Options& opts) {
  random::Rng rng(opts.seed);
  const Index max_n = std::max<Index>(opts.max_n, 2);
  const Index max_m = std::max<Index>(opts.max_m, 1);
  Report report;

  {
    detail::Tracker t("gradient_vs_finite_difference", 1e-5);
    for (int inst = 0; inst < 20; ++inst) {
      const Index n = random::uniform_index(2, max_n, rng);
      const Index m = random::uniform_index(1, max_m, rng);
      const Model model = random::model({n, true, 1.0, -1.0}, rng);
      const ObservationMatrix o = random::design(m, n, rng);
      Gradient g = objective_gradient(o, model);
      if (opts.corrupt_gradient) g.mat.array() += 1e-2;
      for (int k = 0; k < 10; ++k) {
        const MatrixXd v = random::gaussian(m, n, rng);
        const double fd = detail::central_difference(o, v, model, 1e-6);
        t.record(std::abs(frobenius_pair({v}, g) - fd) / (std::abs(fd) + 1e-12));
      }
    }
    report.checks.push_back(t.done());
  }

  {
    detail::Tracker t("determinant_lemma", 1e-10);
    for (int c = 0; c < 100; ++c) {
      const Index n = random::uniform_index(1, 8, rng);
      const MatrixXd a =
          random::gaussian(n, n, rng) + 3.0 * MatrixXd::Identity(n, n);
      const VectorXd u = random::gaussian(n, 1, rng);
      const VectorXd v = random::gaussian(n, 1, rng);
      const double ratio =
          (a + u * v.transpose()).determinant() / a.determinant();
      t.record(std::abs(mdl_factor(a, u, v) - ratio) / std::abs(ratio));
    }
    report.checks.push_back(t.done());
  }

  const auto gain_check = [&](const std::string& name, auto&& make) {
    detail::Tracker t(name, 1e-8);
    for (int c = 0; c < 20; ++c) {
      try {
        const GainReport r = make();
        t.record(r.abs_diff / (1.0 + std::abs(r.direct)));
      } catch (const std::exception&) {
        t.fail();
      }
    }
    report.checks.push_back(t.done());
  };
  gain_check("gain_of_measurement", [&] {
    const Index n = random::uniform_index(2, max_n, rng);
    const Index m = random::uniform_index(1, max_m, rng);
    const Model model = random::model({n, true, 1.0, -1.0}, rng);
    return gain_of_measurement(random::design(m, n, rng), model);
  });
  gain_check("gain_no_model_error", [&] {
    const Index n = random::uniform_index(2, max_n, rng);
    const Index m = random::uniform_index(1, max_m, rng);
    const Model model = random::model({n, false, 0.0, -1.0}, rng);
    return gain_no_model_error(random::design(m, n, rng), model);
  });
  gain_check("gain_identical_measurement", [&] {
    const Index n = random::uniform_index(2, max_n, rng);
    const Index m = random::uniform_index(2, std::max<Index>(max_m, 2), rng);
    const Model model = random::model({n, true, 1.0, -1.0}, rng);
    const ObservationMatrix base = random::design(m - 1, n, rng);
    return gain_identical_measurement(
        base, random::uniform_index(0, m - 2, rng), model);
  });

  {
    detail::Tracker t("bigger_is_better", 1.0);
    for (int c = 0; c < 20; ++c) {
      const Index n = random::uniform_index(2, max_n, rng);
      const Index m = random::uniform_index(1, max_m, rng);
      const Model model = random::model({n, c % 2 == 0, 1.0, -1.0}, rng);
      const ObservationMatrix o = random::design(m, n, rng);
      const double base = objective(o, model);
      for (double scale : {1.5, 3.0}) {
        MatrixXd scaled = o.matrix();
        scaled.row(random::uniform_index(0, m - 1, rng)) *= scale;
        t.record(objective(ObservationMatrix(scaled), model) > base ? 0.0
                                                                    : 2.0);
      }
    }
    report.checks.push_back(t.done());
  }

  {
    detail::Tracker t("water_fill_kkt", 1e-10);
    for (int c = 0; c < 50; ++c) {
      const Index k = random::uniform_index(1, 8, rng);
      VectorXd p(k);
      for (Index i = 0; i < k; ++i) p(i) = random::uniform(0.1, 5.0, rng);
      const double budget = random::uniform(0.1, 10.0, rng);
      const double s2 = random::uniform(0.1, 2.0, rng);
      const Allocation a = water_fill(p, budget, s2);
      double err = std::abs(a.eta.sum() - budget);
      for (Index i = 0; i < k; ++i) {
        if (a.eta(i) > 0.0)
          err = std::max(err, std::abs(p(i) + a.eta(i) / s2 - a.level));
        else
          err = std::max(err, std::max(0.0, a.level - p(i)));
      }
      t.record(err);
    }
    report.checks.push_back(t.done());
  }

  {
    detail::Tracker t("unit_norm_gram_factor", 1e-9);
    for (int c = 0; c < 50; ++c) {
      const Index k = random::uniform_index(1, 6, rng);
      const Index m = random::uniform_index(k, 12, rng);
      MatrixXd target = random::psd(k, k, rng);
      target *= static_cast<double>(m) / target.trace();
      const GramFactor gf = unit_norm_gram_factor(target, m);
      const double col = (gf.a.colwise().norm().array() - 1.0).abs().maxCoeff();
      const double gram = (gf.a * gf.a.transpose() - target).norm();
      t.record(std::max(col * 10.0, gram));
    }
    report.checks.push_back(t.done());
  }

  {
    const Model model = detail::reference_model();
    const SpectralDecomp decomp = spectral_decomp(model);
    const Allocation alloc =
        water_fill(decomp.lambdas.cwiseInverse(), 6.0, model.sigma2());
    const ObservationMatrix o = design_from_allocation(model, alloc);
    const LagrangeFit fit = lagrange_residual(o, model);
    const double xi_expected = 1.0 / (model.sigma2() * alloc.level);

    detail::Tracker lag("lagrange_residual_at_optimum", 1e-8);
    lag.record(std::max({fit.residual, fit.xi_spread,
                         std::abs(fit.xi(0) - xi_expected)}));
    report.checks.push_back(lag.done());

    detail::Tracker comm("commutator_residual_at_optimum", 1e-8);
    comm.record(commutator_residual(o, model));
    report.checks.push_back(comm.done());

    detail::Tracker cons("spectral_objective_consistency", 1e-8);
    cons.record(std::abs(spectral_objective(alloc, decomp.lambdas,
                                            model.sigma2()) -
                         objective(o, model)));
    report.checks.push_back(cons.done());
  }

  return report;
}

}  // namespace dopt::verify
