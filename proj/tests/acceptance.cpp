// Acceptance suite: one PASS/FAIL line per criterion, exit status 1 if any
// criterion fails. Each criterion is timed against its own budget.

#include <algorithm>
#include <chrono>
#include <cmath>
#include <cstdio>
#include <functional>
#include <string>
#include <vector>

#include "cli_runner.hpp"
#include "dopt/dopt.hpp"
#include "dopt/random_instance.hpp"
#include "oracles.hpp"

namespace {

using dopt::Index;
using dopt::MatrixXd;
using dopt::Model;
using dopt::ObservationMatrix;
using dopt::VectorXd;
namespace rnd = dopt::random;
namespace heat = dopt::heat1d;
namespace fs = std::filesystem;

struct Outcome {
  bool pass = true;
  std::string detail;
};

std::string fmt(const char* f, double v) {
  char buf[64];
  std::snprintf(buf, sizeof buf, f, v);
  return buf;
}

VectorXd four_mode_precisions() {
  VectorXd p(4);
  p << 0.2, 0.8, 2.2, 3.5;
  return p;
}

// --- 1 ---------------------------------------------------------------------
Outcome four_mode_greedy() {
  const auto g = dopt::greedy_unit_allocation(four_mode_precisions(), 6, 1.0);
  MatrixXd want(6, 4);
  const double t = 1.0 / 3.0;
  want << 0.8, 0.2, 0, 0, 0.5, 0.5, 0, 0, 0.5, 0.5, 0, 0, 0.4, 0.4, 0.2, 0, t,
      t, t, 0, t, t, t, 0;
  const double err = (g.steps - want).cwiseAbs().maxCoeff();
  const auto rep = dopt::repeated_steps(g);
  const bool flags = rep.size() == 2 && rep[0] == std::pair<Index, Index>{1, 2} &&
                     rep[1] == std::pair<Index, Index>{4, 5};
  return {err < 1e-12 && flags,
          "max step error " + fmt("%.3g", err) +
              (flags ? ", steps 2=3 and 5=6 flagged" : ", repeat flags wrong")};
}

// --- 2 ---------------------------------------------------------------------
Outcome four_mode_global() {
  const auto a = dopt::water_fill(four_mode_precisions(), 6.0, 1.0);
  const auto g = dopt::greedy_unit_allocation(four_mode_precisions(), 6, 1.0);
  VectorXd want(4);
  want << 43.0 / 15.0, 34.0 / 15.0, 13.0 / 15.0, 0.0;
  const double eta_err = (a.eta - want).cwiseAbs().maxCoeff();
  const double level_err = std::abs(a.level - 46.0 / 15.0);
  const double agree = (a.eta - g.totals).cwiseAbs().maxCoeff();
  return {eta_err < 1e-9 && level_err < 1e-9 && agree < 1e-9,
          "eta error " + fmt("%.3g", eta_err) + ", level error " +
              fmt("%.3g", level_err) + ", greedy/global gap " +
              fmt("%.3g", agree)};
}

// --- 3 ---------------------------------------------------------------------
Outcome gradient_suite() {
  rnd::Rng rng(3003);
  double worst = 0.0;
  int instances = 0;
  for (; instances < 20; ++instances) {
    const Index n = rnd::uniform_index(2, 8, rng);
    const Index m = rnd::uniform_index(1, 5, rng);
    const Model model = rnd::model({n, true, 1.0, -1.0}, rng);
    const ObservationMatrix o = rnd::design(m, n, rng);
    const auto g = dopt::objective_gradient(o, model);
    for (int k = 0; k < 10; ++k) {
      const MatrixXd v = rnd::gaussian(m, n, rng);
      const double fd = oracle::central_difference(
          [&](double t) {
            return dopt::objective(ObservationMatrix(o.matrix() + t * v),
                                   model);
          },
          1e-6);
      worst = std::max(worst, std::abs(dopt::frobenius_pair({v}, g) - fd) /
                                  (std::abs(fd) + 1e-12));
    }
  }
  return {worst < 1e-5, std::to_string(instances) +
                            " instances x 10 directions, worst rel error " +
                            fmt("%.3g", worst)};
}

// --- 4 ---------------------------------------------------------------------
Outcome mdl_oracle() {
  rnd::Rng rng(4004);
  double worst = 0.0;
  for (int c = 0; c < 100; ++c) {
    const Index n = rnd::uniform_index(1, 8, rng);
    const MatrixXd a =
        rnd::gaussian(n, n, rng) + 3.0 * MatrixXd::Identity(n, n);
    const VectorXd u = rnd::gaussian(n, 1, rng);
    const VectorXd v = rnd::gaussian(n, 1, rng);
    const double ratio = (a + u * v.transpose()).fullPivLu().determinant() /
                         a.fullPivLu().determinant();
    worst = std::max(worst,
                     std::abs(dopt::mdl_factor(a, u, v) - ratio) /
                         std::abs(ratio));
  }
  return {worst < 1e-10, "100 cases, worst rel error " + fmt("%.3g", worst)};
}

// --- 5 ---------------------------------------------------------------------
Outcome gain_formulas() {
  rnd::Rng rng(5005);
  double worst[3] = {0.0, 0.0, 0.0};
  const auto relerr = [](const dopt::GainReport& r) {
    return std::abs(r.formula - r.direct) / std::abs(r.direct);
  };
  for (int c = 0; c < 50; ++c) {
    const Index n = rnd::uniform_index(2, 8, rng);
    const Index m = rnd::uniform_index(2, 5, rng);
    {
      const Model model = rnd::model({n, true, 1.0, -1.0}, rng);
      worst[0] = std::max(
          worst[0], relerr(dopt::gain_of_measurement(rnd::design(m, n, rng),
                                                     model)));
    }
    {
      const Model model = rnd::model({n, false, 0.0, -1.0}, rng);
      worst[1] = std::max(
          worst[1], relerr(dopt::gain_no_model_error(rnd::design(m, n, rng),
                                                     model)));
    }
    {
      const Model model(rnd::spd(n, rng), rnd::gaussian(n, n, rng),
                        MatrixXd::Identity(n, n), rnd::uniform(0.1, 1.0, rng));
      const ObservationMatrix base = rnd::design(m - 1, n, rng);
      const Index j = rnd::uniform_index(0, m - 2, rng);
      worst[2] = std::max(
          worst[2], relerr(dopt::gain_identical_measurement(base, j, model)));
    }
  }
  const double w = std::max({worst[0], worst[1], worst[2]});
  return {w < 1e-8, "50 instances each, worst rel error general " +
                        fmt("%.3g", worst[0]) + ", no-model-error " +
                        fmt("%.3g", worst[1]) + ", identical " +
                        fmt("%.3g", worst[2])};
}

// --- 6 ---------------------------------------------------------------------
Outcome vanishing_gain() {
  rnd::Rng rng(6006);
  const Index n = 6;
  const MatrixXd prior = rnd::spd(n, rng);
  const MatrixXd fwd = rnd::gaussian(n, n, rng);
  const ObservationMatrix base = rnd::design(3, n, rng);
  std::vector<double> s2s = {1e-2, 1e-3, 1e-4, 1e-5}, gains;
  for (double s2 : s2s)
    gains.push_back(dopt::gain_identical_measurement(
                        base, 0, Model(prior, fwd, MatrixXd::Identity(n, n), s2))
                        .formula);
  bool decreasing = true;
  for (std::size_t i = 1; i < gains.size(); ++i)
    decreasing = decreasing && gains[i] < gains[i - 1];
  std::vector<double> ratios;
  for (std::size_t i = 1; i < gains.size(); ++i)
    ratios.push_back(gains[i] / s2s[i]);
  const double spread = *std::max_element(ratios.begin(), ratios.end()) /
                            *std::min_element(ratios.begin(), ratios.end()) -
                        1.0;
  return {decreasing && spread < 0.2,
          std::string(decreasing ? "strictly decreasing" : "NOT decreasing") +
              ", gain/sigma2 spread " + fmt("%.3g", 100 * spread) + "%"};
}

// --- 7 ---------------------------------------------------------------------
Outcome bigger_is_better() {
  rnd::Rng rng(7007);
  int violations = 0, checks = 0;
  for (int c = 0; c < 50; ++c) {
    const Index n = rnd::uniform_index(2, 8, rng);
    const Index m = rnd::uniform_index(1, 5, rng);
    const Model model = rnd::model({n, c % 2 == 0, 1.0, -1.0}, rng);
    const ObservationMatrix o = rnd::design(m, n, rng);
    const double base = dopt::objective(o, model);
    for (Index j = 0; j < m; ++j)
      for (double lam : {1.5, 3.0}) {
        MatrixXd s = o.matrix();
        s.row(j) *= lam;
        ++checks;
        if (!(dopt::objective(ObservationMatrix(s), model) > base))
          ++violations;
      }
  }
  return {violations == 0, std::to_string(checks) + " row scalings, " +
                               std::to_string(violations) + " violations"};
}

// --- 8 ---------------------------------------------------------------------
Outcome gram_factor() {
  rnd::Rng rng(8008);
  double col = 0.0, gram = 0.0;
  for (int c = 0; c < 100; ++c) {
    const Index k = rnd::uniform_index(1, 6, rng);
    const Index m = rnd::uniform_index(k, 12, rng);
    MatrixXd target = rnd::psd(k, rnd::uniform_index(1, k, rng), rng);
    target *= static_cast<double>(m) / target.trace();
    const auto gf = dopt::unit_norm_gram_factor(target, m);
    col = std::max(col,
                   (gf.a.colwise().norm().array() - 1.0).abs().maxCoeff());
    gram = std::max(gram, (gf.a * gf.a.transpose() - target).norm());
  }
  return {col < 1e-10 && gram < 1e-9,
          "100 targets, column norm error " + fmt("%.3g", col) +
              ", Gram error " + fmt("%.3g", gram)};
}

// --- 9 ---------------------------------------------------------------------
Outcome optimality_certificate() {
  const Model model(four_mode_precisions().cwiseInverse().asDiagonal(),
                    MatrixXd::Identity(4, 4), MatrixXd::Zero(4, 4), 1.0);
  const auto decomp = dopt::spectral_decomp(model);
  const auto alloc = dopt::water_fill(decomp.lambdas.cwiseInverse(), 6.0, 1.0);
  const ObservationMatrix o = dopt::design_from_allocation(model, alloc);
  const auto fit = dopt::lagrange_residual(o, model);
  const double xi_err = (fit.xi.array() - 15.0 / 46.0).abs().maxCoeff();
  const double comm = dopt::commutator_residual(o, model);
  const double obj_gap =
      std::abs(dopt::spectral_objective(alloc, decomp.lambdas, 1.0) -
               dopt::objective(o, model));
  return {fit.residual < 1e-8 && fit.xi_spread < 1e-8 && xi_err < 1e-8 &&
              comm < 1e-8 && obj_gap < 1e-8,
          "residual " + fmt("%.3g", fit.residual) + ", xi spread " +
              fmt("%.3g", fit.xi_spread) + ", xi - 15/46 " +
              fmt("%.3g", xi_err) + ", commutator " + fmt("%.3g", comm) +
              ", objective gap " + fmt("%.3g", obj_gap)};
}

// --- 10 --------------------------------------------------------------------
Outcome heat_prior_field() {
  heat::HeatConfig cfg;
  cfg.n_modes = 1000;
  const Model model = heat::build_heat_model(cfg);
  const VectorXd grid = heat::uniform_grid(cfg.grid_points);
  const VectorXd s = heat::posterior_pointwise_std(
      ObservationMatrix::empty(cfg.n_modes), model, grid);
  double worst = 0.0;
  for (Index i = 0; i < grid.size(); ++i) {
    const double x = grid(i);
    worst = std::max(worst,
                     std::abs(s(i) * s(i) - x * (heat::kPi - x) / heat::kPi));
  }
  return {worst < 1e-3, "max |s^2 - x(pi-x)/pi| " + fmt("%.3g", worst)};
}

// --- 11 --------------------------------------------------------------------
std::string describe(const heat::PlacementResult& r) {
  std::string out = "{";
  for (std::size_t i = 0; i < r.clusters.size(); ++i) {
    if (i) out += ", ";
    out += fmt("%.4f", r.clusters[i].representative);
    if (r.clusters[i].multiplicity > 1)
      out += "x" + std::to_string(r.clusters[i].multiplicity);
  }
  return out + "}";
}

// Best value over 50 random starts whose points are pairwise farther apart
// than the cluster tolerance, each polished by local ascent. Seeds differ
// from the optimizer's.
double best_distinct_polished(const heat::HeatConfig& cfg, Index m,
                              const heat::PlacementOptions& opts) {
  const Model model = heat::build_heat_model(cfg);
  const heat::LocationCriterion crit(model);
  double best = -INFINITY;
  int accepted = 0;
  for (std::uint64_t r = 0; accepted < 50; ++r) {
    const VectorXd x0 = heat::random_start(m, 0xACCE97ull, r);
    if (heat::cluster_locations(x0, opts.cluster_tol).size() !=
        static_cast<std::size_t>(m))
      continue;
    ++accepted;
    const auto a = heat::ascend(crit, x0, opts.max_iters, opts.grad_tol);
    best = std::max(best, dopt::objective(heat::sensor_rows(a.locations,
                                                            cfg.n_modes),
                                          model));
  }
  return best;
}

Outcome clusterization(const heat::HeatConfig& cfg) {
  const heat::PlacementOptions opts;
  const auto r4 = heat::optimize_placement(cfg, 4, opts);
  const auto r6 = heat::optimize_placement(cfg, 6, opts);
  const double best6 = best_distinct_polished(cfg, 6, opts);
  const bool four = r4.clusters.size() == 4;
  const bool fewer = r6.clusters.size() < 6;
  const bool beats = r6.objective_value >= best6 - 1e-10;
  return {four && fewer && beats,
          "T=" + fmt("%g", cfg.T) + ": m=4 -> " +
              std::to_string(r4.clusters.size()) + " clusters " +
              describe(r4) + (four ? "" : " [need 4]") + "; m=6 -> " +
              std::to_string(r6.clusters.size()) + " clusters " +
              describe(r6) + (fewer ? "" : " [need < 6]") + "; Phi " +
              fmt("%.10f", r6.objective_value) + " vs polished distinct " +
              fmt("%.10f", best6) + (beats ? "" : " [lower]")};
}

// --- 12 --------------------------------------------------------------------
bool numeric_table(const std::string& text, char sep, std::size_t cols,
                   bool header) {
  const auto rows = cli_runner::lines(text);
  if (rows.size() < (header ? 2u : 1u)) return false;
  for (std::size_t i = header ? 1 : 0; i < rows.size(); ++i) {
    const auto f = cli_runner::split(rows[i], sep);
    if (f.size() != cols) return false;
    for (const auto& x : f) {
      char* end = nullptr;
      std::strtod(x.c_str(), &end);
      if (x.empty() || *end != '\0') return false;
    }
  }
  return true;
}

Outcome cli_determinism() {
  const fs::path dir = cli_runner::scratch_dir("acceptance");
  const std::string out = " --out-dir \"" + dir.string() + "\"";
  const std::vector<std::string> files = {
      "stdv-heat-sens6.txt", "locs-heat-sens6.txt", "heat-sens6-summary.json",
      "waterfill-alloc.tsv", "waterfill-summary.json"};
  std::vector<std::string> first;
  std::string problems;
  for (int pass = 0; pass < 2; ++pass) {
    if (cli_runner::run("heat-place --m 6 --seed 11" + out) != 0)
      problems += " heat-place failed;";
    if (cli_runner::run("waterfill --precisions 0.2,0.8,2.2,3.5 --m 6" + out) !=
        0)
      problems += " waterfill failed;";
    for (std::size_t f = 0; f < files.size(); ++f) {
      const std::string bytes = cli_runner::slurp(dir / files[f]);
      if (pass == 0)
        first.push_back(bytes);
      else if (bytes != first[f])
        problems += " " + files[f] + " differs;";
      fs::remove(dir / files[f]);
    }
  }
  const auto alloc_rows = cli_runner::lines(first[3]);
  if (alloc_rows.empty() ||
      alloc_rows[0] != "eigenvector\tprior\to_1\to_2\to_3\to_4\to_5\to_6" ||
      !numeric_table(first[3], '\t', 8, true))
    problems += " alloc schema;";
  if (!numeric_table(first[0], ' ', 2, false) ||
      cli_runner::lines(first[0]).size() != 512)
    problems += " stdv schema;";
  if (!numeric_table(first[1], ' ', 2, false) ||
      cli_runner::lines(first[1]).size() != 6)
    problems += " locs schema;";
  const int ok = cli_runner::run("verify" + out);
  const int bad = cli_runner::run("verify --corrupt-gradient" + out);
  if (ok != 0) problems += " verify exit " + std::to_string(ok) + ";";
  if (bad != 1) problems += " negative control exit " + std::to_string(bad) + ";";
  fs::remove_all(dir);
  return {problems.empty(),
          problems.empty()
              ? "byte-identical reruns, schemas ok, verify exits 0 / 1"
              : problems};
}

struct Criterion {
  int id;
  const char* name;
  double budget_s;
  std::function<Outcome()> run;
};

}  // namespace

int main() {
  const heat::HeatConfig defaults;
  const std::vector<Criterion> criteria = {
      {1, "greedy allocation reproduces the four-mode table", 1, four_mode_greedy},
      {2, "global water-fill agrees with greedy totals", 1, four_mode_global},
      {3, "gradient matches central differences", 10, gradient_suite},
      {4, "determinant lemma matches dense ratios", 5, mdl_oracle},
      {5, "gain formulas match two-evaluation differences", 10, gain_formulas},
      {6, "identical-measurement gain vanishes linearly", 5, vanishing_gain},
      {7, "scaling a row up increases the criterion", 5, bigger_is_better},
      {8, "unit-norm Gram factor", 5, gram_factor},
      {9, "optimality certificate at the water-filled design", 1,
       optimality_certificate},
      {10, "heat prior variance matches the Green's function", 5,
       heat_prior_field},
      {11, "sensor clusterization at default settings", 120,
       [&] { return clusterization(defaults); }},
      {12, "CLI determinism, schemas and verify exit codes", 180,
       cli_determinism},
  };

  int failed = 0;
  for (const auto& c : criteria) {
    const auto t0 = std::chrono::steady_clock::now();
    Outcome o;
    try {
      o = c.run();
    } catch (const std::exception& e) {
      o = {false, std::string("threw: ") + e.what()};
    }
    const double secs =
        std::chrono::duration<double>(std::chrono::steady_clock::now() - t0)
            .count();
    const bool in_time = secs < c.budget_s;
    const bool pass = o.pass && in_time;
    if (!pass) ++failed;
    std::printf("criterion %2d: %s  %s | %s | %.3fs (limit %gs)%s\n", c.id,
                pass ? "PASS" : "FAIL", c.name, o.detail.c_str(), secs,
                c.budget_s, in_time ? "" : " TOO SLOW");
    std::fflush(stdout);
  }

  // Not a criterion: the same clusterization check at a shorter horizon,
  // printed for comparison with criterion 11.
  heat::HeatConfig shorter;
  shorter.T = 0.03;
  const Outcome note = clusterization(shorter);
  std::printf("note: %s at %s\n", note.pass ? "holds" : "fails",
              note.detail.c_str());

  std::printf("%d of %zu criteria passed\n",
              static_cast<int>(criteria.size()) - failed, criteria.size());
  return failed == 0 ? 0 : 1;
}
