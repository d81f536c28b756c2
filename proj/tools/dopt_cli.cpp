// dopt: experiment runner for D-optimal sensor design.
//
//   dopt waterfill  --precisions 0.2,0.8,2.2,3.5 --m 6 --sigma2 1
//   dopt heat-place --m 6 --seed 0
//   dopt gain       --mode identical --sigma2 1e-3,1e-4,1e-5
//   dopt verify     --sizes n=8,m=5
//
// Exit codes: 0 success, 1 numerical or property failure, 2 usage error.

#include <CLI11.hpp>
#include <json.hpp>

#include <cmath>
#include <cstdint>
#include <iostream>
#include <map>
#include <optional>
#include <sstream>
#include <string>
#include <vector>

#include "dopt/dopt.hpp"
#include "dopt/random_instance.hpp"
#include "dopt/verify.hpp"
#include "output.hpp"

namespace {

using dopt::Index;
using dopt::MatrixXd;
using dopt::VectorXd;
using dopt::cli::fmt17;
using dopt::cli::OutputSet;
using json = nlohmann::ordered_json;

struct UsageError : std::invalid_argument {
  using std::invalid_argument::invalid_argument;
};

struct Common {
  std::string out_dir = ".";
  std::string prefix;
  std::uint64_t seed = 0;
};

void add_common(CLI::App* cmd, Common& c) {
  cmd->add_option("--out-dir", c.out_dir, "Directory for output files");
  cmd->add_option("--prefix", c.prefix, "File name prefix");
  cmd->add_option("--seed", c.seed, "Random seed");
}

json summary_head(const std::string& command, const json& params,
                  double objective, const std::vector<std::string>& outputs,
                  std::uint64_t seed) {
  json j;
  j["command"] = command;
  j["parameters"] = params;
  j["objective_value"] = objective;
  j["outputs"] = outputs;
  j["seed"] = seed;
  return j;
}

// ---------------------------------------------------------------- waterfill

struct WaterfillArgs {
  Common common;
  std::vector<double> precisions;
  std::optional<double> T;
  std::optional<Index> n_modes;
  Index m = 0;
  double sigma2 = 1.0;
};

int run_waterfill(const WaterfillArgs& a) {
  if (a.m < 1) throw UsageError("--m must be at least 1");
  const bool heat = a.T.has_value() || a.n_modes.has_value();
  if (heat == !a.precisions.empty())
    throw UsageError("give either --precisions or the heat flags --T/--n-modes");

  VectorXd p;
  json params;
  if (heat) {
    const double T = a.T.value_or(0.05);
    const Index n = a.n_modes.value_or(100);
    if (!(T >= 0.0) || n < 1) throw UsageError("invalid --T or --n-modes");
    std::vector<double> finite;
    for (Index k = 1; k <= n; ++k) {
      const double kk = static_cast<double>(k * k);
      const double prec = kk * std::exp(2.0 * kk * T);
      if (std::isfinite(prec)) finite.push_back(prec);
    }
    p = Eigen::Map<VectorXd>(finite.data(), static_cast<Index>(finite.size()));
    params["T"] = T;
    params["n_modes"] = n;
  } else {
    p = Eigen::Map<const VectorXd>(a.precisions.data(),
                                   static_cast<Index>(a.precisions.size()));
    params["precisions"] = a.precisions;
  }
  params["m"] = a.m;
  params["sigma2"] = a.sigma2;
  for (Index i = 0; i < p.size(); ++i)
    if (!(p(i) > 0.0)) throw UsageError("precisions must be positive");
  if (!(a.sigma2 > 0.0)) throw UsageError("--sigma2 must be positive");

  const auto greedy = dopt::greedy_unit_allocation(p, a.m, a.sigma2);
  const auto global = dopt::water_fill(p, static_cast<double>(a.m), a.sigma2);
  const auto repeats = dopt::repeated_steps(greedy);

  std::ostringstream table;
  table << "eigenvector\tprior";
  for (Index t = 1; t <= a.m; ++t) table << "\to_" << t;
  table << '\n';
  for (Index i = 0; i < p.size(); ++i) {
    table << (i + 1) << '\t' << fmt17(p(i));
    for (Index t = 0; t < a.m; ++t)
      table << '\t' << fmt17(greedy.steps(t, i) / a.sigma2);
    table << '\n';
  }

  const std::string prefix =
      a.common.prefix.empty() ? "waterfill" : a.common.prefix;
  OutputSet out(a.common.out_dir);
  out.add(prefix + "-alloc.tsv", table.str());
  const std::string summary_name = prefix + "-summary.json";
  auto outputs = out.paths();
  outputs.push_back((std::filesystem::path(a.common.out_dir) / summary_name)
                        .string());

  const VectorXd lambdas = p.cwiseInverse();
  json s = summary_head("waterfill", params,
                        dopt::spectral_objective(global, lambdas, a.sigma2),
                        outputs, a.common.seed);
  s["eta"] = std::vector<double>(global.eta.data(),
                                 global.eta.data() + global.eta.size());
  s["level"] = global.level;
  s["active"] = global.active;
  s["greedy_totals"] = std::vector<double>(
      greedy.totals.data(), greedy.totals.data() + greedy.totals.size());
  json pairs = json::array();
  for (const auto& [first, second] : repeats)
    pairs.push_back({first + 1, second + 1});
  s["repeated_steps"] = pairs;
  out.add(summary_name, s.dump(2) + "\n");
  out.commit();
  return 0;
}

// --------------------------------------------------------------- heat-place

struct HeatPlaceArgs {
  Common common;
  dopt::heat1d::HeatConfig config;
  std::optional<double> model_err;
  Index m = -1;
  dopt::heat1d::PlacementOptions opts;
};

int run_heat_place(HeatPlaceArgs a) {
  using namespace dopt::heat1d;
  if (a.m < 0) throw UsageError("--m must be nonnegative");
  if (!(a.config.T >= 0.0) || a.config.n_modes < 1 || a.config.grid_points < 2 ||
      !(a.config.sigma2 > 0.0) || a.opts.restarts < 1 || a.opts.max_iters < 0)
    throw UsageError("invalid heat-place flags");
  if (a.model_err) {
    if (!(*a.model_err >= 0.0)) throw UsageError("--model-err must be >= 0");
    a.config.model_err_diag =
        VectorXd::Constant(a.config.n_modes, *a.model_err);
  }
  a.opts.seed = a.common.seed;

  const dopt::Model model = build_heat_model(a.config);
  PlacementResult result;
  if (a.m > 0) {
    result = optimize_placement(a.config, a.m, a.opts);
  } else {
    result.locations = VectorXd(0);
    result.converged = true;
  }
  const dopt::ObservationMatrix design =
      sensor_rows(result.locations, model.n());
  const VectorXd grid = uniform_grid(a.config.grid_points);
  const VectorXd std_grid = posterior_pointwise_std(design, model, grid);
  const VectorXd std_locs =
      posterior_pointwise_std(design, model, result.locations);

  std::ostringstream stdv, locs;
  for (Index i = 0; i < grid.size(); ++i)
    stdv << fmt17(grid(i)) << ' ' << fmt17(std_grid(i)) << '\n';
  for (Index j = 0; j < result.locations.size(); ++j)
    locs << fmt17(result.locations(j)) << ' ' << fmt17(std_locs(j)) << '\n';

  const std::string prefix = a.common.prefix.empty()
                                 ? "heat-sens" + std::to_string(a.m)
                                 : a.common.prefix;
  OutputSet out(a.common.out_dir);
  out.add("stdv-" + prefix + ".txt", stdv.str());
  if (a.m > 0) out.add("locs-" + prefix + ".txt", locs.str());
  const std::string summary_name = prefix + "-summary.json";
  auto outputs = out.paths();
  outputs.push_back((std::filesystem::path(a.common.out_dir) / summary_name)
                        .string());

  json params;
  params["T"] = a.config.T;
  params["n_modes"] = a.config.n_modes;
  params["sigma2"] = a.config.sigma2;
  params["m"] = a.m;
  params["model_err"] = a.model_err.value_or(0.0);
  params["grid_points"] = a.config.grid_points;
  params["restarts"] = a.opts.restarts;
  params["max_iters"] = a.opts.max_iters;
  params["grad_tol"] = a.opts.grad_tol;
  params["cluster_tol"] = a.opts.cluster_tol;

  const double phi = a.m > 0 ? result.objective_value : 0.0;
  json s = summary_head("heat-place", params, phi, outputs, a.common.seed);
  s["locations"] = std::vector<double>(
      result.locations.data(),
      result.locations.data() + result.locations.size());
  json clusters = json::array();
  for (const auto& c : result.clusters)
    clusters.push_back(
        {{"location", c.representative}, {"multiplicity", c.multiplicity}});
  s["clusters"] = clusters;
  s["cluster_count"] = result.clusters.size();
  s["converged"] = result.converged;
  s["restarts_used"] = result.restarts_used;
  out.add(summary_name, s.dump(2) + "\n");
  out.commit();
  return 0;
}

// --------------------------------------------------------------------- gain

struct GainArgs {
  Common common;
  std::string mode;
  Index n = 6;
  Index m = 4;
  std::vector<double> sigma2 = {1.0};
  double delta_scale = 1.0;
  std::string delta_kind = "identity";
  Index index = 1;
  bool zero_last = false;
};

int run_gain(const GainArgs& a) {
  if (a.n < 1 || a.m < 1) throw UsageError("--n and --m must be positive");
  if (a.sigma2.empty()) throw UsageError("--sigma2 needs at least one value");
  for (double s : a.sigma2)
    if (!(s > 0.0)) throw UsageError("--sigma2 values must be positive");
  const bool identical = a.mode == "identical";
  if (identical && !(a.delta_scale > 0.0))
    throw UsageError("mode identical requires a nonzero model error");
  if (identical && a.m < 2) throw UsageError("mode identical needs --m >= 2");
  if (identical && (a.index < 1 || a.index > a.m - 1))
    throw UsageError("--index must lie in [1, m-1]");
  if (a.delta_kind != "identity" && a.delta_kind != "random")
    throw UsageError("--delta must be identity or random");

  dopt::random::Rng rng(a.common.seed);
  const MatrixXd prior = dopt::random::spd(a.n, rng);
  const MatrixXd fwd = dopt::random::gaussian(a.n, a.n, rng) /
                       std::sqrt(static_cast<double>(a.n));
  MatrixXd delta = MatrixXd::Zero(a.n, a.n);
  if (a.mode != "no-model-error") {
    delta = a.delta_kind == "identity"
                ? MatrixXd(MatrixXd::Identity(a.n, a.n))
                : dopt::random::psd(a.n, a.n, rng);
    delta *= a.delta_scale;
  }
  const Index rows = identical ? a.m - 1 : a.m;
  MatrixXd o = dopt::random::gaussian(rows, a.n, rng);
  if (a.zero_last && !identical) o.row(rows - 1).setZero();
  const dopt::ObservationMatrix design(o);

  std::ostringstream table;
  table << "sigma2\tformula\tdirect\tabs_diff\n";
  double first_phi = 0.0;
  for (std::size_t i = 0; i < a.sigma2.size(); ++i) {
    const dopt::Model model(prior, fwd, delta, a.sigma2[i]);
    dopt::GainReport r;
    if (a.mode == "general")
      r = dopt::gain_of_measurement(design, model);
    else if (a.mode == "no-model-error")
      r = dopt::gain_no_model_error(design, model);
    else
      r = dopt::gain_identical_measurement(design, a.index - 1, model);
    if (i == 0) {
      first_phi = identical
                      ? dopt::objective(design.with_row(design.row(a.index - 1)),
                                        model)
                      : dopt::objective(design, model);
    }
    table << fmt17(a.sigma2[i]) << '\t' << fmt17(r.formula) << '\t'
          << fmt17(r.direct) << '\t' << fmt17(r.abs_diff) << '\n';
  }

  const std::string prefix = a.common.prefix.empty() ? "gain" : a.common.prefix;
  OutputSet out(a.common.out_dir);
  out.add(prefix + "-gain.tsv", table.str());
  const std::string summary_name = prefix + "-summary.json";
  auto outputs = out.paths();
  outputs.push_back((std::filesystem::path(a.common.out_dir) / summary_name)
                        .string());
  json params;
  params["mode"] = a.mode;
  params["n"] = a.n;
  params["m"] = a.m;
  params["sigma2"] = a.sigma2;
  params["delta"] = a.mode == "no-model-error" ? "zero" : a.delta_kind;
  params["delta_scale"] = a.mode == "no-model-error" ? 0.0 : a.delta_scale;
  if (identical) params["index"] = a.index;
  params["zero_last"] = a.zero_last;
  out.add(summary_name, summary_head("gain", params, first_phi, outputs,
                                     a.common.seed)
                                .dump(2) +
                            "\n");
  out.commit();
  return 0;
}

// ------------------------------------------------------------------- verify

struct VerifyArgs {
  Common common;
  std::string sizes;
  bool corrupt_gradient = false;
};

std::map<std::string, Index> parse_sizes(const std::string& spec) {
  std::map<std::string, Index> out;
  std::stringstream ss(spec);
  std::string item;
  while (std::getline(ss, item, ',')) {
    const auto eq = item.find('=');
    if (eq == std::string::npos) throw UsageError("bad --sizes entry: " + item);
    const std::string key = item.substr(0, eq);
    if (key != "n" && key != "m") throw UsageError("--sizes keys are n and m");
    try {
      out[key] = std::stol(item.substr(eq + 1));
    } catch (const std::exception&) {
      throw UsageError("bad --sizes value: " + item);
    }
    if (out[key] < 1) throw UsageError("--sizes values must be positive");
  }
  return out;
}

int run_verify(const VerifyArgs& a) {
  dopt::verify::Options opts;
  opts.seed = a.common.seed;
  opts.corrupt_gradient = a.corrupt_gradient;
  if (!a.sizes.empty()) {
    const auto sizes = parse_sizes(a.sizes);
    if (sizes.count("n")) opts.max_n = sizes.at("n");
    if (sizes.count("m")) opts.max_m = sizes.at("m");
  }
  const dopt::verify::Report report = dopt::verify::run(opts);

  const std::string prefix = a.common.prefix.empty() ? "verify" : a.common.prefix;
  OutputSet out(a.common.out_dir);
  const std::string name = prefix + "-verify.json";
  json params;
  params["max_n"] = opts.max_n;
  params["max_m"] = opts.max_m;
  params["corrupt_gradient"] = opts.corrupt_gradient;
  json s = summary_head(
      "verify", params, 0.0,
      {(std::filesystem::path(a.common.out_dir) / name).string()},
      a.common.seed);
  json checks = json::array();
  for (const auto& c : report.checks) {
    std::cout << (c.passed ? "PASS " : "FAIL ") << c.name << " worst="
              << fmt17(c.worst) << " threshold=" << fmt17(c.threshold)
              << " cases=" << c.cases << '\n';
    json jc;
    jc["name"] = c.name;
    jc["passed"] = c.passed;
    jc["worst"] = std::isfinite(c.worst) ? json(c.worst) : json("inf");
    jc["threshold"] = c.threshold;
    jc["cases"] = c.cases;
    checks.push_back(jc);
  }
  s["checks"] = checks;
  s["all_passed"] = report.all_passed();
  out.add(name, s.dump(2) + "\n");
  out.commit();
  return report.all_passed() ? 0 : 1;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"D-optimal sensor design experiments"};
  app.require_subcommand(1);

  WaterfillArgs wf;
  auto* wf_cmd = app.add_subcommand("waterfill", "Greedy and global water-filling allocation");
  add_common(wf_cmd, wf.common);
  wf_cmd->add_option("--precisions", wf.precisions, "Prior precisions")->delimiter(',');
  wf_cmd->add_option("--T", wf.T, "Heat testbed final time");
  wf_cmd->add_option("--n-modes", wf.n_modes, "Heat testbed sine modes");
  wf_cmd->add_option("--m", wf.m, "Number of measurements")->required();
  wf_cmd->add_option("--sigma2", wf.sigma2, "Noise variance");

  HeatPlaceArgs hp;
  auto* hp_cmd = app.add_subcommand("heat-place", "Optimize sensor locations on the heat testbed");
  add_common(hp_cmd, hp.common);
  hp_cmd->add_option("--T", hp.config.T, "Final observation time");
  hp_cmd->add_option("--n-modes", hp.config.n_modes, "Sine modes");
  hp_cmd->add_option("--sigma2", hp.config.sigma2, "Noise variance");
  hp_cmd->add_option("--grid-points", hp.config.grid_points, "Grid for std curves");
  hp_cmd->add_option("--model-err", hp.model_err, "Model error variance per mode");
  hp_cmd->add_option("--m", hp.m, "Number of sensors")->required();
  hp_cmd->add_option("--restarts", hp.opts.restarts, "Random restarts");
  hp_cmd->add_option("--max-iters", hp.opts.max_iters, "Iterations per restart");
  hp_cmd->add_option("--grad-tol", hp.opts.grad_tol, "Projected gradient tolerance");
  hp_cmd->add_option("--cluster-tol", hp.opts.cluster_tol, "Cluster gap threshold");
  hp_cmd->add_option("--threads", hp.opts.threads, "Worker threads (0 = auto)");

  GainArgs gn;
  auto* gn_cmd = app.add_subcommand("gain", "Closed-form measurement gains against direct differences");
  add_common(gn_cmd, gn.common);
  gn_cmd->add_option("--mode", gn.mode, "general | no-model-error | identical")
      ->required()
      ->check(CLI::IsMember({"general", "no-model-error", "identical"}));
  gn_cmd->add_option("--n", gn.n, "Spectral modes");
  gn_cmd->add_option("--m", gn.m, "Measurements including the appended one");
  gn_cmd->add_option("--sigma2", gn.sigma2, "Noise variances to sweep")->delimiter(',');
  gn_cmd->add_option("--delta", gn.delta_kind, "identity | random");
  gn_cmd->add_option("--delta-scale", gn.delta_scale, "Model error scale");
  gn_cmd->add_option("--index", gn.index, "Repeated row (1-based) for mode identical");
  gn_cmd->add_flag("--zero-last", gn.zero_last, "Make the appended row zero");

  VerifyArgs vf;
  auto* vf_cmd = app.add_subcommand("verify", "Run the invariant suite");
  add_common(vf_cmd, vf.common);
  vf_cmd->add_option("--sizes", vf.sizes, "Size limits, e.g. n=8,m=5");
  vf_cmd->add_flag("--corrupt-gradient", vf.corrupt_gradient,
                   "Negative control: perturb the gradient by 1e-2");

  try {
    app.parse(argc, argv);
  } catch (const CLI::CallForHelp& e) {
    return app.exit(e);
  } catch (const CLI::ParseError& e) {
    std::cerr << "dopt: " << e.what() << '\n';
    return 2;
  }

  try {
    if (*wf_cmd) return run_waterfill(wf);
    if (*hp_cmd) return run_heat_place(hp);
    if (*gn_cmd) return run_gain(gn);
    if (*vf_cmd) return run_verify(vf);
  } catch (const dopt::NumericalError& e) {
    std::cerr << "dopt: numerical failure: " << e.what() << '\n';
    return 1;
  } catch (const std::invalid_argument& e) {
    std::cerr << "dopt: " << e.what() << '\n';
    return 2;
  } catch (const std::out_of_range& e) {
    std::cerr << "dopt: " << e.what() << '\n';
    return 2;
  } catch (const std::exception& e) {
    std::cerr << "dopt: " << e.what() << '\n';
    return 1;
  }
  return 2;
}
