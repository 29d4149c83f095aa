// Command-line front end: fit estimators on trajectory files, run the Monte
// Carlo harness, and pin the large-sample truth fixture.

#include <cstdio>
#include <filesystem>
#include <fstream>
#include <iostream>

#include "CLI11.hpp"
#include "json.hpp"
#include "msmkit/config.hpp"
#include "msmkit/report_io.hpp"

namespace fs = std::filesystem;
using namespace msmkit;

namespace {

struct CommonArgs {
  std::string config_path;
  std::string out_dir;
  int threads = -1;
  long long seed = -1;
};

void add_common(CLI::App* cmd, CommonArgs* args) {
  cmd->add_option("--config", args->config_path, "configuration file")->required();
  cmd->add_option("--out", args->out_dir, "output directory (overrides out.dir)");
  cmd->add_option("--threads", args->threads, "worker thread count (0 = all cores)");
  cmd->add_option("--seed", args->seed, "master seed (overrides config)");
}

RunConfig load_config(const CommonArgs& args) {
  RunConfig rc = parse_run_config(args.config_path);
  if (!args.out_dir.empty()) rc.out_dir = args.out_dir;
  if (args.threads >= 0) rc.threads = args.threads;
  if (args.seed >= 0) rc.seed = static_cast<std::uint64_t>(args.seed);
  fs::create_directories(rc.out_dir);
  return rc;
}

ReferenceMeasure measure_from_config(const RunConfig& rc,
                                     const TrajectoryDataset& ds) {
  if (rc.lambda_kind == "fitted_marginal") return ReferenceMeasure::fitted_marginal(ds);
  if (rc.lambda_kind == "fitted_conditional") return ReferenceMeasure::fitted_conditional(ds);
  if (rc.lambda_kind == "fixed") {
    if (static_cast<int>(rc.lambda_fixed.size()) != ds.tau()) {
      throw SchemaError("config: lambda.kind=fixed needs lambda.fixed.t for every t");
    }
    return ReferenceMeasure::fixed(ds.support(), rc.lambda_fixed);
  }
  throw SchemaError("config: unknown lambda.kind '" + rc.lambda_kind + "'");
}

EstimatorOptions options_from_config(const RunConfig& rc) {
  EstimatorOptions opts;
  opts.truncation = rc.truncation;
  opts.ci_level = rc.ci_level;
  opts.bootstrap = rc.bootstrap;
  opts.seed = rc.seed;
  opts.mc_draws = rc.mc_draws;
  opts.lattice_cap = rc.lattice_cap;
  if (rc.lattice_mode == "mc") {
    opts.lattice_mode = LatticeMode::MonteCarlo;
  } else if (rc.lattice_mode != "exact") {
    throw SchemaError("config: lattice.mode must be exact or mc");
  }
  return opts;
}

int cmd_fit(const CommonArgs& args) {
  const RunConfig rc = load_config(args);
  if (rc.data_path.empty()) throw SchemaError("config: data.path required for fit");
  const TrajectoryDataset ds = load_csv(rc.data_path, rc.schema);
  const ReferenceMeasure lam = measure_from_config(rc, ds);
  std::vector<std::string> baseline_names = rc.schema.baseline_cols;
  if (baseline_names.empty()) baseline_names = rc.schema.covariate_cols[0];
  const WorkingModel model{parse_link(rc.link),
                           FeatureMap::parse(rc.features, ds.tau(), baseline_names)};
  const EstimatorOptions opts = options_from_config(rc);
  const auto outcome_specs = rc.outcome_specs(ds.tau());
  const auto pmf_specs = rc.pmf_specs(ds.tau());

  std::printf("%-8s %-12s %-12s %-12s %-12s\n", "est", "term", "beta", "se",
              "95% CI");
  for (const auto& est : rc.estimators) {
    EstimateReport report;
    if (est == "ipw") {
      report = fit_ipw(ds, lam, model, pmf_specs, opts);
    } else if (est == "gcomp") {
      report = fit_gcomp(ds, lam, model, outcome_specs, opts);
    } else if (est == "sdr") {
      const FoldAssignment folds = make_folds(ds.n(), rc.folds, derive_seed(rc.seed, 0xf01d5ULL));
      report = fit_sdr(ds, lam, model, pmf_specs, outcome_specs, folds, opts);
    } else if (est == "tmle") {
      const FoldAssignment folds = make_folds(ds.n(), rc.folds, derive_seed(rc.seed, 0xf01d5ULL));
      report = fit_tmle(ds, lam, model, pmf_specs, outcome_specs, folds, opts);
    } else {
      throw SchemaError("unknown estimator '" + est + "'");
    }
    write_estimate_report(report, rc.config_hash,
                          rc.out_dir + "/fit_" + est + ".json");
    for (int k = 0; k < report.d; ++k) {
      char se[32] = "-", ci[64] = "-";
      if (report.has_sigma) {
        std::snprintf(se, sizeof(se), "%.4g", std::sqrt(report.sigma(k, k) / report.n));
        std::snprintf(ci, sizeof(ci), "[%.4g, %.4g]", report.ci_low(k), report.ci_high(k));
      }
      std::printf("%-8s %-12d %-12.5g %-12s %-12s\n", est.c_str(), k,
                  report.beta(k), se, ci);
    }
  }
  return 0;
}

TruthFixture compute_truth(const RunConfig& rc) {
  const DgpConfig cfg = DgpConfig::reference();
  const ReferenceMeasure lam = exact_marginal_measure(cfg);
  const WorkingModel model{LinkKind::Logistic, FeatureMap::intercept_sum(cfg.tau)};
  const TruthOracle oracle =
      true_beta_oracle(cfg, model, lam, rc.truth_n, derive_seed(rc.seed, 0x7472ULL));
  TruthFixture fx;
  fx.config_hash = cfg.config_hash();
  fx.n_oracle = oracle.n;
  fx.seed = oracle.seed;
  fx.lambda = exact_treatment_marginals(cfg);
  fx.beta_star = oracle.beta;
  fx.beta_star_se = oracle.se;
  fx.beta_star_exact = exact_beta(cfg, model, lam);
  return fx;
}

int cmd_truth(const CommonArgs& args) {
  const RunConfig rc = load_config(args);
  const TruthFixture fx = compute_truth(rc);
  const std::string path = rc.out_dir + "/reference_truth.json";
  write_truth_fixture(fx, path);
  std::printf("truth fixture written to %s\n", path.c_str());
  std::printf("beta* (oracle IPW, n=%ld): intercept %.6f, slope %.6f\n",
              fx.n_oracle, fx.beta_star(0), fx.beta_star(1));
  std::printf("beta* (exact enumeration):  intercept %.6f, slope %.6f\n",
              fx.beta_star_exact(0), fx.beta_star_exact(1));
  return 0;
}

int run_simulation(const CommonArgs& args, bool full_benchmark) {
  const RunConfig rc = load_config(args);
  const DgpConfig cfg = DgpConfig::reference();

  // Use the pinned truth fixture when available; otherwise fall back to the
  // exact enumeration values (identical target, no Monte Carlo error).
  TruthFixture fx;
  const std::string fixture_path = "fixtures/reference_truth.json";
  if (fs::exists(fixture_path)) {
    fx = read_truth_fixture(fixture_path);
    if (fx.config_hash != cfg.config_hash()) {
      throw SchemaError("truth fixture was pinned for a different DGP config");
    }
  } else {
    const WorkingModel model{LinkKind::Logistic, FeatureMap::intercept_sum(cfg.tau)};
    const ReferenceMeasure lam0 = exact_marginal_measure(cfg);
    fx.config_hash = cfg.config_hash();
    fx.lambda = exact_treatment_marginals(cfg);
    fx.beta_star = exact_beta(cfg, model, lam0);
    std::fprintf(stderr, "note: no truth fixture found; using exact enumeration truth\n");
  }
  const ReferenceMeasure lam =
      ReferenceMeasure::fixed(TreatmentSupport{std::vector<std::vector<int>>(
                                  cfg.tau, {0, 1, 2, 3, 4})},
                              fx.lambda);

  HarnessConfig hc;
  hc.estimators = rc.estimators;
  hc.n_grid = rc.n_grid;
  hc.replicates = rc.replicates;
  hc.folds = rc.folds;
  hc.stack_folds = rc.stack_folds;
  hc.truncation = rc.truncation;
  hc.seed = rc.seed;
  hc.threads = rc.threads;

  std::vector<int> scenario_ids = rc.scenarios;
  if (full_benchmark) scenario_ids = {1, 2, 3, 4, 5};
  for (int id : scenario_ids) {
    const ScenarioSpec spec = ScenarioSpec::numbered(id, cfg.tau);
    const McReport report = run_scenario(cfg, spec, hc, lam, fx.beta_star);
    const std::string base = rc.out_dir + "/" + spec.name;
    write_mc_report(report, base + ".csv", base + ".json");
    std::printf("%s done: %zu metric cells -> %s.csv\n", spec.name.c_str(),
                report.cells.size(), base.c_str());
  }
  return 0;
}

void write_error(const std::string& out_dir, const std::string& type,
                 const std::string& message) {
  try {
    if (out_dir.empty()) return;
    fs::create_directories(out_dir);
    nlohmann::ordered_json j;
    j["tool"] = kToolVersion;
    j["error_type"] = type;
    j["message"] = message;
    std::ofstream out(out_dir + "/error.json");
    out << j.dump(2) << "\n";
  } catch (...) {
  }
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"working marginal structural model estimation toolkit"};
  app.require_subcommand(1);

  CommonArgs fit_args, sim_args, bench_args, truth_args;
  CLI::App* fit = app.add_subcommand("fit", "fit estimators on a trajectory CSV");
  add_common(fit, &fit_args);
  CLI::App* sim = app.add_subcommand("simulate", "run configured simulation scenarios");
  add_common(sim, &sim_args);
  CLI::App* bench = app.add_subcommand("benchmark", "run the full scenario grid (1-5)");
  add_common(bench, &bench_args);
  CLI::App* truth = app.add_subcommand("truth", "compute and pin the truth fixture");
  add_common(truth, &truth_args);

  CLI11_PARSE(app, argc, argv);

  std::string out_dir;
  try {
    if (fit->parsed()) {
      out_dir = fit_args.out_dir;
      return cmd_fit(fit_args);
    }
    if (sim->parsed()) {
      out_dir = sim_args.out_dir;
      return run_simulation(sim_args, false);
    }
    if (bench->parsed()) {
      out_dir = bench_args.out_dir;
      return run_simulation(bench_args, true);
    }
    if (truth->parsed()) {
      out_dir = truth_args.out_dir;
      return cmd_truth(truth_args);
    }
  } catch (const SchemaError& e) {
    std::fprintf(stderr, "error: %s\n", e.what());
    write_error(out_dir, "schema", e.what());
    return 1;
  } catch (const ParseError& e) {
    std::fprintf(stderr, "error: %s\n", e.what());
    write_error(out_dir, "parse", e.what());
    return 1;
  } catch (const ContractError& e) {
    std::fprintf(stderr, "error: %s\n", e.what());
    write_error(out_dir, "contract", e.what());
    return 1;
  } catch (const Error& e) {
    std::fprintf(stderr, "internal error: %s\n", e.what());
    write_error(out_dir, "internal", e.what());
    return 2;
  } catch (const std::exception& e) {
    std::fprintf(stderr, "internal error: %s\n", e.what());
    write_error(out_dir, "internal", e.what());
    return 2;
  }
  return 0;
}
