#include <CLI11.hpp>

#include <filesystem>
#include <iostream>
#include <string>

#include "ifepanel/baselines.hpp"
#include "ifepanel/bias.hpp"
#include "ifepanel/io.hpp"
#include "ifepanel/lowrank.hpp"
#include "ifepanel/montecarlo.hpp"
#include "ifepanel/pipeline.hpp"
#include "ifepanel/threads.hpp"

namespace fs = std::filesystem;

namespace {

constexpr int kExitParse = 1;
constexpr int kExitNonConvergence = 2;
constexpr int kExitInference = 3;

struct EstimateArgs {
  std::string input;
  std::string family = "logit";
  std::string rank = "auto";
  double alpha = 0.05;
  int rmax = 5;
  std::string phi = "auto";
  std::string bias = "analytic";
  int threads = 0;
  double tol = 0.0;
  int max_iters = 0;
  std::uint64_t seed = 12345;
  std::string out = ".";
  bool dump_matrices = false;
};

int run_estimate(const EstimateArgs& args) {
  ife::LoadedPanel loaded;
  ife::Family family;
  ife::TwoStepOptions opts;
  try {
    family = ife::family_from_string(args.family);
    loaded = ife::read_panel_csv(args.input);
    ife::validate_panel(loaded.panel, family);

    opts.alpha = args.alpha;
    opts.r_max = args.rmax;
    if (args.rank != "auto") opts.rank = std::stoi(args.rank);
    if (args.phi != "auto") opts.phi = std::stod(args.phi);
    if (opts.rank && (*opts.rank < 0 ||
                      *opts.rank > std::min(loaded.panel.n(), loaded.panel.t())))
      throw ife::ArgumentError("--rank out of range for this panel");
    if (opts.phi && !(*opts.phi > 0)) throw ife::ArgumentError("--phi must be > 0");
    if (args.tol > 0.0) {
      opts.nnr.tol_rel_obj = args.tol;
      opts.local.tol_rel_obj = args.tol;
    }
    if (args.max_iters > 0) {
      opts.nnr.max_iters = args.max_iters;
      opts.local.max_iters = args.max_iters;
    }
    if (args.bias != "analytic" && args.bias != "jackknife" &&
        args.bias != "both" && args.bias != "none")
      throw ife::ArgumentError("--bias must be analytic|jackknife|both|none");
    fs::create_directories(args.out);
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << "\n";
    return kExitParse;
  }

  int exit_code = 0;
  ife::EstimateReport report;
  report.family = args.family;
  report.n = loaded.panel.n();
  report.t = loaded.panel.t();
  report.threads = ife::max_threads();
  report.unit_tokens = loaded.unit_tokens;
  report.time_tokens = loaded.time_tokens;

  try {
    const ife::TwoStepFit fit = ife::run_two_step(loaded.panel, family, opts);
    report.beta = fit.local.params.beta;
    report.r_hat = fit.r_used;
    report.rank_source = fit.rank_source;
    report.phi_hat = fit.phi_used;
    report.phi_tilde = fit.tuning ? fit.tuning->phi_tilde : fit.phi_used;
    report.iters_nnr = fit.nnr.iterations;
    report.iters_local = fit.local.iterations;
    report.objective = fit.local.objective;
    report.converged = fit.nnr.converged && fit.local.converged;
    if (!report.converged) {
      report.warnings.push_back(fit.nnr.converged
                                    ? "local stage hit the iteration limit"
                                    : "NNR stage hit the iteration limit");
      exit_code = kExitNonConvergence;
    }

    const bool want_analytic = args.bias == "analytic" || args.bias == "both";
    const bool want_jackknife = args.bias == "jackknife" || args.bias == "both";
    try {
      if (fit.r_used > 0 && loaded.panel.dx() > 0) {
        const ife::BiasComponents comp =
            ife::compute_bias_components(loaded.panel, family, fit.local.params);
        report.w_hat = comp.w_hat;
        if (want_analytic)
          report.beta_bc_analytic =
              ife::analytic_bias_correct(loaded.panel, family, fit.local.params,
                                         comp);
        report.se = ife::standard_errors(comp, loaded.panel.n(), loaded.panel.t());
      }
      if (want_jackknife && loaded.panel.dx() > 0)
        report.beta_bc_jackknife = ife::jackknife_correct(
            loaded.panel, family, fit.r_used, fit.local.params.beta, opts);
    } catch (const ife::InferenceError& e) {
      report.warnings.push_back(std::string("inference failed: ") + e.what());
      if (exit_code == 0) exit_code = kExitInference;
    } catch (const ife::JackknifeError& e) {
      report.warnings.push_back(std::string("jackknife failed: ") + e.what());
      if (exit_code == 0) exit_code = kExitNonConvergence;
    }

    if (fit.r_used > 0)
      report.convexity_probe_min = ife::hessian_probe_convexity(
          loaded.panel, family, fit.local.params, 10, args.seed);

    if (args.dump_matrices) {
      const ife::MatrixXd theta =
          fit.local.params.lambda * fit.local.params.gamma.transpose();
      ife::write_matrix_csv(theta, (fs::path(args.out) / "theta.csv").string());
      ife::write_matrix_csv(fit.local.params.lambda,
                            (fs::path(args.out) / "lambda.csv").string());
      ife::write_matrix_csv(fit.local.params.gamma,
                            (fs::path(args.out) / "gamma.csv").string());
    }
  } catch (const std::exception& e) {
    std::cerr << "error: estimation failed: " << e.what() << "\n";
    report.warnings.push_back(std::string("estimation failed: ") + e.what());
    ife::write_report_json(report,
                           (fs::path(args.out) / "report.json").string());
    return kExitNonConvergence;
  }

  ife::write_report_json(report, (fs::path(args.out) / "report.json").string());
  std::cout << "report written to " << (fs::path(args.out) / "report.json").string()
            << "\n";
  return exit_code;
}

struct SimulateArgs {
  std::string dgp = "logit_static";
  int n = 100;
  int t = 100;
  int reps = 1000;
  std::uint64_t seed = 1;
  double alpha = 0.05;
  int rmax = 5;
  int true_r = 2;
  std::string estimators;
  int threads = 0;
  double tol = 0.0;
  int max_iters = 0;
  std::string out = ".";
};

int run_simulate(const SimulateArgs& args) {
  ife::McConfig config;
  try {
    config.dgp = ife::dgp_from_string(args.dgp);
    config.n = args.n;
    config.t = args.t;
    config.replications = args.reps;
    config.seed = args.seed;
    config.alpha = args.alpha;
    config.r_max = args.rmax;
    config.true_r = args.true_r;
    if (!args.estimators.empty()) {
      std::stringstream ss(args.estimators);
      std::string name;
      while (std::getline(ss, name, ','))
        config.estimators.insert(ife::estimator_from_string(name));
    }
    if (args.tol > 0.0) config.solver.nnr.tol_rel_obj = args.tol;
    if (args.max_iters > 0) {
      config.solver.nnr.max_iters = args.max_iters;
      config.solver.local.max_iters = args.max_iters;
    }
    if (config.n < 2 || config.t < 2 || config.replications < 1)
      throw ife::ArgumentError("need n, t >= 2 and reps >= 1");
    fs::create_directories(args.out);
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << "\n";
    return kExitParse;
  }

  const ife::McResult result = ife::run_monte_carlo(config);
  const std::string table_path = (fs::path(args.out) / "mc_table.csv").string();
  ife::write_mc_table_csv(result, table_path);
  ife::write_mc_raw_json(result,
                         (fs::path(args.out) / "mc_raw.json").string());
  for (const std::string& w : result.warnings)
    std::cerr << "warning: " << w << "\n";
  std::cout << "table written to " << table_path << " (" << result.n_success
            << "/" << config.replications << " replications succeeded)\n";
  return 0;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Two-step estimation of nonlinear panel models with interactive fixed effects"};
  app.require_subcommand(1);

  EstimateArgs est;
  CLI::App* cmd_est = app.add_subcommand(
      "estimate", "Estimate a panel from a long-format CSV");
  cmd_est->add_option("--input", est.input, "Input CSV (unit,time,y,x1,...)")
      ->required();
  cmd_est->add_option("--family", est.family, "logit|probit|poisson");
  cmd_est->add_option("--rank", est.rank, "Number of factors, or 'auto'");
  cmd_est->add_option("--alpha", est.alpha, "Tuning slack (1+alpha)");
  cmd_est->add_option("--rmax", est.rmax, "Maximum rank for selection");
  cmd_est->add_option("--phi", est.phi, "Regularization level, or 'auto'");
  cmd_est->add_option("--bias", est.bias, "analytic|jackknife|both|none");
  cmd_est->add_option("--threads", est.threads, "Worker threads")
      ->envname("IFE_THREADS");
  cmd_est->add_option("--tol", est.tol, "Solver relative-objective tolerance");
  cmd_est->add_option("--max-iters", est.max_iters, "Solver iteration cap");
  cmd_est->add_option("--seed", est.seed, "Seed for diagnostics probes");
  cmd_est->add_option("--out", est.out, "Output directory");
  cmd_est->add_flag("--dump-matrices", est.dump_matrices,
                    "Also write theta.csv, lambda.csv, gamma.csv");

  SimulateArgs sim;
  CLI::App* cmd_sim =
      app.add_subcommand("simulate", "Run a Monte Carlo study");
  cmd_sim->add_option("--dgp", sim.dgp, "logit_static|logit_dynamic");
  cmd_sim->add_option("--n", sim.n, "Units")->required();
  cmd_sim->add_option("--t", sim.t, "Periods")->required();
  cmd_sim->add_option("--reps", sim.reps, "Replications")->required();
  cmd_sim->add_option("--seed", sim.seed, "Master seed");
  cmd_sim->add_option("--alpha", sim.alpha, "Tuning slack (1+alpha)");
  cmd_sim->add_option("--rmax", sim.rmax, "Maximum rank for selection");
  cmd_sim->add_option("--true-r", sim.true_r, "Rank used by the FE estimators");
  cmd_sim->add_option("--estimators", sim.estimators,
                      "Comma-separated subset of POOL,NNR,FE,FE_A,FE_J,FER,FER_A,FER_J");
  cmd_sim->add_option("--threads", sim.threads, "Worker threads")
      ->envname("IFE_THREADS");
  cmd_sim->add_option("--tol", sim.tol, "NNR relative-objective tolerance");
  cmd_sim->add_option("--max-iters", sim.max_iters, "Solver iteration cap");
  cmd_sim->add_option("--out", sim.out, "Output directory");

  CLI11_PARSE(app, argc, argv);

  // BLAS stays single-threaded so results are reproducible under any
  // --threads value; parallelism lives in the cell kernels and the
  // replication/jackknife loops.
  ife::set_blas_threads(1);
  if (cmd_est->parsed()) {
    ife::set_kernel_threads(est.threads > 0 ? est.threads : ife::max_threads());
    return run_estimate(est);
  }
  ife::set_kernel_threads(sim.threads > 0 ? sim.threads : ife::max_threads());
  return run_simulate(sim);
}
