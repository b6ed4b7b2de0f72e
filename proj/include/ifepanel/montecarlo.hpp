#pragma once

#include <cstdint>
#include <map>
#include <set>
#include <string>
#include <vector>

#include "ifepanel/pipeline.hpp"
#include "ifepanel/types.hpp"

namespace ife {

enum class Dgp { LogitStatic, LogitDynamic };

Dgp dgp_from_string(const std::string& name);
std::string dgp_name(Dgp dgp);

// Static logit DGP: Y = 1(beta1 X + lambda'gamma + eps_Y > 0) with
// X = lambda'gamma + lambda'1 + gamma'1 + lambda_x gamma_x + eps_X,
// all latent draws standard normal, eps_X ~ N(0,4), eps_Y logistic, R = 2.
std::pair<PanelData, FactorParams> gen_logit_static(int n, int t,
                                                    std::uint64_t seed,
                                                    double beta1 = 0.2);

// Dynamic logit DGP: Y_t = 1(beta1 Y_{t-1} + beta2 Z_t + lambda'gamma +
// eps_Y > 0) with Z built like X above, 50 burn-in periods, and the lag as
// the first covariate.
std::pair<PanelData, FactorParams> gen_logit_dynamic(int n, int t,
                                                     std::uint64_t seed,
                                                     double beta1 = 0.5,
                                                     double beta2 = 0.2);

// Deterministic per-replication seed stream.
std::uint64_t replication_seed(std::uint64_t master_seed, int rep);

enum class Estimator { Pool, Nnr, Fe, FeA, FeJ, Fer, FerA, FerJ };

std::string estimator_name(Estimator est);
Estimator estimator_from_string(const std::string& name);
// POOL,NNR,FE,FE_A,FE_J,FER,FER_A,FER_J in table order.
const std::vector<Estimator>& all_estimators();

struct McConfig {
  Dgp dgp = Dgp::LogitStatic;
  int n = 100;
  int t = 100;
  int replications = 1000;
  std::uint64_t seed = 1;
  double alpha = 0.05;
  int r_max = 5;
  std::set<Estimator> estimators;  // empty selects the DGP default set
  int true_r = 2;
  VectorXd beta_true;              // empty selects the DGP default
  // Solver settings for every stage of each replication.
  TwoStepOptions solver = default_mc_solver();

  static TwoStepOptions default_mc_solver();
  std::set<Estimator> effective_estimators() const;
  VectorXd effective_beta_true() const;
};

struct McRepRecord {
  int rep = 0;
  std::uint64_t seed = 0;
  int r_hat = 0;
  std::map<Estimator, VectorXd> estimates;
  std::string failed_stage;  // empty on success
};

struct EstimatorStats {
  VectorXd bias;     // mean(estimate) - beta_true, over successful reps
  VectorXd std_dev;  // sample standard deviation per coefficient
  bool std_defined = false;
};

struct McResult {
  McConfig config;
  std::map<Estimator, EstimatorStats> stats;
  double r_bar = 0.0;
  int n_success = 0;
  std::vector<McRepRecord> reps;
  std::vector<std::string> warnings;
};

// Runs the replication loop: generate -> POOL -> tune -> NNR -> local at
// the true and selected ranks -> corrections, then aggregates bias/std.
// Replications run in parallel; aggregation order is fixed by rep index,
// so results do not depend on the thread count.
McResult run_monte_carlo(const McConfig& config);

}  // namespace ife
