#include "ifepanel/montecarlo.hpp"

#include <omp.h>

#include <algorithm>
#include <cmath>
#include <random>

#include "ifepanel/baselines.hpp"
#include "ifepanel/bias.hpp"
#include "ifepanel/lowrank.hpp"

namespace ife {

namespace {

constexpr int kBurnIn = 50;

std::uint64_t splitmix64(std::uint64_t z) {
  z += 0x9E3779B97F4A7C15ULL;
  z = (z ^ (z >> 30)) * 0xBF58476D1CE4E5B9ULL;
  z = (z ^ (z >> 27)) * 0x94D049BB133111EBULL;
  return z ^ (z >> 31);
}

double draw_logistic(std::mt19937_64& rng) {
  std::uniform_real_distribution<double> unif(0.0, 1.0);
  double u;
  do {
    u = unif(rng);
  } while (u <= 0.0 || u >= 1.0);
  return std::log(u / (1.0 - u));
}

MatrixXd draw_normal_matrix(std::mt19937_64& rng, int rows, int cols,
                            double sd = 1.0) {
  std::normal_distribution<double> gauss(0.0, sd);
  MatrixXd m(rows, cols);
  for (int i = 0; i < rows; ++i)
    for (int j = 0; j < cols; ++j) m(i, j) = gauss(rng);
  return m;
}

// Covariate with the common-factor structure of the simulation design:
// lambda'gamma + lambda'1 + gamma'1 + lambda_x gamma_x + eps.
MatrixXd factor_covariate(const MatrixXd& lambda, const MatrixXd& gamma,
                          const VectorXd& lambda_x, const VectorXd& gamma_x,
                          const MatrixXd& eps) {
  MatrixXd x = lambda * gamma.transpose();
  x.colwise() += lambda.rowwise().sum();
  x.rowwise() += gamma.rowwise().sum().transpose();
  x.noalias() += lambda_x * gamma_x.transpose();
  x += eps;
  return x;
}

}  // namespace

std::uint64_t replication_seed(std::uint64_t master_seed, int rep) {
  return splitmix64(master_seed ^ splitmix64(static_cast<std::uint64_t>(rep)));
}

Dgp dgp_from_string(const std::string& name) {
  if (name == "logit_static") return Dgp::LogitStatic;
  if (name == "logit_dynamic") return Dgp::LogitDynamic;
  throw ArgumentError("unknown DGP: " + name);
}

std::string dgp_name(Dgp dgp) {
  return dgp == Dgp::LogitStatic ? "logit_static" : "logit_dynamic";
}

std::pair<PanelData, FactorParams> gen_logit_static(int n, int t,
                                                    std::uint64_t seed,
                                                    double beta1) {
  if (n < 2 || t < 2) throw ArgumentError("need n, t >= 2");
  std::mt19937_64 rng(seed);
  const MatrixXd lambda = draw_normal_matrix(rng, n, 2);
  const MatrixXd gamma = draw_normal_matrix(rng, t, 2);
  const VectorXd lambda_x = draw_normal_matrix(rng, n, 1);
  const VectorXd gamma_x = draw_normal_matrix(rng, t, 1);
  const MatrixXd eps_x = draw_normal_matrix(rng, n, t, 2.0);  // N(0, 4)

  PanelData panel;
  panel.x.push_back(factor_covariate(lambda, gamma, lambda_x, gamma_x, eps_x));
  const MatrixXd theta = lambda * gamma.transpose();
  panel.y.resize(n, t);
  for (int i = 0; i < n; ++i)
    for (int tt = 0; tt < t; ++tt) {
      const double eps_y = draw_logistic(rng);
      panel.y(i, tt) =
          beta1 * panel.x[0](i, tt) + theta(i, tt) + eps_y > 0.0 ? 1.0 : 0.0;
    }

  FactorParams truth;
  truth.beta = VectorXd::Constant(1, beta1);
  truth.lambda = lambda;
  truth.gamma = gamma;
  return {std::move(panel), std::move(truth)};
}

std::pair<PanelData, FactorParams> gen_logit_dynamic(int n, int t,
                                                     std::uint64_t seed,
                                                     double beta1,
                                                     double beta2) {
  if (n < 2 || t < 2) throw ArgumentError("need n, t >= 2");
  std::mt19937_64 rng(seed);
  const int total = t + kBurnIn;
  const MatrixXd lambda = draw_normal_matrix(rng, n, 2);
  const MatrixXd gamma_all = draw_normal_matrix(rng, total, 2);
  const VectorXd lambda_z = draw_normal_matrix(rng, n, 1);
  const VectorXd gamma_z = draw_normal_matrix(rng, total, 1);
  const MatrixXd eps_z = draw_normal_matrix(rng, n, total, 2.0);
  const MatrixXd z_all =
      factor_covariate(lambda, gamma_all, lambda_z, gamma_z, eps_z);
  const MatrixXd theta_all = lambda * gamma_all.transpose();

  // The first burn-in period starts without a lag; by the end of the
  // burn-in the chain has forgotten that choice.
  MatrixXd y_all(n, total);
  for (int i = 0; i < n; ++i) {
    double lag = 0.0;
    for (int s = 0; s < total; ++s) {
      const double eps_y = draw_logistic(rng);
      const double index =
          beta1 * lag + beta2 * z_all(i, s) + theta_all(i, s) + eps_y;
      y_all(i, s) = index > 0.0 ? 1.0 : 0.0;
      lag = y_all(i, s);
    }
  }

  PanelData panel;
  panel.y = y_all.rightCols(t);
  panel.x.push_back(y_all.middleCols(kBurnIn - 1, t));  // lagged outcome
  panel.x.push_back(z_all.rightCols(t));

  FactorParams truth;
  truth.beta = VectorXd(2);
  truth.beta << beta1, beta2;
  truth.lambda = lambda;
  truth.gamma = gamma_all.bottomRows(t);
  return {std::move(panel), std::move(truth)};
}

const std::vector<Estimator>& all_estimators() {
  static const std::vector<Estimator> order = {
      Estimator::Pool, Estimator::Nnr,  Estimator::Fe,  Estimator::FeA,
      Estimator::FeJ,  Estimator::Fer, Estimator::FerA, Estimator::FerJ};
  return order;
}

std::string estimator_name(Estimator est) {
  switch (est) {
    case Estimator::Pool: return "POOL";
    case Estimator::Nnr: return "NNR";
    case Estimator::Fe: return "FE";
    case Estimator::FeA: return "FE_A";
    case Estimator::FeJ: return "FE_J";
    case Estimator::Fer: return "FER";
    case Estimator::FerA: return "FER_A";
    case Estimator::FerJ: return "FER_J";
  }
  return "?";
}

Estimator estimator_from_string(const std::string& name) {
  for (Estimator est : all_estimators())
    if (estimator_name(est) == name) return est;
  throw ArgumentError("unknown estimator: " + name);
}

TwoStepOptions McConfig::default_mc_solver() {
  TwoStepOptions solver;
  solver.nnr.tol_rel_obj = 1e-8;
  solver.nnr.max_iters = 20000;
  solver.local.tol_grad = 1e-7;
  solver.local.max_iters = 20000;
  return solver;
}

std::set<Estimator> McConfig::effective_estimators() const {
  if (!estimators.empty()) return estimators;
  if (dgp == Dgp::LogitStatic)
    return {Estimator::Pool, Estimator::Nnr,  Estimator::Fe,  Estimator::FeA,
            Estimator::FeJ,  Estimator::Fer, Estimator::FerA, Estimator::FerJ};
  // The half-panel jackknife needs a homogeneity condition that dynamic
  // designs violate; it is opt-in there.
  return {Estimator::Pool, Estimator::Nnr,  Estimator::Fe,
          Estimator::FeA,  Estimator::Fer, Estimator::FerA};
}

VectorXd McConfig::effective_beta_true() const {
  if (beta_true.size() > 0) return beta_true;
  if (dgp == Dgp::LogitStatic) return VectorXd::Constant(1, 0.2);
  VectorXd b(2);
  b << 0.5, 0.2;
  return b;
}

namespace {

struct RankFit {
  FactorParams params;
  VectorXd beta_local;
  VectorXd beta_analytic;
  VectorXd beta_jackknife;
  bool has_analytic = false;
  bool has_jackknife = false;
};

McRepRecord run_replication(const McConfig& config,
                            const std::set<Estimator>& wanted, int rep) {
  McRepRecord record;
  record.rep = rep;
  record.seed = replication_seed(config.seed, rep);

  const VectorXd beta_true = config.effective_beta_true();
  auto [panel, truth] =
      config.dgp == Dgp::LogitStatic
          ? gen_logit_static(config.n, config.t, record.seed, beta_true(0))
          : gen_logit_dynamic(config.n, config.t, record.seed, beta_true(0),
                              beta_true(1));
  (void)truth;

  std::string stage = "generate";
  try {
    if (wanted.count(Estimator::Pool)) {
      stage = "pool";
      const PooledFit pool = fit_pooled(panel, Family::Logit);
      if (!pool.converged) throw NumericError("pooled fit did not converge");
      record.estimates[Estimator::Pool] = pool.beta;
    }

    const bool need_fe =
        wanted.count(Estimator::Fe) || wanted.count(Estimator::FeA) ||
        wanted.count(Estimator::FeJ);
    const bool need_fer =
        wanted.count(Estimator::Fer) || wanted.count(Estimator::FerA) ||
        wanted.count(Estimator::FerJ);
    const bool need_pipeline =
        wanted.count(Estimator::Nnr) || need_fe || need_fer;
    if (!need_pipeline) return record;

    stage = "tune";
    TuningOptions topt;
    topt.alpha = config.alpha;
    topt.r_max = config.r_max;
    topt.nnr = config.solver.nnr;
    const TuningResult tuning = tune(panel, Family::Logit, topt);
    record.r_hat = tuning.r_hat;

    stage = "nnr";
    const NnrSolution& nnr = tuning.nnr_fit;
    if (!nnr.converged) throw NumericError("NNR did not converge");
    if (wanted.count(Estimator::Nnr)) record.estimates[Estimator::Nnr] = nnr.beta;

    std::map<int, RankFit> fits;
    auto fit_rank = [&](int r, bool analytic, bool jackknife) {
      auto it = fits.find(r);
      if (it == fits.end()) {
        stage = "local";
        auto [lambda, gamma] = extract_factors(nnr.theta, r);
        FactorParams init{nnr.beta, std::move(lambda), std::move(gamma)};
        const LocalSolution local =
            solve_local(panel, Family::Logit, r, init, config.solver.local);
        if (!local.converged) throw NumericError("local stage did not converge");
        RankFit fit;
        fit.params = local.params;
        fit.beta_local = local.params.beta;
        it = fits.emplace(r, std::move(fit)).first;
      }
      RankFit& fit = it->second;
      if (analytic && !fit.has_analytic) {
        stage = "bias";
        const BiasComponents comp =
            compute_bias_components(panel, Family::Logit, fit.params);
        fit.beta_analytic =
            analytic_bias_correct(panel, Family::Logit, fit.params, comp);
        fit.has_analytic = true;
      }
      if (jackknife && !fit.has_jackknife) {
        stage = "jackknife";
        fit.beta_jackknife = jackknife_correct(panel, Family::Logit, r,
                                               fit.beta_local, config.solver);
        fit.has_jackknife = true;
      }
      return it;
    };

    if (need_fe) {
      auto it = fit_rank(config.true_r, wanted.count(Estimator::FeA) > 0,
                         wanted.count(Estimator::FeJ) > 0);
      if (wanted.count(Estimator::Fe))
        record.estimates[Estimator::Fe] = it->second.beta_local;
      if (wanted.count(Estimator::FeA))
        record.estimates[Estimator::FeA] = it->second.beta_analytic;
      if (wanted.count(Estimator::FeJ))
        record.estimates[Estimator::FeJ] = it->second.beta_jackknife;
    }
    if (need_fer) {
      auto it = fit_rank(tuning.r_hat, wanted.count(Estimator::FerA) > 0,
                         wanted.count(Estimator::FerJ) > 0);
      if (wanted.count(Estimator::Fer))
        record.estimates[Estimator::Fer] = it->second.beta_local;
      if (wanted.count(Estimator::FerA))
        record.estimates[Estimator::FerA] = it->second.beta_analytic;
      if (wanted.count(Estimator::FerJ))
        record.estimates[Estimator::FerJ] = it->second.beta_jackknife;
    }
  } catch (const std::exception&) {
    record.failed_stage = stage;
  }
  return record;
}

// Order-fixed compensated mean over successful replications.
VectorXd kahan_mean(const std::vector<const VectorXd*>& values, int dim) {
  VectorXd sum = VectorXd::Zero(dim);
  VectorXd comp = VectorXd::Zero(dim);
  for (const VectorXd* v : values)
    for (int d = 0; d < dim; ++d) {
      const double y = (*v)(d)-comp(d);
      const double t = sum(d) + y;
      comp(d) = (t - sum(d)) - y;
      sum(d) = t;
    }
  return sum / static_cast<double>(values.size());
}

}  // namespace

McResult run_monte_carlo(const McConfig& config) {
  if (config.replications < 1) throw ArgumentError("need replications >= 1");
  if (config.true_r < 1 || config.true_r > std::min(config.n, config.t))
    throw ArgumentError("true_r out of range");
  const std::set<Estimator> wanted = config.effective_estimators();

  McResult result;
  result.config = config;
  if (config.dgp == Dgp::LogitDynamic &&
      (wanted.count(Estimator::FeJ) || wanted.count(Estimator::FerJ)))
    result.warnings.push_back(
        "half-panel jackknife applied to a dynamic design; it relies on a "
        "homogeneity condition that dynamic panels typically violate");

  result.reps.resize(config.replications);
#pragma omp parallel for schedule(dynamic)
  for (int rep = 0; rep < config.replications; ++rep)
    result.reps[rep] = run_replication(config, wanted, rep);

  const VectorXd beta_true = config.effective_beta_true();
  const int dim = static_cast<int>(beta_true.size());
  double r_sum = 0.0, r_comp = 0.0;
  for (const McRepRecord& rec : result.reps) {
    if (!rec.failed_stage.empty()) continue;
    ++result.n_success;
    const double y = static_cast<double>(rec.r_hat) - r_comp;
    const double t = r_sum + y;
    r_comp = (t - r_sum) - y;
    r_sum = t;
  }
  result.r_bar = result.n_success > 0 ? r_sum / result.n_success : 0.0;

  for (Estimator est : all_estimators()) {
    if (!wanted.count(est)) continue;
    std::vector<const VectorXd*> values;
    values.reserve(result.reps.size());
    for (const McRepRecord& rec : result.reps) {
      if (!rec.failed_stage.empty()) continue;
      auto it = rec.estimates.find(est);
      if (it != rec.estimates.end()) values.push_back(&it->second);
    }
    EstimatorStats stats;
    if (values.empty()) {
      stats.bias = VectorXd::Zero(dim);
      stats.std_dev = VectorXd::Zero(dim);
      result.stats[est] = std::move(stats);
      continue;
    }
    const VectorXd mean = kahan_mean(values, dim);
    stats.bias = mean - beta_true;
    stats.std_defined = values.size() >= 2;
    stats.std_dev = VectorXd::Zero(dim);
    if (stats.std_defined) {
      VectorXd ss = VectorXd::Zero(dim);
      VectorXd comp = VectorXd::Zero(dim);
      for (const VectorXd* v : values)
        for (int d = 0; d < dim; ++d) {
          const double sq = ((*v)(d)-mean(d)) * ((*v)(d)-mean(d));
          const double y = sq - comp(d);
          const double t = ss(d) + y;
          comp(d) = (t - ss(d)) - y;
          ss(d) = t;
        }
      stats.std_dev =
          (ss / static_cast<double>(values.size() - 1)).cwiseSqrt();
    }
    result.stats[est] = std::move(stats);
  }
  return result;
}

}  // namespace ife
