#include "ifepanel/tuning.hpp"

#include <algorithm>
#include <cmath>
#include <random>

#include "ifepanel/lowrank.hpp"
#include "ifepanel/objective.hpp"

namespace ife {

namespace {

// Mean operator norm of the score over parametric-bootstrap redraws of the
// outcomes at the given fitted index: an estimate of ||grad_Theta L||_op at
// the true parameters that is free of both leftover signal and overfit
// deflation.
double bootstrap_score_opnorm(const PanelData& panel, Family family,
                              const MatrixXd& index, int n_boot,
                              std::uint64_t seed) {
  std::mt19937_64 rng(seed);
  std::uniform_real_distribution<double> unif(0.0, 1.0);
  const int n = panel.n();
  const int t = panel.t();
  double acc = 0.0;
  MatrixXd score(n, t);
  for (int b = 0; b < n_boot; ++b) {
    for (int i = 0; i < n; ++i)
      for (int tt = 0; tt < t; ++tt) {
        const double z = index(i, tt);
        double y;
        if (is_binary(family)) {
          y = unif(rng) < link_cdf(family, z) ? 1.0 : 0.0;
        } else {
          std::poisson_distribution<long> pois(std::exp(std::min(z, 30.0)));
          y = static_cast<double>(pois(rng));
        }
        score(i, tt) = loglik_derivs(family, y, z).d1;
      }
    acc += operator_norm(score);
  }
  return acc / n_boot;
}

}  // namespace

double phi_from_score(const MatrixXd& score, double alpha, bool literal) {
  const double nt = static_cast<double>(score.rows()) * score.cols();
  const double scale = literal ? nt : std::sqrt(nt);
  return (1.0 + alpha) * operator_norm(score) / scale;
}

TuningResult tune(const PanelData& panel, Family family,
                  const TuningOptions& options) {
  if (!(options.alpha > 0.0)) throw ArgumentError("alpha must be positive");
  if (options.r_max < 1) throw ArgumentError("r_max must be >= 1");
  const int n = panel.n();
  const int t = panel.t();
  const double nt = static_cast<double>(n) * t;
  const double phi_scale = options.literal_scaling ? nt : std::sqrt(nt);
  const int r_max_eff = std::min(options.r_max, std::min(n, t) - 1);

  TuningResult result;
  result.alpha = options.alpha;
  result.r_max = options.r_max;

  // Step 1: additive-FE pilot and the initial guess for phi.
  result.pilot = fit_additive_fe(panel, family);
  if (!result.pilot.converged)
    throw TuningError(
        "additive-FE pilot did not converge (grad norm " +
        std::to_string(result.pilot.grad_norm) + " after " +
        std::to_string(result.pilot.iterations) + " iterations)");
  MatrixXd pilot_index(n, t);
  for (int tt = 0; tt < t; ++tt)
    pilot_index.col(tt).setConstant(result.pilot.delta(tt));
  pilot_index.colwise() += result.pilot.alpha;
  for (int d = 0; d < panel.dx(); ++d)
    pilot_index.noalias() += result.pilot.beta(d) * panel.x[d];
  result.phi_tilde =
      phi_from_score(score_from_index(panel, family, pilot_index),
                     options.alpha, options.literal_scaling);

  // Step 2: NNR at phi_tilde, then the noise-level update. The pilot score
  // overstates the noise level (its residual still contains interactive
  // signal), so phi_hat comes from a parametric bootstrap of the score at
  // the first-pass fit.
  NnrOptions nnr_opts = options.nnr;
  nnr_opts.phi = result.phi_tilde;
  NnrSolution first = solve_nnr(panel, family, nnr_opts);

  const MatrixXd index_hat = index_matrix(panel, first.beta, first.theta);
  result.phi_hat = (1.0 + options.alpha) *
                   bootstrap_score_opnorm(panel, family, index_hat,
                                          std::max(1, options.n_boot),
                                          options.boot_seed) /
                   phi_scale;

  // Step 3: final NNR at phi_hat; the rank is read off its spectrum.
  nnr_opts.phi = result.phi_hat;
  nnr_opts.init_beta = first.beta;
  nnr_opts.init_theta = first.theta;
  result.nnr_fit = solve_nnr(panel, family, nnr_opts);

  if (options.fixed_r) {
    if (*options.fixed_r < 1 || *options.fixed_r > std::min(n, t))
      throw ArgumentError("fixed rank out of range");
    result.r_hat = *options.fixed_r;
  } else {
    result.r_hat =
        eigenvalue_ratio_rank(result.nnr_fit.singular_values, r_max_eff);
  }
  return result;
}

}  // namespace ife
