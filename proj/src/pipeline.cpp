#include "ifepanel/pipeline.hpp"

#include <algorithm>

#include "ifepanel/lowrank.hpp"
#include "ifepanel/objective.hpp"

namespace ife {

TwoStepFit run_two_step(const PanelData& panel, Family family,
                        const TwoStepOptions& options) {
  TwoStepFit fit;
  fit.rank_source = options.rank ? "user" : "auto";

  if (options.phi) {
    // Pinned phi: solve once; rank from the user or from this spectrum.
    NnrOptions nnr_opts = options.nnr;
    nnr_opts.phi = *options.phi;
    fit.phi_used = *options.phi;
    fit.nnr = solve_nnr(panel, family, nnr_opts);
    if (options.rank) {
      fit.r_used = *options.rank;
    } else {
      const int r_max_eff =
          std::min(options.r_max, std::min(panel.n(), panel.t()) - 1);
      fit.r_used = eigenvalue_ratio_rank(fit.nnr.singular_values, r_max_eff);
    }
  } else {
    TuningOptions topt;
    topt.alpha = options.alpha;
    topt.r_max = options.r_max;
    topt.literal_scaling = options.literal_phi_scaling;
    topt.fixed_r = options.rank;
    topt.nnr = options.nnr;
    fit.tuning = tune(panel, family, topt);
    fit.phi_used = fit.tuning->phi_hat;
    fit.r_used = fit.tuning->r_hat;
    // The tuning result already holds the solution at phi_hat.
    fit.nnr = fit.tuning->nnr_fit;
  }

  FactorParams init;
  init.beta = fit.nnr.beta;
  if (fit.r_used > 0) {
    auto [lambda, gamma] = extract_factors(fit.nnr.theta, fit.r_used);
    init.lambda = std::move(lambda);
    init.gamma = std::move(gamma);
  } else {
    init.lambda = MatrixXd::Zero(panel.n(), 0);
    init.gamma = MatrixXd::Zero(panel.t(), 0);
  }
  fit.local = solve_local(panel, family, fit.r_used, init, options.local);
  return fit;
}

}  // namespace ife
