#pragma once

#include <cstdint>
#include <optional>

#include "ifepanel/baselines.hpp"
#include "ifepanel/nnr.hpp"
#include "ifepanel/types.hpp"

namespace ife {

struct TuningOptions {
  double alpha = 0.05;
  int r_max = 5;
  // phi = (1+alpha) * sqrt(NT) * ||grad_Theta L||_op, the scaling required
  // by the NNR consistency bound. The literal flag drops the sqrt(NT)
  // factor instead.
  bool literal_scaling = false;
  // When set, skips the eigenvalue-ratio test and uses this rank.
  std::optional<int> fixed_r;
  // Score-bootstrap settings for the phi update (see tune()).
  int n_boot = 5;
  std::uint64_t boot_seed = 20240917;
  // Solver settings for the internal NNR fits (phi is filled in).
  NnrOptions nnr;
};

struct TuningResult {
  double phi_tilde = 0.0;
  double phi_hat = 0.0;
  int r_hat = 0;
  AdditiveFeFit pilot;
  NnrSolution nnr_fit;  // final fit, solved at phi_hat
  double alpha = 0.0;
  int r_max = 0;
};

// phi from a score matrix [l'_it]: (1+alpha) * sqrt(NT) * ||grad_Theta L||_op
// = (1+alpha) * ||score||_op / sqrt(NT) (or /(NT) under literal scaling).
double phi_from_score(const MatrixXd& score, double alpha, bool literal);

// Data-driven selection of phi and R.
//
// Step 1: additive-FE pilot, phi_tilde from its score.
// Step 2: NNR at phi_tilde. Its residual score still carries interactive
//         signal (and, at the penalized optimum, has operator norm pinned
//         at phi_tilde/(1+alpha) by the optimality condition), so the
//         noise level is re-estimated by a parametric bootstrap: outcomes
//         are redrawn from the fitted cell distributions and the mean
//         simulated score operator norm over n_boot draws sets phi_hat.
// Step 3: final NNR at phi_hat (returned as nnr_fit); R_hat by the
//         eigenvalue-ratio test on its singular values.
TuningResult tune(const PanelData& panel, Family family,
                  const TuningOptions& options = {});

}  // namespace ife
