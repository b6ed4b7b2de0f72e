#pragma once

#include <vector>

#include "ifepanel/likelihood.hpp"
#include "ifepanel/types.hpp"

namespace ife {

struct PooledFit {
  VectorXd beta;
  double objective = 0.0;
  int iterations = 0;
  bool converged = false;
  double grad_norm = 0.0;
};

// Pooled MLE: minimizes -(NT)^-1 sum l(Y | X'beta) by damped Newton.
// Separation or divergence is reported through converged == false.
PooledFit fit_pooled(const PanelData& panel, Family family);

struct AdditiveFeFit {
  VectorXd beta;
  VectorXd alpha;  // N unit effects
  VectorXd delta;  // T period effects, sum_t delta_t = 0
  double objective = 0.0;
  int iterations = 0;
  bool converged = false;
  double grad_norm = 0.0;
  // Units/periods whose effect hit the +-20 clamp (degenerate outcomes).
  std::vector<int> clamped_units;
  std::vector<int> clamped_periods;
};

// Additive two-way FE MLE: minimizes -(NT)^-1 sum l(Y | X'beta + a_i + d_t)
// under sum_t d_t = 0 (eliminated by substitution). Damped Newton with the
// unit block solved by elimination. Fixed effects of units/periods with
// all-0/all-1 binary outcomes (or all-zero Poisson counts) diverge; they
// are clamped at +-20 and reported.
AdditiveFeFit fit_additive_fe(const PanelData& panel, Family family);

}  // namespace ife
