#pragma once

#include <functional>

#include "ifepanel/types.hpp"

namespace ife {

struct BacktrackOutcome {
  double scale = 1.0;      // accepted multiple of the entering step sizes
  double objective = 0.0;  // objective at the accepted candidate
  double distance = 0.0;   // relative parameter distance moved
  int halvings = 0;
};

// Joint step-halving: evaluates trial(scale) at scale = 1, 1/2, 1/4, ...
// until the candidate is acceptable and returns the accepted scale. trial
// returns (objective, relative distance from the current point).
//
// Acceptance: a clear decrease always passes; a candidate whose objective
// ties the current value (within 1e-14) passes only if the move is small.
// The small-move allowance keeps progress going once true decreases fall
// below double resolution, while an overshoot onto an equal objective
// level far away (the mirror point of a quadratic) is halved instead.
// Throws StallError once scale falls below min_scale.
inline BacktrackOutcome backtrack_halving(
    double current_objective,
    const std::function<std::pair<double, double>(double)>& trial,
    double min_scale = 1e-16) {
  BacktrackOutcome out;
  out.scale = 1.0;
  while (true) {
    const auto [objective, distance] = trial(out.scale);
    const bool finite = objective == objective &&
                        objective <= std::numeric_limits<double>::max() &&
                        objective >= -std::numeric_limits<double>::max();
    const bool clearly_lower = objective < current_objective - 1e-14;
    const bool tied = objective <= current_objective + 1e-14;
    if (finite && (clearly_lower || (tied && distance <= 1e-3))) {
      out.objective = objective;
      out.distance = distance;
      return out;
    }
    out.scale *= 0.5;
    ++out.halvings;
    if (out.scale < min_scale)
      throw StallError("backtracking stalled below the step-size floor");
  }
}

}  // namespace ife
