#pragma once

#include <optional>

#include "ifepanel/local.hpp"
#include "ifepanel/nnr.hpp"
#include "ifepanel/tuning.hpp"
#include "ifepanel/types.hpp"

namespace ife {

// Options for the full two-step run: tuning (unless phi/rank are pinned),
// final NNR solve, factor extraction, local stage.
struct TwoStepOptions {
  double alpha = 0.05;
  int r_max = 5;
  std::optional<int> rank;     // fixed rank; otherwise eigenvalue-ratio
  std::optional<double> phi;   // fixed phi; otherwise data-driven
  bool literal_phi_scaling = false;
  NnrOptions nnr;
  LocalOptions local;
};

struct TwoStepFit {
  std::optional<TuningResult> tuning;
  NnrSolution nnr;        // solved at phi_used
  LocalSolution local;    // at rank r_used, initialized from the extraction
  int r_used = 0;
  double phi_used = 0.0;
  std::string rank_source;  // "auto", "user"
};

// Tune (as needed) -> NNR at phi_hat -> factor extraction -> local stage.
TwoStepFit run_two_step(const PanelData& panel, Family family,
                        const TwoStepOptions& options);

}  // namespace ife
