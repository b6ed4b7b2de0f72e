#pragma once

#include <string>

#include "ifepanel/types.hpp"

namespace ife {

enum class Family { Logit, Probit, Poisson };

Family family_from_string(const std::string& name);
std::string family_name(Family family);

bool is_binary(Family family);

// Validates an outcome value for the family. Binary families require
// y in {0,1}; Poisson requires a nonnegative integer (tolerance 1e-9,
// values are stored as doubles). Throws std::domain_error.
void check_outcome(Family family, double y);

// Validates every outcome in the panel for the family.
void validate_panel(const PanelData& panel, Family family);

// Response CDF F(z) for the binary families (logistic / standard normal).
double link_cdf(Family family, double z);

// log Phi(z), stable over the whole real line.
double log_normal_cdf(double z);

// Log-likelihood l(y | z) of one observation at index z.
// Logit:   y*z - log(1 + e^z), overflow-safe for |z| <= 700.
// Probit:  y*log Phi(z) + (1-y)*log Phi(-z).
// Poisson: -e^z + y*z - lgamma(y+1).
double loglik(Family family, double y, double z);

struct LoglikDerivs {
  double d1;
  double d2;
  double d3;
};

// First three derivatives of l(y | z) in the index z.
LoglikDerivs loglik_derivs(Family family, double y, double z);

// An upper bound for -l''(y|z) over z in [z_lo, z_hi], maximized over the
// valid outcomes observed for the family. Used to derive safe fixed step
// sizes when requested.
double curvature_bound(Family family, double z_lo, double z_hi);

}  // namespace ife
