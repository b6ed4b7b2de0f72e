#include "ifepanel/likelihood.hpp"

#include <algorithm>
#include <cmath>

namespace ife {

namespace {

constexpr double kHalfLog2Pi = 0.9189385332046727417803297;  // log(2*pi)/2

double softplus(double z) {
  // log(1 + e^z) without overflow.
  return std::max(z, 0.0) + std::log1p(std::exp(-std::abs(z)));
}

double logistic(double z) {
  if (z >= 0.0) return 1.0 / (1.0 + std::exp(-z));
  const double e = std::exp(z);
  return e / (1.0 + e);
}

double log_normal_pdf(double z) { return -0.5 * z * z - kHalfLog2Pi; }

// Inverse Mills ratio phi(z)/Phi(z).
double mills(double z) {
  return std::exp(log_normal_pdf(z) - log_normal_cdf(z));
}

}  // namespace

double log_normal_cdf(double z) {
  if (z > -30.0) {
    // erfc is accurate down to the underflow threshold; no cancellation
    // on this branch since Phi(z) is evaluated directly.
    return std::log(0.5 * std::erfc(-z * M_SQRT1_2));
  }
  // Deep lower tail: asymptotic expansion of Phi(z) ~ phi(z)/(-z) * S(z).
  const double zi = 1.0 / (z * z);
  double series = 1.0, term = 1.0;
  for (int k = 1; k <= 8; ++k) {
    term *= -(2.0 * k - 1.0) * zi;
    series += term;
  }
  return log_normal_pdf(z) - std::log(-z) + std::log(series);
}

Family family_from_string(const std::string& name) {
  if (name == "logit") return Family::Logit;
  if (name == "probit") return Family::Probit;
  if (name == "poisson") return Family::Poisson;
  throw ArgumentError("unknown likelihood family: " + name);
}

std::string family_name(Family family) {
  switch (family) {
    case Family::Logit: return "logit";
    case Family::Probit: return "probit";
    case Family::Poisson: return "poisson";
  }
  return "?";
}

bool is_binary(Family family) { return family != Family::Poisson; }

void check_outcome(Family family, double y) {
  if (is_binary(family)) {
    if (y != 0.0 && y != 1.0)
      throw std::domain_error("binary outcome must be 0 or 1, got " +
                              std::to_string(y));
    return;
  }
  if (!(y >= 0.0) || std::abs(y - std::round(y)) > 1e-9)
    throw std::domain_error("Poisson outcome must be a nonnegative integer, got " +
                            std::to_string(y));
}

void validate_panel(const PanelData& panel, Family family) {
  check_panel_shapes(panel);
  for (int i = 0; i < panel.n(); ++i)
    for (int t = 0; t < panel.t(); ++t) check_outcome(family, panel.y(i, t));
}

double link_cdf(Family family, double z) {
  switch (family) {
    case Family::Logit: return logistic(z);
    case Family::Probit: return 0.5 * std::erfc(-z * M_SQRT1_2);
    case Family::Poisson:
      throw ArgumentError("link_cdf is defined for binary families only");
  }
  return 0.0;
}

double loglik(Family family, double y, double z) {
  check_outcome(family, y);
  switch (family) {
    case Family::Logit:
      return y * z - softplus(z);
    case Family::Probit:
      return y == 1.0 ? log_normal_cdf(z) : log_normal_cdf(-z);
    case Family::Poisson:
      return -std::exp(z) + y * z - std::lgamma(y + 1.0);
  }
  return 0.0;
}

LoglikDerivs loglik_derivs(Family family, double y, double z) {
  check_outcome(family, y);
  switch (family) {
    case Family::Logit: {
      const double f = logistic(z);
      const double v = f * logistic(-z);  // F(1-F) without cancellation
      return {y - f, -v, -v * (1.0 - 2.0 * f)};
    }
    case Family::Probit: {
      if (y == 1.0) {
        const double m = mills(z);
        const double d2 = -m * (z + m);
        return {m, d2, m * ((z + m) * (z + 2.0 * m) - 1.0)};
      }
      const double m = mills(-z);
      return {-m, -m * (m - z), -m * ((m - z) * (2.0 * m - z) - 1.0)};
    }
    case Family::Poisson: {
      const double e = std::exp(z);
      return {y - e, -e, -e};
    }
  }
  return {0.0, 0.0, 0.0};
}

double curvature_bound(Family family, double z_lo, double z_hi) {
  if (z_lo > z_hi) std::swap(z_lo, z_hi);
  switch (family) {
    case Family::Logit:
      return 0.25;  // global maximum of F(1-F)
    case Family::Probit: {
      // -l'' is increasing in |z| for the binding outcome; scan the range.
      double b = 0.0;
      const int grid = 64;
      for (int g = 0; g <= grid; ++g) {
        const double z = z_lo + (z_hi - z_lo) * g / grid;
        b = std::max(b, -loglik_derivs(Family::Probit, 1.0, z).d2);
        b = std::max(b, -loglik_derivs(Family::Probit, 0.0, z).d2);
      }
      return b;
    }
    case Family::Poisson:
      return std::exp(z_hi);
  }
  return 1.0;
}

}  // namespace ife
