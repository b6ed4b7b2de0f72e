#pragma once

#include <cmath>
#include <functional>
#include <random>

#include "ifepanel/likelihood.hpp"
#include "ifepanel/objective.hpp"
#include "ifepanel/types.hpp"

namespace testutil {

using ife::MatrixXd;
using ife::PanelData;
using ife::VectorXd;

// Independent high-precision normal CDF oracle: Maclaurin series of erf
// in long double. Valid for |z| up to ~8 (series converges absolutely).
inline long double erf_series(long double x) {
  const long double two_over_sqrt_pi = 1.12837916709551257389615890312L;
  long double term = x, sum = x;
  for (int k = 1; k < 200; ++k) {
    term *= -x * x / k;
    const long double contrib = term / (2 * k + 1);
    sum += contrib;
    if (std::fabs(contrib) < 1e-25L * std::fabs(sum)) break;
  }
  return two_over_sqrt_pi * sum;
}

inline long double phi_oracle(long double z) {
  return 0.5L + 0.5L * erf_series(z / 1.41421356237309504880168872421L);
}

inline double log_phi_oracle(double z) {
  return static_cast<double>(std::log(phi_oracle(static_cast<long double>(z))));
}

// Central finite difference of a scalar function.
inline double central_diff(const std::function<double(double)>& f, double x,
                           double h) {
  return (f(x + h) - f(x - h)) / (2.0 * h);
}

// Random panel with a rank-r factor structure in the index and outcomes
// drawn from the family.
inline std::pair<PanelData, ife::FactorParams> random_panel(
    std::mt19937_64& rng, int n, int t, int dx, int r, ife::Family family,
    double beta_scale = 0.5, double factor_scale = 1.0) {
  std::normal_distribution<double> gauss;
  std::uniform_real_distribution<double> unif(0.0, 1.0);
  PanelData panel;
  for (int d = 0; d < dx; ++d) {
    MatrixXd x(n, t);
    for (int i = 0; i < n; ++i)
      for (int tt = 0; tt < t; ++tt) x(i, tt) = gauss(rng);
    panel.x.push_back(std::move(x));
  }
  ife::FactorParams truth;
  truth.beta = VectorXd::Zero(dx);
  for (int d = 0; d < dx; ++d) truth.beta(d) = beta_scale * gauss(rng);
  truth.lambda = MatrixXd::Zero(n, r);
  truth.gamma = MatrixXd::Zero(t, r);
  for (int i = 0; i < n; ++i)
    for (int k = 0; k < r; ++k) truth.lambda(i, k) = factor_scale * gauss(rng);
  for (int tt = 0; tt < t; ++tt)
    for (int k = 0; k < r; ++k) truth.gamma(tt, k) = factor_scale * gauss(rng);

  panel.y.resize(n, t);
  panel.y.setZero();
  const MatrixXd index = ife::index_matrix(
      panel, truth.beta, truth.lambda * truth.gamma.transpose());
  for (int i = 0; i < n; ++i)
    for (int tt = 0; tt < t; ++tt) {
      const double z = index(i, tt);
      switch (family) {
        case ife::Family::Logit:
        case ife::Family::Probit:
          panel.y(i, tt) = unif(rng) < ife::link_cdf(family, z) ? 1.0 : 0.0;
          break;
        case ife::Family::Poisson: {
          std::poisson_distribution<int> pois(std::exp(std::min(z, 8.0)));
          panel.y(i, tt) = pois(rng);
          break;
        }
      }
    }
  return {std::move(panel), std::move(truth)};
}

inline MatrixXd random_matrix(std::mt19937_64& rng, int n, int t,
                              double scale = 1.0) {
  std::normal_distribution<double> gauss(0.0, scale);
  MatrixXd m(n, t);
  for (int i = 0; i < n; ++i)
    for (int tt = 0; tt < t; ++tt) m(i, tt) = gauss(rng);
  return m;
}

}  // namespace testutil
