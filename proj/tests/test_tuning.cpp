#include <doctest.h>

#include <cmath>
#include <random>

#include "ifepanel/lowrank.hpp"
#include "ifepanel/montecarlo.hpp"
#include "ifepanel/objective.hpp"
#include "ifepanel/tuning.hpp"
#include "testutil.hpp"

using ife::Family;
using ife::MatrixXd;
using ife::PanelData;
using ife::TuningOptions;
using ife::VectorXd;

TEST_CASE("phi_from_score applies the consistency-bound scaling") {
  std::mt19937_64 rng(401);
  const MatrixXd score = testutil::random_matrix(rng, 10, 8);
  const double op = ife::operator_norm(score);
  CHECK(ife::phi_from_score(score, 0.05, false) ==
        doctest::Approx(1.05 * op / std::sqrt(80.0)).epsilon(1e-14));
  CHECK(ife::phi_from_score(score, 0.05, true) ==
        doctest::Approx(1.05 * op / 80.0).epsilon(1e-14));
}

TEST_CASE("phi scales linearly in 1 + alpha") {
  auto [panel, truth] = ife::gen_logit_static(24, 20, 99);
  TuningOptions a;
  a.alpha = 0.05;
  a.fixed_r = 2;
  TuningOptions b;
  b.alpha = 0.10;
  b.fixed_r = 2;
  const ife::TuningResult ra = ife::tune(panel, Family::Logit, a);
  const ife::TuningResult rb = ife::tune(panel, Family::Logit, b);
  CHECK(rb.phi_tilde == doctest::Approx(ra.phi_tilde * 1.10 / 1.05).epsilon(1e-12));
  CHECK(rb.phi_tilde >= ra.phi_tilde);  // doubling alpha never decreases phi
  CHECK(ra.phi_hat > 0.0);
  CHECK(std::isfinite(ra.phi_hat));
}

TEST_CASE("defaults match the recommended settings") {
  TuningOptions opts;
  CHECK(opts.alpha == 0.05);
  CHECK(opts.r_max == 5);
}

TEST_CASE("rank-3 Poisson panel with strong factors is identified") {
  std::mt19937_64 rng(409);
  const int n = 60, t = 60;
  // Exact rank-3 index with strong, well-separated factors.
  const MatrixXd lambda = testutil::random_matrix(rng, n, 3);
  const MatrixXd gamma = testutil::random_matrix(rng, t, 3);
  const MatrixXd theta = lambda * gamma.transpose() * 0.7;
  PanelData panel;
  panel.y.resize(n, t);
  for (int i = 0; i < n; ++i)
    for (int tt = 0; tt < t; ++tt) {
      std::poisson_distribution<int> pois(std::exp(std::min(theta(i, tt), 6.0)));
      panel.y(i, tt) = pois(rng);
    }
  const ife::TuningResult result = ife::tune(panel, Family::Poisson, {});
  CHECK(result.r_hat == 3);
}

TEST_CASE("fixed_r bypasses the ratio test") {
  auto [panel, truth] = ife::gen_logit_static(20, 16, 314);
  TuningOptions opts;
  opts.fixed_r = 4;
  const ife::TuningResult result = ife::tune(panel, Family::Logit, opts);
  CHECK(result.r_hat == 4);
}
