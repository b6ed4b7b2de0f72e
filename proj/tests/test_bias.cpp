#include <doctest.h>

#include <cmath>
#include <random>

#include "ifepanel/bias.hpp"
#include "ifepanel/lowrank.hpp"
#include "ifepanel/montecarlo.hpp"
#include "ifepanel/objective.hpp"
#include "testutil.hpp"

using ife::BiasComponents;
using ife::FactorParams;
using ife::Family;
using ife::MatrixXd;
using ife::PanelData;
using ife::VectorXd;

namespace {

// A converged small logit two-step fit shared across cases.
struct FittedCase {
  PanelData panel;
  FactorParams params;
  MatrixXd weights;  // -l'' at the fit
};

FittedCase make_fitted(std::mt19937_64& rng, int n, int t, int dx, int r) {
  auto [panel, truth] = testutil::random_panel(rng, n, t, dx, r, Family::Logit,
                                               0.4, 0.7);
  ife::TwoStepOptions opts;
  opts.rank = r;
  opts.local.max_iters = 4000;
  const ife::TwoStepFit fit = ife::run_two_step(panel, Family::Logit, opts);
  FittedCase out;
  out.panel = panel;
  out.params = fit.local.params;
  MatrixXd d2;
  ife::loglik_deriv_matrices(
      panel, Family::Logit,
      ife::index_matrix(panel, out.params.beta,
                        out.params.lambda * out.params.gamma.transpose()),
      nullptr, &d2, nullptr);
  out.weights = -d2;
  return out;
}

double weighted_residual_norm(const MatrixXd& w, const MatrixXd& resid) {
  return (w.array() * resid.array() * resid.array()).sum();
}

}  // namespace

TEST_CASE("xi projection reproduces targets inside the span") {
  std::mt19937_64 rng(501);
  FittedCase c = make_fitted(rng, 6, 6, 1, 2);
  // Replace the covariate by something exactly of the form A Gamma' + Lambda B'.
  const MatrixXd a = testutil::random_matrix(rng, 6, 2);
  const MatrixXd b = testutil::random_matrix(rng, 6, 2);
  c.panel.x[0] = a * c.params.gamma.transpose() + c.params.lambda * b.transpose();
  auto [xi, x_tilde] = ife::compute_xi(c.panel, Family::Logit, c.params);
  CHECK((xi[0] - c.panel.x[0]).cwiseAbs().maxCoeff() < 1e-8);
  CHECK(x_tilde[0].cwiseAbs().maxCoeff() < 1e-8);
}

TEST_CASE("xi projection annihilates weighted-orthogonal targets") {
  std::mt19937_64 rng(503);
  FittedCase c = make_fitted(rng, 7, 5, 1, 1);
  // The residual of a projection is itself weighted-orthogonal to the
  // span, so projecting it must give zero; projecting the fitted part
  // returns it unchanged (idempotence).
  auto [xi1, x_tilde1] = ife::compute_xi(c.panel, Family::Logit, c.params);
  PanelData residual_panel = c.panel;
  residual_panel.x[0] = x_tilde1[0];
  auto [xi0, xt0] = ife::compute_xi(residual_panel, Family::Logit, c.params);
  CHECK(xi0[0].cwiseAbs().maxCoeff() < 1e-8);

  PanelData fitted_panel = c.panel;
  fitted_panel.x[0] = xi1[0];
  auto [xi2, xt2] = ife::compute_xi(fitted_panel, Family::Logit, c.params);
  CHECK((xi2[0] - xi1[0]).cwiseAbs().maxCoeff() < 1e-8);
}

TEST_CASE("xi normal equations hold and the projection is optimal") {
  std::mt19937_64 rng(509);
  FittedCase c = make_fitted(rng, 6, 6, 2, 1);
  auto [xi, x_tilde] = ife::compute_xi(c.panel, Family::Logit, c.params);
  for (int d = 0; d < 2; ++d) {
    const MatrixXd wres = c.weights.cwiseProduct(x_tilde[d]);
    CHECK((wres * c.params.gamma).cwiseAbs().maxCoeff() <= 1e-8);
    CHECK((wres.transpose() * c.params.lambda).cwiseAbs().maxCoeff() <= 1e-8);

    // Any competing point of the span leaves a weakly larger weighted
    // residual.
    const double at_solution = weighted_residual_norm(c.weights, x_tilde[d]);
    for (int k = 0; k < 100; ++k) {
      const MatrixXd la = testutil::random_matrix(rng, 6, 1);
      const MatrixXd ga = testutil::random_matrix(rng, 6, 1);
      const MatrixXd candidate = xi[d] + la * c.params.gamma.transpose() +
                                 c.params.lambda * ga.transpose();
      CHECK(at_solution <=
            weighted_residual_norm(c.weights, c.panel.x[d] - candidate) + 1e-10);
    }
  }
}

TEST_CASE("direct and alternating projections agree") {
  std::mt19937_64 rng(521);
  FittedCase c = make_fitted(rng, 8, 5, 1, 2);
  auto [xi_d, xt_d] = ife::compute_xi(c.panel, Family::Logit, c.params,
                                      ife::XiMethod::Direct);
  auto [xi_a, xt_a] = ife::compute_xi(c.panel, Family::Logit, c.params,
                                      ife::XiMethod::Als);
  CHECK((xi_d[0] - xi_a[0]).cwiseAbs().maxCoeff() < 1e-7);
}

TEST_CASE("W is symmetric positive definite at a converged fit") {
  std::mt19937_64 rng(523);
  FittedCase c = make_fitted(rng, 9, 7, 2, 1);
  const BiasComponents comp =
      ife::compute_bias_components(c.panel, Family::Logit, c.params);
  CHECK((comp.w_hat - comp.w_hat.transpose()).cwiseAbs().maxCoeff() <= 1e-12);
  Eigen::SelfAdjointEigenSolver<MatrixXd> es(comp.w_hat);
  CHECK(es.eigenvalues().minCoeff() > 0.0);
}

TEST_CASE("zero bias components leave beta unchanged") {
  std::mt19937_64 rng(541);
  FittedCase c = make_fitted(rng, 6, 6, 1, 1);
  BiasComponents comp;
  comp.b_hat = VectorXd::Zero(1);
  comp.d_hat = VectorXd::Zero(1);
  comp.w_hat = MatrixXd::Identity(1, 1);
  const VectorXd corrected =
      ife::analytic_bias_correct(c.panel, Family::Logit, c.params, comp);
  CHECK((corrected - c.params.beta).cwiseAbs().maxCoeff() == 0.0);
}

TEST_CASE("non-PD W raises an inference error") {
  std::mt19937_64 rng(547);
  FittedCase c = make_fitted(rng, 6, 6, 1, 1);
  BiasComponents comp;
  comp.b_hat = VectorXd::Zero(1);
  comp.d_hat = VectorXd::Zero(1);
  comp.w_hat = -MatrixXd::Identity(1, 1);
  CHECK_THROWS_AS(
      ife::analytic_bias_correct(c.panel, Family::Logit, c.params, comp),
      ife::InferenceError);
  CHECK_THROWS_AS(ife::standard_errors(comp, 10, 10), ife::InferenceError);
}

TEST_CASE("standard errors follow the W^-1/(NT) formula") {
  BiasComponents comp;
  comp.w_hat = MatrixXd::Identity(2, 2);
  const VectorXd se = ife::standard_errors(comp, 100, 100);
  CHECK(se(0) == doctest::Approx(1e-2).epsilon(1e-12));
  CHECK(se(1) == doctest::Approx(1e-2).epsilon(1e-12));
  // Quadrupling NT halves the standard errors.
  const VectorXd se4 = ife::standard_errors(comp, 200, 200);
  CHECK(se4(0) == doctest::Approx(0.5e-2).epsilon(1e-12));
}

TEST_CASE("jackknife combination is the affine identity") {
  std::mt19937_64 rng(557);
  const VectorXd beta = testutil::random_matrix(rng, 3, 1);
  const VectorXd same =
      ife::jackknife_combine(beta, beta, beta, beta, beta);
  CHECK((same - beta).cwiseAbs().maxCoeff() == 0.0);

  const VectorXd b1 = testutil::random_matrix(rng, 3, 1);
  const VectorXd b2 = testutil::random_matrix(rng, 3, 1);
  const VectorXd b3 = testutil::random_matrix(rng, 3, 1);
  const VectorXd b4 = testutil::random_matrix(rng, 3, 1);
  const VectorXd combo = ife::jackknife_combine(beta, b1, b2, b3, b4);
  CHECK((combo - (3.0 * beta - 0.5 * (b1 + b2) - 0.5 * (b3 + b4)))
            .cwiseAbs()
            .maxCoeff() < 1e-15);
}

TEST_CASE("half-panel boundaries use the ceiling split") {
  // T = 5 splits into {0,1,2} and {3,4} (1-based {1..3}, {4,5}).
  const PanelData panel{MatrixXd::Zero(6, 5), {}};
  const PanelData first = ife::subpanel(panel, 0, 6, 0, (5 + 1) / 2);
  const PanelData second = ife::subpanel(panel, 0, 6, (5 + 1) / 2, 5);
  CHECK(first.t() == 3);
  CHECK(second.t() == 2);
}

TEST_CASE("bias corrections shrink toward the truth on simulated data") {
  // Moderate panel: the corrected estimate should land closer to the
  // truth than the uncorrected local fit.
  auto [panel, truth] = ife::gen_logit_static(60, 50, 4242);
  ife::TwoStepOptions opts;
  opts.rank = 2;
  const ife::TwoStepFit fit = ife::run_two_step(panel, Family::Logit, opts);
  REQUIRE(fit.local.converged);
  const BiasComponents comp =
      ife::compute_bias_components(panel, Family::Logit, fit.local.params);
  const VectorXd corrected =
      ife::analytic_bias_correct(panel, Family::Logit, fit.local.params, comp);
  const VectorXd se = ife::standard_errors(comp, 60, 50);
  CHECK(se(0) > 0.0);
  // The correction moves the estimate downward (incidental-parameter
  // bias is positive here) without overshooting wildly.
  CHECK(corrected(0) < fit.local.params.beta(0));
  CHECK(std::abs(corrected(0) - 0.2) < std::abs(fit.local.params.beta(0) - 0.2) + 0.01);
}

TEST_CASE("correction terms scale as O(1/T)") {
  // Doubling T on the same data-generating design roughly halves the
  // T-side correction.
  auto [panel_a, truth_a] = ife::gen_logit_static(70, 40, 777);
  auto [panel_b, truth_b] = ife::gen_logit_static(70, 80, 778);
  ife::TwoStepOptions opts;
  opts.rank = 2;
  double norm_a = 0.0, norm_b = 0.0;
  {
    const ife::TwoStepFit fit = ife::run_two_step(panel_a, Family::Logit, opts);
    const BiasComponents comp =
        ife::compute_bias_components(panel_a, Family::Logit, fit.local.params);
    Eigen::LLT<MatrixXd> llt(comp.w_hat);
    norm_a = (llt.solve(comp.b_hat) / panel_a.t()).norm();
  }
  {
    const ife::TwoStepFit fit = ife::run_two_step(panel_b, Family::Logit, opts);
    const BiasComponents comp =
        ife::compute_bias_components(panel_b, Family::Logit, fit.local.params);
    Eigen::LLT<MatrixXd> llt(comp.w_hat);
    norm_b = (llt.solve(comp.b_hat) / panel_b.t()).norm();
  }
  const double ratio = norm_b / norm_a;  // ideal 0.5
  CHECK(ratio > 0.25);
  CHECK(ratio < 0.75);
}

TEST_CASE("jackknife re-estimates the four half-panels") {
  auto [panel, truth] = ife::gen_logit_static(36, 30, 91);
  ife::TwoStepOptions opts;
  opts.rank = 2;
  const ife::TwoStepFit fit = ife::run_two_step(panel, Family::Logit, opts);
  REQUIRE(fit.local.converged);
  const VectorXd jk = ife::jackknife_correct(panel, Family::Logit, 2,
                                             fit.local.params.beta, opts);
  CHECK(jk.size() == 1);
  CHECK(std::isfinite(jk(0)));
  // The affine formula can move the estimate substantially, but not
  // absurdly at this size.
  CHECK(std::abs(jk(0) - 0.2) < 0.6);
  CHECK_THROWS_AS(ife::jackknife_correct(ife::subpanel(panel, 0, 3, 0, 3),
                                         Family::Logit, 2,
                                         fit.local.params.beta, opts),
                  ife::ArgumentError);
}
