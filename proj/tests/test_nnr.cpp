#include <doctest.h>

#include <cmath>
#include <random>

#include "ifepanel/backtrack.hpp"
#include "ifepanel/lowrank.hpp"
#include "ifepanel/nnr.hpp"
#include "ifepanel/objective.hpp"
#include "testutil.hpp"

using ife::Family;
using ife::MatrixXd;
using ife::NnrOptions;
using ife::PanelData;
using ife::VectorXd;

namespace {

double penalized_objective(const PanelData& panel, Family family,
                           const VectorXd& beta, const MatrixXd& theta,
                           double phi) {
  const double root_nt = std::sqrt(1.0 * panel.n() * panel.t());
  return ife::objective_theta(panel, family, beta, theta) +
         phi / root_nt * ife::nuclear_norm(theta);
}

// Long-run fixed-step proximal-gradient oracle: the same update map as the
// solver, run at conservative safe steps for many iterations.
std::pair<VectorXd, MatrixXd> fixed_step_oracle(const PanelData& panel,
                                                Family family, double phi,
                                                double s_beta, double s_theta,
                                                int iters) {
  const double nt = 1.0 * panel.n() * panel.t();
  VectorXd beta = VectorXd::Zero(panel.dx());
  MatrixXd theta = MatrixXd::Zero(panel.n(), panel.t());
  for (int k = 0; k < iters; ++k) {
    const MatrixXd index = ife::index_matrix(panel, beta, theta);
    const MatrixXd score = ife::score_from_index(panel, family, index);
    const VectorXd gb = ife::grad_beta_from_score(panel, score);
    const MatrixXd gt = score * (-1.0 / nt);
    beta -= s_beta * gb;
    theta = ife::svd_soft_threshold(theta - s_theta * gt,
                                    s_theta * phi / std::sqrt(nt));
  }
  return {beta, theta};
}

}  // namespace

TEST_CASE("backtracking accepts strict decrease and halves equal-value overshoots") {
  // 1-D quadratic analogue: x0 = 1, f(x) = x^2, gradient step size 1.
  // The full step lands on x = -1 with an unchanged objective and must be
  // halved; the halved step lands exactly on the minimizer.
  double x_cand = 0.0;
  auto trial = [&](double scale) {
    x_cand = 1.0 - scale * 2.0;
    return std::make_pair(x_cand * x_cand, std::abs(x_cand - 1.0));
  };
  const ife::BacktrackOutcome out = ife::backtrack_halving(1.0, trial);
  CHECK(out.scale == doctest::Approx(0.5));
  CHECK(x_cand == doctest::Approx(0.0));
  CHECK(out.halvings == 1);

  // At a stationary point the map returns the same point: accepted with
  // the steps unchanged.
  auto stationary = [&](double) { return std::make_pair(4.0, 0.0); };
  const ife::BacktrackOutcome stat = ife::backtrack_halving(4.0, stationary);
  CHECK(stat.scale == 1.0);
  CHECK(stat.halvings == 0);

  // Steps below the floor raise a stall error.
  auto hopeless = [&](double) { return std::make_pair(10.0, 1.0); };
  CHECK_THROWS_AS(ife::backtrack_halving(1.0, hopeless), ife::StallError);
}

TEST_CASE("backtracked gradient step strictly decreases a random logit objective") {
  std::mt19937_64 rng(101);
  auto [panel, truth] = testutil::random_panel(rng, 5, 5, 1, 1, Family::Logit);
  const double phi = 0.2;
  VectorXd beta = VectorXd::Zero(1);
  MatrixXd theta = MatrixXd::Zero(5, 5);
  const double f0 = penalized_objective(panel, Family::Logit, beta, theta, phi);
  const MatrixXd score = ife::score_from_index(
      panel, Family::Logit, ife::index_matrix(panel, beta, theta));
  const VectorXd gb = ife::grad_beta_from_score(panel, score);
  const MatrixXd gt = score * (-1.0 / 25.0);
  auto trial = [&](double scale) {
    const VectorXd b = beta - scale * 1.0 * gb;
    const MatrixXd th = ife::svd_soft_threshold(
        theta - scale * 25.0 * gt, scale * 25.0 * phi / 5.0);
    const double f = penalized_objective(panel, Family::Logit, b, th, phi);
    return std::make_pair(f, (b - beta).norm() + (th - theta).norm());
  };
  const ife::BacktrackOutcome out = ife::backtrack_halving(f0, trial);
  CHECK(out.objective < f0);
}

TEST_CASE("overwhelming penalty yields a zero theta") {
  std::mt19937_64 rng(103);
  auto [panel, truth] = testutil::random_panel(rng, 6, 5, 0, 2, Family::Logit);
  const MatrixXd g0 = ife::grad_theta(panel, Family::Logit, VectorXd(0),
                                      MatrixXd::Zero(6, 5));
  NnrOptions opts;
  opts.phi = std::sqrt(30.0) * ife::operator_norm(g0) * 1e3;
  const ife::NnrSolution sol = ife::solve_nnr(panel, Family::Logit, opts);
  CHECK(sol.converged);
  CHECK(sol.theta.cwiseAbs().maxCoeff() == 0.0);
}

TEST_CASE("solver matches the long-run fixed-step oracle") {
  std::mt19937_64 rng(107);
  auto [panel, truth] = testutil::random_panel(rng, 4, 4, 1, 1, Family::Logit);
  const double phi = 0.1;

  NnrOptions opts;
  opts.phi = phi;
  const ife::NnrSolution sol = ife::solve_nnr(panel, Family::Logit, opts);
  CHECK(sol.converged);

  // Conservative safe steps: s_beta = 1/(4 dx b_max rho_x^2), s_theta/NT =
  // 1/(4 b_max) with the logit curvature bound 1/4.
  double rho_x = panel.x[0].cwiseAbs().maxCoeff();
  const double s_beta = 1.0 / (4.0 * 1 * 0.25 * rho_x * rho_x);
  const double s_theta = 16.0 / (4.0 * 0.25);
  auto [ob, oth] =
      fixed_step_oracle(panel, Family::Logit, phi, s_beta, s_theta, 200000);
  const double oracle_value =
      penalized_objective(panel, Family::Logit, ob, oth, phi);
  CHECK(sol.penalized_objective <= oracle_value + 1e-6);
}

TEST_CASE("fixed safe steps never increase the objective across 1000 iterations") {
  std::mt19937_64 rng(109);
  auto [panel, truth] = testutil::random_panel(rng, 5, 6, 1, 1, Family::Logit);
  const double phi = 0.15;
  const ife::SafeSteps safe = ife::theorem_safe_steps(
      panel, Family::Logit, VectorXd::Zero(1), MatrixXd::Zero(5, 6));
  const double nt = 30.0;
  VectorXd beta = VectorXd::Zero(1);
  MatrixXd theta = MatrixXd::Zero(5, 6);
  double prev = penalized_objective(panel, Family::Logit, beta, theta, phi);
  for (int k = 0; k < 1000; ++k) {
    const MatrixXd score = ife::score_from_index(
        panel, Family::Logit, ife::index_matrix(panel, beta, theta));
    const MatrixXd gt = score * (-1.0 / nt);
    beta -= safe.s_beta * ife::grad_beta_from_score(panel, score);
    theta = ife::svd_soft_threshold(theta - safe.s_theta * gt,
                                    safe.s_theta * phi / std::sqrt(nt));
    const double cur = penalized_objective(panel, Family::Logit, beta, theta, phi);
    CHECK(cur <= prev + 1e-12);
    prev = cur;
  }
}

TEST_CASE("objective trace is monotone and the threshold level is exact") {
  std::mt19937_64 rng(113);
  for (int inst = 0; inst < 3; ++inst) {
    auto [panel, truth] = testutil::random_panel(rng, 6, 7, 1, 2, Family::Logit);
    NnrOptions opts;
    opts.phi = 0.2;
    const ife::NnrSolution sol = ife::solve_nnr(panel, Family::Logit, opts);
    for (size_t k = 1; k < sol.objective_trace.size(); ++k)
      CHECK(sol.objective_trace[k] <= sol.objective_trace[k - 1] + 1e-12);
    CHECK(sol.last_threshold ==
          doctest::Approx(sol.final_s_theta * 0.2 / std::sqrt(42.0))
              .epsilon(1e-15));
    CHECK(sol.penalized_objective <= sol.objective_trace.front());
  }
}

TEST_CASE("different initializations reach the same optimum") {
  std::mt19937_64 rng(127);
  auto [panel, truth] = testutil::random_panel(rng, 5, 5, 1, 1, Family::Logit);
  NnrOptions opts;
  opts.phi = 0.12;
  const ife::NnrSolution from_zero = ife::solve_nnr(panel, Family::Logit, opts);

  NnrOptions warm = opts;
  warm.init_beta = VectorXd::Constant(1, 0.7);
  warm.init_theta = testutil::random_matrix(rng, 5, 5, 0.5);
  const ife::NnrSolution from_random = ife::solve_nnr(panel, Family::Logit, warm);
  CHECK(from_zero.penalized_objective ==
        doctest::Approx(from_random.penalized_objective).epsilon(1e-6));
}

TEST_CASE("noiseless Poisson panel is recovered with a small penalty") {
  std::mt19937_64 rng(131);
  const int n = 12, t = 10;
  MatrixXd theta0(n, t);
  PanelData panel;
  panel.y.resize(n, t);
  std::uniform_int_distribution<int> counts(1, 6);
  for (int i = 0; i < n; ++i)
    for (int tt = 0; tt < t; ++tt) {
      panel.y(i, tt) = counts(rng);
      theta0(i, tt) = std::log(panel.y(i, tt));
    }
  NnrOptions opts;
  opts.phi = 1e-4;
  opts.max_iters = 20000;
  const ife::NnrSolution sol = ife::solve_nnr(panel, Family::Poisson, opts);
  CHECK((sol.theta - theta0).norm() / std::sqrt(1.0 * n * t) <= 0.05);
}

TEST_CASE("solver validates its inputs") {
  PanelData panel;
  panel.y = MatrixXd::Ones(3, 3);
  NnrOptions opts;
  opts.phi = 0.0;
  CHECK_THROWS_AS(ife::solve_nnr(panel, Family::Logit, opts), ife::ArgumentError);
  opts.phi = 0.1;
  opts.init_theta = MatrixXd::Zero(2, 2);
  CHECK_THROWS_AS(ife::solve_nnr(panel, Family::Logit, opts), ife::ArgumentError);
}
