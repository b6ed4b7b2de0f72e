#include <doctest.h>

#include <cmath>
#include <random>

#include "ifepanel/local.hpp"
#include "ifepanel/lowrank.hpp"
#include "ifepanel/nnr.hpp"
#include "ifepanel/objective.hpp"
#include "testutil.hpp"

using ife::FactorParams;
using ife::Family;
using ife::LocalOptions;
using ife::MatrixXd;
using ife::PanelData;
using ife::VectorXd;

namespace {

FactorParams random_start(std::mt19937_64& rng, int n, int t, int dx, int r,
                          double scale = 1.0) {
  FactorParams p;
  p.beta = scale * testutil::random_matrix(rng, dx, 1);
  p.lambda = scale * testutil::random_matrix(rng, n, r);
  p.gamma = scale * testutil::random_matrix(rng, t, r);
  return p;
}

}  // namespace

TEST_CASE("an exact stationary point is returned unchanged") {
  std::mt19937_64 rng(211);
  const int n = 5, t = 5;
  PanelData panel;
  panel.y.resize(n, t);
  MatrixXd theta0(n, t);
  std::uniform_int_distribution<int> counts(1, 3);
  for (int i = 0; i < n; ++i)
    for (int tt = 0; tt < t; ++tt) {
      panel.y(i, tt) = counts(rng);
      theta0(i, tt) = std::log(panel.y(i, tt));
    }
  auto [lambda, gamma] = ife::extract_factors(theta0, 5);
  FactorParams init{VectorXd(0), lambda, gamma};
  const ife::LocalSolution sol =
      ife::solve_local(panel, Family::Poisson, 5, init, LocalOptions{});
  CHECK(sol.converged);
  CHECK(sol.iterations == 0);
  CHECK((sol.params.lambda - lambda).cwiseAbs().maxCoeff() <= 1e-8);
  CHECK((sol.params.gamma - gamma).cwiseAbs().maxCoeff() <= 1e-8);
}

TEST_CASE("NNR-initialized descent beats random multistarts on a small logit panel") {
  std::mt19937_64 rng(223);
  auto [panel, truth] = testutil::random_panel(rng, 4, 4, 1, 1, Family::Logit);

  ife::NnrOptions nnr_opts;
  nnr_opts.phi = 0.1;
  const ife::NnrSolution nnr = ife::solve_nnr(panel, Family::Logit, nnr_opts);
  auto [lam, gam] = ife::extract_factors(nnr.theta, 1);
  const ife::LocalSolution two_step = ife::solve_local(
      panel, Family::Logit, 1, FactorParams{nnr.beta, lam, gam}, LocalOptions{});

  double best = std::numeric_limits<double>::infinity();
  for (int s = 0; s < 50; ++s) {
    const ife::LocalSolution run = ife::solve_local(
        panel, Family::Logit, 1, random_start(rng, 4, 4, 1, 1), LocalOptions{});
    best = std::min(best, run.objective);
  }
  CHECK(two_step.objective <= best + 1e-6);
}

TEST_CASE("objective is invariant to invertible factor rotations of the start") {
  // Strictly positive Poisson outcomes make the likelihood coercive in
  // every index cell, so the optimum is interior. (Binary panels this
  // small can be separable, sending factors off to infinity.)
  std::mt19937_64 rng(227);
  const int n = 8, t = 8;
  PanelData panel;
  panel.x.push_back(testutil::random_matrix(rng, n, t));
  panel.y.resize(n, t);
  std::uniform_int_distribution<int> counts(1, 5);
  for (int i = 0; i < n; ++i)
    for (int tt = 0; tt < t; ++tt) panel.y(i, tt) = counts(rng);
  FactorParams init = random_start(rng, n, t, 1, 2, 0.4);

  MatrixXd g(2, 2);
  g << 1.1, 0.3, -0.2, 0.8;
  FactorParams rotated = init;
  rotated.lambda = init.lambda * g.transpose();
  rotated.gamma = init.gamma * g.inverse();

  const ife::LocalSolution a =
      ife::solve_local(panel, Family::Poisson, 2, init, LocalOptions{});
  const ife::LocalSolution b =
      ife::solve_local(panel, Family::Poisson, 2, rotated, LocalOptions{});
  CHECK(a.converged);
  CHECK(b.converged);
  CHECK(a.objective == doctest::Approx(b.objective).epsilon(1e-6));
}

TEST_CASE("objective trace is monotone, with and without normalization") {
  std::mt19937_64 rng(229);
  auto [panel, truth] = testutil::random_panel(rng, 7, 6, 1, 2, Family::Probit);
  FactorParams init = random_start(rng, 7, 6, 1, 2, 0.4);
  for (bool normalize : {true, false}) {
    LocalOptions opts;
    opts.normalize_each_iter = normalize;
    opts.max_iters = 400;
    const ife::LocalSolution sol =
        ife::solve_local(panel, Family::Probit, 2, init, opts);
    for (size_t k = 1; k < sol.objective_trace.size(); ++k)
      CHECK(sol.objective_trace[k] <= sol.objective_trace[k - 1] + 1e-12);
  }
}

TEST_CASE("per-iteration normalization keeps the factors balanced") {
  std::mt19937_64 rng(233);
  auto [panel, truth] = testutil::random_panel(rng, 8, 6, 1, 2, Family::Logit);
  // Badly unbalanced start.
  FactorParams init = random_start(rng, 8, 6, 1, 2);
  init.lambda *= 100.0;
  init.gamma /= 100.0;
  LocalOptions opts;
  opts.max_iters = 200;
  const ife::LocalSolution sol =
      ife::solve_local(panel, Family::Logit, 2, init, opts);
  const MatrixXd dl =
      sol.params.lambda.transpose() * sol.params.lambda / 8.0;
  const MatrixXd dg = sol.params.gamma.transpose() * sol.params.gamma / 6.0;
  CHECK((dl - dg).cwiseAbs().maxCoeff() < 1e-8);
  CHECK(std::abs(dl(0, 1)) < 1e-8);
}

TEST_CASE("rank zero performs a pure beta descent") {
  std::mt19937_64 rng(239);
  auto [panel, truth] = testutil::random_panel(rng, 6, 6, 2, 0, Family::Logit);
  FactorParams init;
  init.beta = VectorXd::Zero(2);
  init.lambda = MatrixXd::Zero(6, 0);
  init.gamma = MatrixXd::Zero(6, 0);
  const ife::LocalSolution sol =
      ife::solve_local(panel, Family::Logit, 0, init, LocalOptions{});
  CHECK(sol.converged);
  const VectorXd g = ife::grad_beta(panel, Family::Logit, sol.params.beta,
                                    MatrixXd::Zero(6, 6));
  CHECK(g.cwiseAbs().maxCoeff() <= 1e-8);
}

TEST_CASE("hessian probe is nonnegative at convex or converged points") {
  std::mt19937_64 rng(241);
  // Tiny noiseless Poisson surrogate: exact optimum of a convex problem.
  const int n = 4, t = 4;
  PanelData panel;
  panel.y.resize(n, t);
  MatrixXd theta0(n, t);
  std::uniform_int_distribution<int> counts(1, 4);
  for (int i = 0; i < n; ++i)
    for (int tt = 0; tt < t; ++tt) {
      panel.y(i, tt) = counts(rng);
      theta0(i, tt) = std::log(panel.y(i, tt));
    }
  auto [lam, gam] = ife::extract_factors(theta0, 4);
  CHECK(ife::hessian_probe_convexity(panel, Family::Poisson,
                                     FactorParams{VectorXd(0), lam, gam},
                                     20) >= -1e-6);

  // Converged logit fit on a 10x10 panel.
  auto [lpanel, ltruth] = testutil::random_panel(rng, 10, 10, 1, 1, Family::Logit);
  ife::NnrOptions nnr_opts;
  nnr_opts.phi = 0.15;
  const ife::NnrSolution nnr = ife::solve_nnr(lpanel, Family::Logit, nnr_opts);
  auto [lam2, gam2] = ife::extract_factors(nnr.theta, 1);
  const ife::LocalSolution sol = ife::solve_local(
      lpanel, Family::Logit, 1, FactorParams{nnr.beta, lam2, gam2},
      LocalOptions{});
  CHECK(ife::hessian_probe_convexity(lpanel, Family::Logit, sol.params, 16) >=
        -1e-4);

  // Far from an optimum the probe may be negative but stays finite.
  const double far = ife::hessian_probe_convexity(
      lpanel, Family::Logit, random_start(rng, 10, 10, 1, 1, 3.0), 8);
  CHECK(std::isfinite(far));
}

TEST_CASE("solver validates the initial point") {
  std::mt19937_64 rng(251);
  auto [panel, truth] = testutil::random_panel(rng, 5, 5, 1, 2, Family::Logit);
  FactorParams bad = random_start(rng, 5, 5, 1, 1);
  CHECK_THROWS_AS(ife::solve_local(panel, Family::Logit, 2, bad, LocalOptions{}),
                  ife::ArgumentError);
}
