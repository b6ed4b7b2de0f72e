#include "ifepanel/local.hpp"

#include <omp.h>

#include <algorithm>
#include <cmath>
#include <random>

#include "ifepanel/backtrack.hpp"
#include "ifepanel/lowrank.hpp"
#include "ifepanel/objective.hpp"

namespace ife {

namespace {

double scaled_grad_norm(const VectorXd& gb, const MatrixXd& gl,
                        const MatrixXd& gg, int n, int t) {
  double norm = gb.size() > 0 ? gb.cwiseAbs().maxCoeff() : 0.0;
  if (gl.size() > 0) norm = std::max(norm, n * gl.cwiseAbs().maxCoeff());
  if (gg.size() > 0) norm = std::max(norm, t * gg.cwiseAbs().maxCoeff());
  return norm;
}

}  // namespace

LocalSolution solve_local(const PanelData& panel, Family family, int r,
                          const FactorParams& init,
                          const LocalOptions& options) {
  check_panel_shapes(panel);
  validate_panel(panel, family);
  const int n = panel.n();
  const int t = panel.t();
  if (r < 0 || r > std::min(n, t)) throw ArgumentError("invalid rank");
  if (init.rank() != r || init.gamma.cols() != r)
    throw ArgumentError("initial factors do not have the requested rank");
  if (init.beta.size() != panel.dx())
    throw ArgumentError("initial beta does not match the panel");
  if (init.lambda.rows() != n || init.gamma.rows() != t)
    throw ArgumentError("initial factor dimensions do not match the panel");

  VectorXd beta = init.beta;
  MatrixXd lambda = init.lambda;
  MatrixXd gamma = init.gamma;
  double s_beta = options.s_beta_init;
  double s_lambda = options.s_lambda_init > 0.0 ? options.s_lambda_init
                                                : static_cast<double>(t);
  double s_gamma = options.s_gamma_init > 0.0 ? options.s_gamma_init
                                              : static_cast<double>(n);
  const double s_beta_floor = 1e-16 * s_beta;

  LocalSolution sol;
  sol.threads = omp_get_max_threads();

  double objective;
  MatrixXd score;
  eval_objective_score(panel, family,
                       index_matrix(panel, beta, lambda * gamma.transpose()),
                       &objective, &score);
  sol.objective_trace.push_back(objective);

  const double s_beta_cap = s_beta;
  int stagnant = 0;
  bool last_accepted_clean = false;
  for (int iter = 1; iter <= options.max_iters; ++iter) {
    // Steps may recover between iterations (never within one); only after
    // an iteration that needed no halving, to avoid thrashing at the
    // stability boundary.
    if (last_accepted_clean) {
      const double regrow = std::min(2.0, s_beta_cap / s_beta);
      s_beta *= regrow;
      s_lambda *= regrow;
      s_gamma *= regrow;
    }

    const VectorXd gb = grad_beta_from_score(panel, score);
    const MatrixXd gl = grad_lambda_from_score(score, gamma);
    const MatrixXd gg = grad_gamma_from_score(score, lambda);
    const double gnorm = scaled_grad_norm(gb, gl, gg, n, t);
    sol.grad_norms_final = {gb.size() ? gb.cwiseAbs().maxCoeff() : 0.0,
                            gl.size() ? n * gl.cwiseAbs().maxCoeff() : 0.0,
                            gg.size() ? t * gg.cwiseAbs().maxCoeff() : 0.0};
    if (gnorm <= options.tol_grad) {
      sol.converged = true;
      break;
    }

    VectorXd beta_new;
    MatrixXd lambda_new, gamma_new, score_new;
    double objective_new = 0.0;
    auto trial = [&](double scale) {
      beta_new = beta - scale * s_beta * gb;
      lambda_new = lambda - scale * s_lambda * gl;
      gamma_new = gamma - scale * s_gamma * gg;
      if (options.rho_lambda)
        lambda_new =
            lambda_new.cwiseMax(-*options.rho_lambda).cwiseMin(*options.rho_lambda);
      if (options.rho_gamma)
        gamma_new =
            gamma_new.cwiseMax(-*options.rho_gamma).cwiseMin(*options.rho_gamma);
      eval_objective_score(
          panel, family,
          index_matrix(panel, beta_new, lambda_new * gamma_new.transpose()),
          &objective_new, &score_new);
      const double dist = (beta_new - beta).norm() +
                          (lambda_new - lambda).norm() / std::sqrt(1.0 * n) +
                          (gamma_new - gamma).norm() / std::sqrt(1.0 * t);
      const double ref = 1.0 + beta.norm() + lambda.norm() / std::sqrt(1.0 * n) +
                         gamma.norm() / std::sqrt(1.0 * t);
      return std::make_pair(objective_new, dist / ref);
    };
    const BacktrackOutcome accepted =
        backtrack_halving(objective, trial, s_beta_floor / s_beta);
    s_beta *= accepted.scale;
    s_lambda *= accepted.scale;
    s_gamma *= accepted.scale;
    last_accepted_clean = accepted.halvings == 0;

    const double progress = std::abs(objective - objective_new);
    if (options.normalize_each_iter && r > 0) {
      auto [ln, gn] = normalize_factors(lambda_new, gamma_new);
      lambda_new = std::move(ln);
      gamma_new = std::move(gn);
      eval_objective_score(
          panel, family,
          index_matrix(panel, beta_new, lambda_new * gamma_new.transpose()),
          &objective_new, &score_new);
    }

    beta.swap(beta_new);
    lambda.swap(lambda_new);
    gamma.swap(gamma_new);
    score.swap(score_new);
    objective = objective_new;
    sol.objective_trace.push_back(objective);
    sol.iterations = iter;

    // Zero numerical progress over many iterations with gradients still
    // above tol: give up and report a non-converged fit.
    stagnant = progress <= 1e-15 * std::max(1.0, std::abs(objective))
                   ? stagnant + 1
                   : 0;
    if (stagnant >= 50) break;
  }

  if (!sol.converged) {
    const VectorXd gb = grad_beta_from_score(panel, score);
    const MatrixXd gl = grad_lambda_from_score(score, gamma);
    const MatrixXd gg = grad_gamma_from_score(score, lambda);
    sol.grad_norms_final = {gb.size() ? gb.cwiseAbs().maxCoeff() : 0.0,
                            gl.size() ? n * gl.cwiseAbs().maxCoeff() : 0.0,
                            gg.size() ? t * gg.cwiseAbs().maxCoeff() : 0.0};
    sol.converged = scaled_grad_norm(gb, gl, gg, n, t) <= options.tol_grad;
  }

  sol.params = FactorParams{std::move(beta), std::move(lambda), std::move(gamma)};
  sol.objective = objective;
  return sol;
}

double hessian_probe_convexity(const PanelData& panel, Family family,
                               const FactorParams& params, int n_probes,
                               std::uint64_t seed) {
  if (n_probes < 1) throw ArgumentError("need at least one probe");
  const int n = panel.n();
  const int t = panel.t();
  const int r = params.rank();
  const int dx = panel.dx();
  const int dim = dx + n * r + t * r;
  std::mt19937_64 rng(seed);
  std::normal_distribution<double> gauss;

  const double sqrt_n = std::sqrt(static_cast<double>(n));
  const double sqrt_t = std::sqrt(static_cast<double>(t));

  auto gradient = [&](const FactorParams& p) {
    const MatrixXd index =
        index_matrix(panel, p.beta, p.lambda * p.gamma.transpose());
    const MatrixXd score = score_from_index(panel, family, index);
    VectorXd g(dim);
    g.head(dx) = grad_beta_from_score(panel, score);
    const MatrixXd gl = grad_lambda_from_score(score, p.gamma);
    const MatrixXd gg = grad_gamma_from_score(score, p.lambda);
    g.segment(dx, n * r) = Eigen::Map<const VectorXd>(gl.data(), n * r);
    g.tail(t * r) = Eigen::Map<const VectorXd>(gg.data(), t * r);
    return g;
  };

  auto shifted = [&](const VectorXd& u, double step) {
    FactorParams p = params;
    p.beta += step * u.head(dx);
    p.lambda += step * Eigen::Map<const MatrixXd>(u.data() + dx, n, r);
    p.gamma += step * Eigen::Map<const MatrixXd>(u.data() + dx + n * r, t, r);
    return p;
  };

  double min_quotient = std::numeric_limits<double>::infinity();
  for (int probe = 0; probe < n_probes; ++probe) {
    VectorXd v(dim);
    for (int j = 0; j < dim; ++j) v(j) = gauss(rng);
    v /= v.norm();
    // u = W^(-1/2) v with W = diag(I, I/N, I/T), so v'W^(-1/2) H W^(-1/2) v
    // compares the Hessian against the diag(1, 1/N, 1/T) floor.
    VectorXd u = v;
    u.segment(dx, n * r) *= sqrt_n;
    u.tail(t * r) *= sqrt_t;
    const double h = 1e-4 / std::max(1.0, u.norm());
    const VectorXd g_plus = gradient(shifted(u, h));
    const VectorXd g_minus = gradient(shifted(u, -h));
    const double quotient = (g_plus - g_minus).dot(u) / (2.0 * h);
    min_quotient = std::min(min_quotient, quotient);
  }
  return min_quotient;
}

}  // namespace ife
