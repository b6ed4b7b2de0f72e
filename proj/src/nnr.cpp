#include "ifepanel/nnr.hpp"

#include <omp.h>

#include <algorithm>
#include <cmath>

#include "ifepanel/backtrack.hpp"
#include "ifepanel/lowrank.hpp"
#include "ifepanel/objective.hpp"

namespace ife {

namespace {

void clip_inplace(MatrixXd& m, double bound) {
  m = m.cwiseMax(-bound).cwiseMin(bound);
}

void clip_inplace(VectorXd& v, double bound) {
  v = v.cwiseMax(-bound).cwiseMin(bound);
}

}  // namespace

SafeSteps theorem_safe_steps(const PanelData& panel, Family family,
                             const VectorXd& beta, const MatrixXd& theta) {
  const MatrixXd index = index_matrix(panel, beta, theta);
  double rho_x = 0.0;
  for (const auto& xd : panel.x)
    rho_x = std::max(rho_x, xd.cwiseAbs().maxCoeff());
  const double b_max = curvature_bound(family, index.minCoeff(),
                                       index.maxCoeff());
  const double nt = static_cast<double>(panel.n()) * panel.t();
  const double l_beta =
      4.0 * std::max(1, panel.dx()) * b_max * std::max(rho_x * rho_x, 1e-12);
  SafeSteps s;
  s.s_beta = 1.0 / l_beta;
  s.s_theta = nt / (4.0 * b_max);
  s.b_max = b_max;
  s.rho_x = rho_x;
  return s;
}

NnrSolution solve_nnr(const PanelData& panel, Family family,
                      const NnrOptions& options) {
  check_panel_shapes(panel);
  validate_panel(panel, family);
  if (!(options.phi > 0.0)) throw ArgumentError("phi must be positive");
  if (!(options.tol_rel_obj > 0.0)) throw ArgumentError("tolerance must be positive");

  const int n = panel.n();
  const int t = panel.t();
  const int dx = panel.dx();
  const double nt = static_cast<double>(n) * t;
  const double root_nt = std::sqrt(nt);

  VectorXd beta = options.init_beta.value_or(VectorXd::Zero(dx));
  MatrixXd theta = options.init_theta.value_or(MatrixXd::Zero(n, t));
  if (beta.size() != dx || theta.rows() != n || theta.cols() != t)
    throw ArgumentError("initial point dimensions do not match panel");

  double s_beta = options.s_beta_init;
  double s_theta = options.s_theta_init > 0.0 ? options.s_theta_init : nt;
  if (!(s_beta > 0.0) || !(s_theta > 0.0))
    throw ArgumentError("step sizes must be positive");
  const double s_beta_floor = 1e-16 * s_beta;

  NnrSolution sol;
  sol.threads = omp_get_max_threads();

  double objective;
  MatrixXd score;
  eval_objective_score(panel, family, index_matrix(panel, beta, theta),
                       &objective, &score);
  double nuc = theta.isZero(0.0) ? 0.0 : nuclear_norm(theta);
  double penalized = objective + options.phi / root_nt * nuc;
  sol.objective_trace.push_back(penalized);

  int consec = 0;
  bool last_accepted_clean = false;
  const double s_theta_cap = s_theta;
  for (int iter = 1; iter <= options.max_iters; ++iter) {
    // Steps may recover between iterations (never within one); only after
    // an iteration that needed no halving, to avoid thrashing at the
    // stability boundary.
    if (last_accepted_clean) {
      const double regrow = std::min(2.0, s_theta_cap / s_theta);
      s_beta *= regrow;
      s_theta *= regrow;
    }

    const VectorXd gb = grad_beta_from_score(panel, score);
    const MatrixXd gt = score * (-1.0 / nt);

    VectorXd beta_new;
    MatrixXd theta_new;
    VectorXd sv_new;
    double objective_new = 0.0, penalized_new = 0.0;
    double param_change = 0.0;
    MatrixXd score_new;
    auto trial = [&](double scale) {
      beta_new = beta - scale * s_beta * gb;
      if (options.rho_beta) clip_inplace(beta_new, *options.rho_beta);
      const double tau = scale * s_theta * options.phi / root_nt;
      theta_new =
          svd_soft_threshold(theta - scale * s_theta * gt, tau, &sv_new);
      sol.last_threshold = tau;
      if (options.rho_theta) {
        clip_inplace(theta_new, *options.rho_theta);
        sv_new = singular_values(theta_new);
      }
      eval_objective_score(panel, family,
                           index_matrix(panel, beta_new, theta_new),
                           &objective_new, &score_new);
      penalized_new = objective_new + options.phi / root_nt * sv_new.sum();
      param_change =
          (beta_new - beta).norm() + (theta_new - theta).norm() / root_nt;
      const double ref =
          1.0 + beta.norm() + theta.norm() / root_nt;
      return std::make_pair(penalized_new, param_change / ref);
    };
    const BacktrackOutcome accepted =
        backtrack_halving(penalized, trial, s_beta_floor / s_beta);
    s_beta *= accepted.scale;
    s_theta *= accepted.scale;
    last_accepted_clean = accepted.halvings == 0;

    const double rel_change =
        std::abs(penalized - penalized_new) / std::max(1.0, std::abs(penalized_new));

    beta.swap(beta_new);
    theta.swap(theta_new);
    score.swap(score_new);
    penalized = penalized_new;
    sol.objective_trace.push_back(penalized);
    sol.iterations = iter;
    sol.singular_values = sv_new;

    if (rel_change < options.tol_rel_obj && param_change < options.tol_rel_obj) {
      if (++consec >= options.consecutive) {
        sol.converged = true;
        break;
      }
    } else {
      consec = 0;
    }
  }

  sol.beta = std::move(beta);
  sol.theta = std::move(theta);
  sol.penalized_objective = penalized;
  sol.final_s_beta = s_beta;
  sol.final_s_theta = s_theta;
  if (sol.singular_values.size() == 0)
    sol.singular_values = singular_values(sol.theta);
  return sol;
}

}  // namespace ife
