#include "ifepanel/baselines.hpp"

#include <algorithm>
#include <cmath>

#include "ifepanel/objective.hpp"

namespace ife {

namespace {

constexpr double kFeClamp = 20.0;
constexpr int kMaxNewton = 200;

}  // namespace

PooledFit fit_pooled(const PanelData& panel, Family family) {
  check_panel_shapes(panel);
  validate_panel(panel, family);
  if (panel.dx() < 1) throw ArgumentError("fit_pooled requires d_x >= 1");
  const int n = panel.n();
  const int t = panel.t();
  const int dx = panel.dx();
  const double nt = static_cast<double>(n) * t;
  const MatrixXd zero_theta = MatrixXd::Zero(n, t);

  PooledFit fit;
  fit.beta = VectorXd::Zero(dx);
  double objective =
      objective_from_index(panel, family, index_matrix(panel, fit.beta, zero_theta));

  for (int iter = 1; iter <= kMaxNewton; ++iter) {
    const MatrixXd index = index_matrix(panel, fit.beta, zero_theta);
    MatrixXd d1, d2;
    loglik_deriv_matrices(panel, family, index, &d1, &d2, nullptr);
    VectorXd g = VectorXd::Zero(dx);
    MatrixXd h = MatrixXd::Zero(dx, dx);
    for (int d = 0; d < dx; ++d) {
      g(d) = -(d1.array() * panel.x[d].array()).sum() / nt;
      for (int e = d; e < dx; ++e) {
        h(d, e) = (-d2.array() * panel.x[d].array() * panel.x[e].array()).sum() / nt;
        h(e, d) = h(d, e);
      }
    }
    fit.grad_norm = g.norm();
    fit.iterations = iter;
    if (fit.grad_norm <= 1e-8) {
      fit.converged = true;
      break;
    }
    const VectorXd dir = h.ldlt().solve(-g);
    if (!dir.allFinite()) break;
    double step = 1.0;
    bool accepted = false;
    for (int half = 0; half < 60; ++half) {
      const VectorXd cand = fit.beta + step * dir;
      const double obj_cand =
          objective_from_index(panel, family, index_matrix(panel, cand, zero_theta));
      if (std::isfinite(obj_cand) && obj_cand <= objective + 1e-14) {
        fit.beta = cand;
        objective = obj_cand;
        accepted = true;
        break;
      }
      step *= 0.5;
    }
    if (!accepted || fit.beta.cwiseAbs().maxCoeff() > 1e6) break;  // separation
  }
  fit.objective = objective;
  return fit;
}

AdditiveFeFit fit_additive_fe(const PanelData& panel, Family family) {
  check_panel_shapes(panel);
  validate_panel(panel, family);
  const int n = panel.n();
  const int t = panel.t();
  const int dx = panel.dx();
  if (n < 2 || t < 2) throw ArgumentError("fit_additive_fe requires N,T >= 2");
  const double nt = static_cast<double>(n) * t;

  // Degenerate outcomes whose effects diverge: all-0/all-1 binary rows or
  // columns, all-zero Poisson rows or columns.
  AdditiveFeFit fit;
  for (int i = 0; i < n; ++i) {
    const double s = panel.y.row(i).sum();
    if (s == 0.0 || (is_binary(family) && s == static_cast<double>(t)))
      fit.clamped_units.push_back(i);
  }
  for (int tt = 0; tt < t; ++tt) {
    const double s = panel.y.col(tt).sum();
    if (s == 0.0 || (is_binary(family) && s == static_cast<double>(n)))
      fit.clamped_periods.push_back(tt);
  }

  VectorXd beta = VectorXd::Zero(dx);
  VectorXd a = VectorXd::Zero(n);
  VectorXd dl = VectorXd::Zero(t - 1);  // delta_T = -sum(dl)

  // Degenerate units are frozen at the clamp from the start and dropped
  // from the Newton system; their effect would diverge there anyway.
  std::vector<bool> frozen_unit(n, false);
  for (int i : fit.clamped_units) {
    frozen_unit[i] = true;
    const double s = panel.y.row(i).sum();
    a(i) = s == 0.0 ? -kFeClamp : kFeClamp;
  }

  auto full_delta = [&](const VectorXd& d_free) {
    VectorXd delta(t);
    delta.head(t - 1) = d_free;
    delta(t - 1) = -d_free.sum();
    return delta;
  };
  auto build_index = [&](const VectorXd& b, const VectorXd& aa,
                         const VectorXd& d_free) {
    const VectorXd delta = full_delta(d_free);
    MatrixXd index(n, t);
    for (int tt = 0; tt < t; ++tt) index.col(tt).setConstant(delta(tt));
    index.colwise() += aa;
    for (int d = 0; d < dx; ++d) index.noalias() += b(d) * panel.x[d];
    return index;
  };

  double objective =
      objective_from_index(panel, family, build_index(beta, a, dl));

  const int m = (t - 1) + dx;
  for (int iter = 1; iter <= kMaxNewton; ++iter) {
    const MatrixXd index = build_index(beta, a, dl);
    MatrixXd d1, d2;
    loglik_deriv_matrices(panel, family, index, &d1, &d2, nullptr);
    const MatrixXd w = -d2;  // -l'' >= 0

    // Unscaled gradient and Hessian blocks of sum(-l); delta_T eliminated.
    const VectorXd ga = -d1.rowwise().sum();
    const VectorXd col_u = d1.colwise().sum();
    VectorXd gdl(t - 1);
    for (int tt = 0; tt < t - 1; ++tt) gdl(tt) = -(col_u(tt) - col_u(t - 1));
    VectorXd gb(dx);
    for (int d = 0; d < dx; ++d)
      gb(d) = -(d1.array() * panel.x[d].array()).sum();

    const VectorXd q = w.rowwise().sum();        // H_aa diagonal
    const VectorXd c = w.colwise().sum();        // column curvature
    MatrixXd h_adl(n, t - 1);                    // w_it - w_iT
    for (int tt = 0; tt < t - 1; ++tt)
      h_adl.col(tt) = w.col(tt) - w.col(t - 1);
    MatrixXd h_ab(n, dx);
    for (int d = 0; d < dx; ++d)
      h_ab.col(d) = (w.array() * panel.x[d].array()).rowwise().sum();

    // Guard against exactly-zero curvature rows (fully saturated units);
    // frozen units do not enter the elimination.
    VectorXd qinv =
        q.unaryExpr([](double v) { return 1.0 / std::max(v, 1e-30); });
    for (int i = 0; i < n; ++i)
      if (frozen_unit[i]) qinv(i) = 0.0;

    MatrixXd s(m, m);
    VectorXd rhs(m);
    // delta-delta block: diag(c_t) + c_T - h_adl' D^-1 h_adl
    s.topLeftCorner(t - 1, t - 1).noalias() =
        -h_adl.transpose() * (qinv.asDiagonal() * h_adl);
    s.topLeftCorner(t - 1, t - 1).array() += c(t - 1);
    for (int tt = 0; tt < t - 1; ++tt) s(tt, tt) += c(tt);
    if (dx > 0) {
      MatrixXd h_dlb(t - 1, dx);
      for (int d = 0; d < dx; ++d) {
        const VectorXd wx_col = (w.array() * panel.x[d].array()).colwise().sum();
        for (int tt = 0; tt < t - 1; ++tt)
          h_dlb(tt, d) = wx_col(tt) - wx_col(t - 1);
      }
      MatrixXd h_bb(dx, dx);
      for (int d = 0; d < dx; ++d)
        for (int e = d; e < dx; ++e) {
          h_bb(d, e) =
              (w.array() * panel.x[d].array() * panel.x[e].array()).sum();
          h_bb(e, d) = h_bb(d, e);
        }
      s.topRightCorner(t - 1, dx).noalias() =
          h_dlb - h_adl.transpose() * (qinv.asDiagonal() * h_ab);
      s.bottomLeftCorner(dx, t - 1) = s.topRightCorner(t - 1, dx).transpose();
      s.bottomRightCorner(dx, dx).noalias() =
          h_bb - h_ab.transpose() * (qinv.asDiagonal() * h_ab);
      rhs.tail(dx) = -(gb - h_ab.transpose() * (qinv.asDiagonal() * ga));
    }
    rhs.head(t - 1) = -(gdl - h_adl.transpose() * (qinv.asDiagonal() * ga));

    const VectorXd z = s.ldlt().solve(rhs);
    if (!z.allFinite()) break;
    const VectorXd ddl = z.head(t - 1);
    const VectorXd db = dx > 0 ? VectorXd(z.tail(dx)) : VectorXd(0);
    const VectorXd da =
        qinv.asDiagonal() * (-ga - h_adl * ddl - (dx > 0 ? (h_ab * db).eval()
                                                         : VectorXd::Zero(n)));

    // Convergence on the scaled gradient, skipping clamped coordinates.
    double gnorm = 0.0;
    for (int d = 0; d < dx; ++d) gnorm = std::max(gnorm, std::abs(gb(d)) / nt);
    for (int i = 0; i < n; ++i)
      if (!frozen_unit[i] && std::abs(a(i)) < kFeClamp - 1e-9)
        gnorm = std::max(gnorm, n * std::abs(ga(i)) / nt);
    const VectorXd delta_now = full_delta(dl);
    VectorXd gdelta_full(t);
    gdelta_full.head(t - 1) = gdl;
    gdelta_full(t - 1) = 0.0;
    for (int tt = 0; tt < t - 1; ++tt)
      if (std::abs(delta_now(tt)) < kFeClamp - 1e-9)
        gnorm = std::max(gnorm, t * std::abs(gdl(tt)) / nt);
    fit.grad_norm = gnorm;
    fit.iterations = iter;
    if (gnorm <= 1e-8) {
      fit.converged = true;
      break;
    }

    double step = 1.0;
    bool accepted = false;
    for (int half = 0; half < 60; ++half) {
      VectorXd a_cand = (a + step * da).cwiseMax(-kFeClamp).cwiseMin(kFeClamp);
      VectorXd dl_cand =
          (dl + step * ddl).cwiseMax(-kFeClamp).cwiseMin(kFeClamp);
      VectorXd b_cand = dx > 0 ? VectorXd(beta + step * db) : beta;
      const double obj_cand = objective_from_index(
          panel, family, build_index(b_cand, a_cand, dl_cand));
      if (std::isfinite(obj_cand) && obj_cand <= objective + 1e-14) {
        a = std::move(a_cand);
        dl = std::move(dl_cand);
        beta = std::move(b_cand);
        objective = obj_cand;
        accepted = true;
        break;
      }
      step *= 0.5;
    }
    if (!accepted) break;
  }

  fit.beta = std::move(beta);
  fit.alpha = a;
  fit.delta = full_delta(dl);
  fit.objective = objective;
  return fit;
}

}  // namespace ife
