#include "ifepanel/bias.hpp"

#include <omp.h>

#include <Eigen/Eigenvalues>
#include <algorithm>
#include <cmath>
#include <string>

#include "ifepanel/objective.hpp"

namespace ife {

namespace {

// Moore-Penrose inverse of a small symmetric PSD matrix.
MatrixXd pinv_psd(const MatrixXd& m) {
  Eigen::SelfAdjointEigenSolver<MatrixXd> es(m);
  const VectorXd& ev = es.eigenvalues();
  const double cutoff = 1e-12 * std::max(ev.cwiseAbs().maxCoeff(), 1e-300);
  VectorXd inv = VectorXd::Zero(ev.size());
  for (int j = 0; j < ev.size(); ++j)
    if (ev(j) > cutoff) inv(j) = 1.0 / ev(j);
  return es.eigenvectors() * inv.asDiagonal() * es.eigenvectors().transpose();
}

struct XiCore {
  MatrixXd p;  // row-side coefficients, pairs with the column factors
  MatrixXd q;  // column-side coefficients, pairs with the row factors
};

// Solves min sum_it w_it (x_it - ghat_t' p_i - lhat_i' q_t)^2 by
// eliminating the row blocks and solving the column-side Schur system
// with a rank-revealing decomposition (the map has an R^2 null space).
// The Schur factorization is shared across all targets.
std::vector<XiCore> xi_direct(const MatrixXd& w,
                              const std::vector<const MatrixXd*>& targets,
                              const MatrixXd& lhat, const MatrixXd& ghat) {
  const int n = static_cast<int>(w.rows());
  const int m = static_cast<int>(w.cols());
  const int r = static_cast<int>(lhat.cols());
  const int dim = m * r;

  std::vector<MatrixXd> m_i(n);  // pinv of A_i = sum_t w_it ghat_t ghat_t'
  for (int i = 0; i < n; ++i) {
    MatrixXd a = MatrixXd::Zero(r, r);
    for (int t = 0; t < m; ++t)
      a.noalias() += w(i, t) * ghat.row(t).transpose() * ghat.row(t);
    m_i[i] = pinv_psd(a);
  }

  MatrixXd schur = MatrixXd::Zero(dim, dim);
  for (int t = 0; t < m; ++t) {
    MatrixXd b = MatrixXd::Zero(r, r);
    for (int i = 0; i < n; ++i)
      b.noalias() += w(i, t) * lhat.row(i).transpose() * lhat.row(i);
    schur.block(t * r, t * r, r, r) = b;
  }
  MatrixXd gw(m, r);
  for (int i = 0; i < n; ++i) {
    for (int t = 0; t < m; ++t) gw.row(t) = w(i, t) * ghat.row(t);
    const MatrixXd f = gw * m_i[i] * gw.transpose();  // m x m
    const MatrixXd li = lhat.row(i).transpose() * lhat.row(i);
    for (int t = 0; t < m; ++t)
      for (int s = 0; s < m; ++s)
        if (f(t, s) != 0.0) schur.block(t * r, s * r, r, r) -= f(t, s) * li;
  }

  Eigen::CompleteOrthogonalDecomposition<MatrixXd> cod(schur);
  cod.setThreshold(1e-10);

  std::vector<XiCore> out;
  out.reserve(targets.size());
  for (const MatrixXd* xp : targets) {
    const MatrixXd& x = *xp;
    MatrixXd r_i(n, r);  // r_i = sum_t w_it x_it ghat_t
    for (int i = 0; i < n; ++i) {
      VectorXd acc = VectorXd::Zero(r);
      for (int t = 0; t < m; ++t) acc += w(i, t) * x(i, t) * ghat.row(t).transpose();
      r_i.row(i) = acc.transpose();
    }
    VectorXd rhs = VectorXd::Zero(dim);
    for (int t = 0; t < m; ++t) {
      VectorXd acc = VectorXd::Zero(r);
      for (int i = 0; i < n; ++i) acc += w(i, t) * x(i, t) * lhat.row(i).transpose();
      rhs.segment(t * r, r) = acc;
    }
    for (int i = 0; i < n; ++i) {
      const VectorXd v = m_i[i] * r_i.row(i).transpose();
      for (int t = 0; t < m; ++t)
        rhs.segment(t * r, r) -=
            w(i, t) * ghat.row(t).dot(v) * lhat.row(i).transpose();
    }

    const VectorXd qvec = cod.solve(rhs);
    XiCore core;
    core.q = Eigen::Map<const MatrixXd>(qvec.data(), r, m).transpose();
    core.p.resize(n, r);
    for (int i = 0; i < n; ++i) {
      VectorXd acc = r_i.row(i).transpose();
      for (int t = 0; t < m; ++t)
        acc -= w(i, t) * lhat.row(i).dot(core.q.row(t)) *
               ghat.row(t).transpose();
      core.p.row(i) = (m_i[i] * acc).transpose();
    }
    out.push_back(std::move(core));
  }
  return out;
}

// Alternating least squares fallback for the same projection.
std::vector<XiCore> xi_als(const MatrixXd& w,
                           const std::vector<const MatrixXd*>& targets,
                           const MatrixXd& lhat, const MatrixXd& ghat) {
  const int n = static_cast<int>(w.rows());
  const int m = static_cast<int>(w.cols());
  const int r = static_cast<int>(lhat.cols());

  std::vector<MatrixXd> m_i(n), p_t(m);
  for (int i = 0; i < n; ++i) {
    MatrixXd a = MatrixXd::Zero(r, r);
    for (int t = 0; t < m; ++t)
      a.noalias() += w(i, t) * ghat.row(t).transpose() * ghat.row(t);
    m_i[i] = pinv_psd(a);
  }
  for (int t = 0; t < m; ++t) {
    MatrixXd b = MatrixXd::Zero(r, r);
    for (int i = 0; i < n; ++i)
      b.noalias() += w(i, t) * lhat.row(i).transpose() * lhat.row(i);
    p_t[t] = pinv_psd(b);
  }

  std::vector<XiCore> out;
  for (const MatrixXd* xp : targets) {
    const MatrixXd& x = *xp;
    XiCore core;
    core.p = MatrixXd::Zero(n, r);
    core.q = MatrixXd::Zero(m, r);
    MatrixXd fit_prev = MatrixXd::Zero(n, m);
    for (int sweep = 0; sweep < 500; ++sweep) {
      for (int i = 0; i < n; ++i) {
        VectorXd acc = VectorXd::Zero(r);
        for (int t = 0; t < m; ++t)
          acc += w(i, t) * (x(i, t) - lhat.row(i).dot(core.q.row(t))) *
                 ghat.row(t).transpose();
        core.p.row(i) = (m_i[i] * acc).transpose();
      }
      for (int t = 0; t < m; ++t) {
        VectorXd acc = VectorXd::Zero(r);
        for (int i = 0; i < n; ++i)
          acc += w(i, t) * (x(i, t) - ghat.row(t).dot(core.p.row(i))) *
                 lhat.row(i).transpose();
        core.q.row(t) = (p_t[t] * acc).transpose();
      }
      const MatrixXd fit =
          core.p * ghat.transpose() + lhat * core.q.transpose();
      if ((fit - fit_prev).norm() <= 1e-12 * (1.0 + fit.norm())) break;
      fit_prev = fit;
    }
    out.push_back(std::move(core));
  }
  return out;
}

}  // namespace

std::pair<std::vector<MatrixXd>, std::vector<MatrixXd>> compute_xi(
    const PanelData& panel, Family family, const FactorParams& fitted,
    XiMethod method) {
  check_panel_shapes(panel);
  const int n = panel.n();
  const int t = panel.t();
  const int dx = panel.dx();
  const int r = fitted.rank();
  if (r < 1) throw ArgumentError("compute_xi requires rank >= 1");

  const MatrixXd index =
      index_matrix(panel, fitted.beta, fitted.lambda * fitted.gamma.transpose());
  MatrixXd d2;
  loglik_deriv_matrices(panel, family, index, nullptr, &d2, nullptr);
  const MatrixXd w = -d2;

  std::vector<MatrixXd> xi(dx), x_tilde(dx);
  if (dx == 0) return {xi, x_tilde};

  // Eliminate the larger side so the Schur system is as small as possible.
  const bool transpose = t > n;
  MatrixXd wt;
  std::vector<MatrixXd> xt;
  std::vector<const MatrixXd*> targets(dx);
  if (transpose) {
    wt = w.transpose();
    xt.reserve(dx);
    for (int d = 0; d < dx; ++d) xt.push_back(panel.x[d].transpose());
    for (int d = 0; d < dx; ++d) targets[d] = &xt[d];
  } else {
    for (int d = 0; d < dx; ++d) targets[d] = &panel.x[d];
  }
  const MatrixXd& lhat = transpose ? fitted.gamma : fitted.lambda;
  const MatrixXd& ghat = transpose ? fitted.lambda : fitted.gamma;
  const MatrixXd& ww = transpose ? wt : w;

  std::vector<XiCore> cores = method == XiMethod::Direct
                                  ? xi_direct(ww, targets, lhat, ghat)
                                  : xi_als(ww, targets, lhat, ghat);

  for (int d = 0; d < dx; ++d) {
    MatrixXd fit = cores[d].p * ghat.transpose() + lhat * cores[d].q.transpose();
    if (transpose) fit.transposeInPlace();
    xi[d] = std::move(fit);
    x_tilde[d] = panel.x[d] - xi[d];

    // The weighted residual must be orthogonal to the projection space;
    // a large violation signals a defective system.
    const MatrixXd wres = w.cwiseProduct(x_tilde[d]);
    const double scale =
        std::max({1.0, panel.x[d].norm(), fitted.lambda.norm(),
                  fitted.gamma.norm()});
    const double res_rows = (wres * fitted.gamma).norm();   // vs Lambda_d Gamma'
    const double res_cols = (wres.transpose() * fitted.lambda).norm();
    if (!(res_rows / scale < 1e-6) || !(res_cols / scale < 1e-6))
      throw DegeneracyError(
          "xi projection normal equations not satisfied for covariate " +
          std::to_string(d + 1) + " (block " +
          (res_rows >= res_cols ? std::string("lambda") : std::string("gamma")) +
          ")");
  }
  return {xi, x_tilde};
}

BiasComponents compute_bias_components(const PanelData& panel, Family family,
                                       const FactorParams& fitted,
                                       XiMethod method) {
  const int n = panel.n();
  const int t = panel.t();
  const int dx = panel.dx();
  const int r = fitted.rank();

  BiasComponents comp;
  auto [xi, x_tilde] = compute_xi(panel, family, fitted, method);
  comp.xi = std::move(xi);
  comp.x_tilde = std::move(x_tilde);

  const MatrixXd index =
      index_matrix(panel, fitted.beta, fitted.lambda * fitted.gamma.transpose());
  MatrixXd d1, d2, d3;
  loglik_deriv_matrices(panel, family, index, &d1, &d2, &d3);
  const MatrixXd w = -d2;

  // Per-cell inner factor l' l'' X~ + (1/2) l''' X~, stacked over d.
  std::vector<MatrixXd> inner(dx);
  for (int d = 0; d < dx; ++d)
    inner[d] = ((d1.array() * d2.array() + 0.5 * d3.array()) *
                comp.x_tilde[d].array())
                   .matrix();

  comp.b_hat = VectorXd::Zero(dx);
  comp.d_hat = VectorXd::Zero(dx);
  for (int i = 0; i < n; ++i) {
    MatrixXd a = MatrixXd::Zero(r, r);
    for (int tt = 0; tt < t; ++tt)
      a.noalias() += w(i, tt) * fitted.gamma.row(tt).transpose() *
                     fitted.gamma.row(tt);
    const MatrixXd m_i = pinv_psd(a);
    for (int tt = 0; tt < t; ++tt) {
      const double weight =
          fitted.gamma.row(tt) * m_i * fitted.gamma.row(tt).transpose();
      for (int d = 0; d < dx; ++d)
        comp.b_hat(d) += weight * inner[d](i, tt);
    }
  }
  comp.b_hat /= static_cast<double>(n);
  for (int tt = 0; tt < t; ++tt) {
    MatrixXd b = MatrixXd::Zero(r, r);
    for (int i = 0; i < n; ++i)
      b.noalias() += w(i, tt) * fitted.lambda.row(i).transpose() *
                     fitted.lambda.row(i);
    const MatrixXd p_t = pinv_psd(b);
    for (int i = 0; i < n; ++i) {
      const double weight =
          fitted.lambda.row(i) * p_t * fitted.lambda.row(i).transpose();
      for (int d = 0; d < dx; ++d)
        comp.d_hat(d) += weight * inner[d](i, tt);
    }
  }
  comp.d_hat /= static_cast<double>(t);

  comp.w_hat = MatrixXd::Zero(dx, dx);
  for (int d = 0; d < dx; ++d)
    for (int e = d; e < dx; ++e) {
      comp.w_hat(d, e) = (w.array() * comp.x_tilde[d].array() *
                          comp.x_tilde[e].array())
                             .sum() /
                         (static_cast<double>(n) * t);
      comp.w_hat(e, d) = comp.w_hat(d, e);
    }
  return comp;
}

namespace {

MatrixXd pd_inverse_or_throw(const MatrixXd& w_hat) {
  Eigen::SelfAdjointEigenSolver<MatrixXd> es(w_hat);
  if (es.eigenvalues().minCoeff() <= 0.0)
    throw InferenceError("W is not positive definite");
  return es.eigenvectors() *
         es.eigenvalues().cwiseInverse().asDiagonal() *
         es.eigenvectors().transpose();
}

}  // namespace

VectorXd analytic_bias_correct(const PanelData& panel, Family family,
                               const FactorParams& fitted,
                               const BiasComponents& components) {
  (void)family;
  const MatrixXd w_inv = pd_inverse_or_throw(components.w_hat);
  return fitted.beta - w_inv * components.b_hat / panel.t() -
         w_inv * components.d_hat / panel.n();
}

VectorXd standard_errors(const BiasComponents& components, int n, int t) {
  const MatrixXd w_inv = pd_inverse_or_throw(components.w_hat);
  return (w_inv.diagonal() / (static_cast<double>(n) * t)).cwiseSqrt();
}

VectorXd jackknife_combine(const VectorXd& beta_full, const VectorXd& beta_t1,
                           const VectorXd& beta_t2, const VectorXd& beta_n1,
                           const VectorXd& beta_n2) {
  return 3.0 * beta_full - 0.5 * (beta_t1 + beta_t2) -
         0.5 * (beta_n1 + beta_n2);
}

VectorXd jackknife_correct(const PanelData& panel, Family family, int r,
                           const VectorXd& beta_full,
                           const TwoStepOptions& options) {
  const int n = panel.n();
  const int t = panel.t();
  if (n < 4 || t < 4) throw ArgumentError("jackknife requires N, T >= 4");
  const int t_half = (t + 1) / 2;  // ceil(T/2)
  const int n_half = (n + 1) / 2;

  const PanelData halves[4] = {
      subpanel(panel, 0, n, 0, t_half), subpanel(panel, 0, n, t_half, t),
      subpanel(panel, 0, n_half, 0, t), subpanel(panel, n_half, n, 0, t)};
  static const char* names[4] = {"T1", "T2", "N1", "N2"};

  TwoStepOptions half_opts = options;
  half_opts.rank = r;             // inherit the rank
  half_opts.phi = std::nullopt;   // re-tune phi per half-panel

  VectorXd betas[4];
  std::string errors[4];
#pragma omp parallel for schedule(dynamic) num_threads(std::min(4, omp_get_max_threads()))
  for (int h = 0; h < 4; ++h) {
    try {
      const TwoStepFit fit = run_two_step(halves[h], family, half_opts);
      if (!fit.nnr.converged)
        errors[h] = "NNR stage did not converge";
      else if (!fit.local.converged)
        errors[h] = "local stage did not converge";
      else
        betas[h] = fit.local.params.beta;
    } catch (const std::exception& e) {
      errors[h] = e.what();
    }
  }

  std::vector<std::string> failed;
  for (int h = 0; h < 4; ++h)
    if (!errors[h].empty())
      failed.push_back(std::string(names[h]) + ": " + errors[h]);
  if (!failed.empty()) {
    std::string msg = "jackknife half-panel estimation failed:";
    for (const auto& f : failed) msg += "\n  " + f;
    throw JackknifeError(msg, failed);
  }
  return jackknife_combine(beta_full, betas[0], betas[1], betas[2], betas[3]);
}

}  // namespace ife
