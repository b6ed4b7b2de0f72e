#include "ifepanel/objective.hpp"

#include <cmath>
#include <cstdint>
#include <string>

namespace ife {

namespace {

// Row-level parallelism only pays off beyond this many cells.
constexpr std::int64_t kParallelCells = 1 << 14;

void throw_nonfinite(int i, int t) {
  throw NumericError("non-finite index at (i=" + std::to_string(i) +
                     ", t=" + std::to_string(t) + ")");
}

// Scans for non-finite entries and throws naming the first offender
// in row-major order.
void check_index_finite(const MatrixXd& index) {
  if (index.allFinite()) return;
  for (int i = 0; i < index.rows(); ++i)
    for (int t = 0; t < index.cols(); ++t)
      if (!std::isfinite(index(i, t))) throw_nonfinite(i, t);
}

// Outcomes are validated up front so no exception can escape the
// parallel likelihood loops below.
void check_outcomes(const PanelData& panel, Family family) {
  for (int i = 0; i < panel.n(); ++i)
    for (int t = 0; t < panel.t(); ++t) check_outcome(family, panel.y(i, t));
}

}  // namespace

void check_panel_shapes(const PanelData& panel) {
  const int n = panel.n();
  const int t = panel.t();
  if (n < 1 || t < 1) throw ArgumentError("panel must be non-empty");
  for (const auto& xd : panel.x)
    if (xd.rows() != n || xd.cols() != t)
      throw ArgumentError("covariate matrix dimensions do not match outcomes");
}

MatrixXd index_matrix(const PanelData& panel, const VectorXd& beta,
                      const MatrixXd& theta) {
  if (beta.size() != panel.dx())
    throw ArgumentError("beta length does not match number of covariates");
  if (theta.rows() != panel.n() || theta.cols() != panel.t())
    throw ArgumentError("theta dimensions do not match panel");
  MatrixXd index = theta;
  for (int d = 0; d < panel.dx(); ++d) index.noalias() += beta(d) * panel.x[d];
  return index;
}

void eval_objective_score(const PanelData& panel, Family family,
                          const MatrixXd& index, double* objective,
                          MatrixXd* score) {
  const int n = panel.n();
  const int t = panel.t();
  check_index_finite(index);
  check_outcomes(panel, family);
  if (score) score->resize(n, t);

  VectorXd row_sum = VectorXd::Zero(n);
  const bool need_obj = objective != nullptr;
#pragma omp parallel for schedule(static) \
    if (static_cast<std::int64_t>(n) * t >= kParallelCells)
  for (int i = 0; i < n; ++i) {
    double acc = 0.0;
    for (int tt = 0; tt < t; ++tt) {
      const double y = panel.y(i, tt);
      const double z = index(i, tt);
      if (need_obj) acc += loglik(family, y, z);
      if (score) (*score)(i, tt) = loglik_derivs(family, y, z).d1;
    }
    row_sum(i) = acc;
  }
  if (need_obj) {
    double total = 0.0;
    for (int i = 0; i < n; ++i) total += row_sum(i);
    *objective = -total / (static_cast<double>(n) * t);
  }
}

double objective_from_index(const PanelData& panel, Family family,
                            const MatrixXd& index) {
  double obj = 0.0;
  eval_objective_score(panel, family, index, &obj, nullptr);
  return obj;
}

MatrixXd score_from_index(const PanelData& panel, Family family,
                          const MatrixXd& index) {
  MatrixXd score;
  eval_objective_score(panel, family, index, nullptr, &score);
  return score;
}

void loglik_deriv_matrices(const PanelData& panel, Family family,
                           const MatrixXd& index, MatrixXd* d1, MatrixXd* d2,
                           MatrixXd* d3) {
  const int n = panel.n();
  const int t = panel.t();
  check_index_finite(index);
  check_outcomes(panel, family);
  if (d1) d1->resize(n, t);
  if (d2) d2->resize(n, t);
  if (d3) d3->resize(n, t);
#pragma omp parallel for schedule(static) \
    if (static_cast<std::int64_t>(n) * t >= kParallelCells)
  for (int i = 0; i < n; ++i) {
    for (int tt = 0; tt < t; ++tt) {
      const LoglikDerivs d = loglik_derivs(family, panel.y(i, tt), index(i, tt));
      if (d1) (*d1)(i, tt) = d.d1;
      if (d2) (*d2)(i, tt) = d.d2;
      if (d3) (*d3)(i, tt) = d.d3;
    }
  }
}

double objective_theta(const PanelData& panel, Family family,
                       const VectorXd& beta, const MatrixXd& theta) {
  return objective_from_index(panel, family, index_matrix(panel, beta, theta));
}

double objective_factors(const PanelData& panel, Family family,
                         const FactorParams& params) {
  // Materialize Lambda*Gamma' so this agrees with objective_theta exactly.
  return objective_theta(panel, family, params.beta,
                         params.lambda * params.gamma.transpose());
}

VectorXd grad_beta_from_score(const PanelData& panel, const MatrixXd& score) {
  const int n = panel.n();
  const int t = panel.t();
  const int dx = panel.dx();
  const double scale = -1.0 / (static_cast<double>(n) * t);
  VectorXd g = VectorXd::Zero(dx);
  for (int d = 0; d < dx; ++d) {
    const MatrixXd& xd = panel.x[d];
    VectorXd row_sum = VectorXd::Zero(n);
#pragma omp parallel for schedule(static) \
    if (static_cast<std::int64_t>(n) * t >= kParallelCells)
    for (int i = 0; i < n; ++i) {
      double acc = 0.0;
      for (int tt = 0; tt < t; ++tt) acc += score(i, tt) * xd(i, tt);
      row_sum(i) = acc;
    }
    double total = 0.0;
    for (int i = 0; i < n; ++i) total += row_sum(i);
    g(d) = scale * total;
  }
  return g;
}

MatrixXd grad_lambda_from_score(const MatrixXd& score, const MatrixXd& gamma) {
  const int n = static_cast<int>(score.rows());
  const int t = static_cast<int>(score.cols());
  const int r = static_cast<int>(gamma.cols());
  const double scale = -1.0 / (static_cast<double>(n) * t);
  MatrixXd g = MatrixXd::Zero(n, r);
#pragma omp parallel for schedule(static) \
    if (static_cast<std::int64_t>(n) * t >= kParallelCells)
  for (int i = 0; i < n; ++i) {
    for (int tt = 0; tt < t; ++tt) {
      const double s = score(i, tt);
      for (int k = 0; k < r; ++k) g(i, k) += s * gamma(tt, k);
    }
    g.row(i) *= scale;
  }
  return g;
}

MatrixXd grad_gamma_from_score(const MatrixXd& score, const MatrixXd& lambda) {
  const int n = static_cast<int>(score.rows());
  const int t = static_cast<int>(score.cols());
  const int r = static_cast<int>(lambda.cols());
  const double scale = -1.0 / (static_cast<double>(n) * t);
  MatrixXd g = MatrixXd::Zero(t, r);
#pragma omp parallel for schedule(static) \
    if (static_cast<std::int64_t>(n) * t >= kParallelCells)
  for (int tt = 0; tt < t; ++tt) {
    for (int i = 0; i < n; ++i) {
      const double s = score(i, tt);
      for (int k = 0; k < r; ++k) g(tt, k) += s * lambda(i, k);
    }
    g.row(tt) *= scale;
  }
  return g;
}

VectorXd grad_beta(const PanelData& panel, Family family, const VectorXd& beta,
                   const MatrixXd& theta) {
  const MatrixXd score =
      score_from_index(panel, family, index_matrix(panel, beta, theta));
  return grad_beta_from_score(panel, score);
}

MatrixXd grad_theta(const PanelData& panel, Family family, const VectorXd& beta,
                    const MatrixXd& theta) {
  const MatrixXd score =
      score_from_index(panel, family, index_matrix(panel, beta, theta));
  return score * (-1.0 / (static_cast<double>(panel.n()) * panel.t()));
}

MatrixXd grad_lambda(const PanelData& panel, Family family,
                     const FactorParams& params) {
  const MatrixXd score = score_from_index(
      panel, family,
      index_matrix(panel, params.beta,
                   params.lambda * params.gamma.transpose()));
  return grad_lambda_from_score(score, params.gamma);
}

MatrixXd grad_gamma(const PanelData& panel, Family family,
                    const FactorParams& params) {
  const MatrixXd score = score_from_index(
      panel, family,
      index_matrix(panel, params.beta,
                   params.lambda * params.gamma.transpose()));
  return grad_gamma_from_score(score, params.lambda);
}

PanelData subpanel(const PanelData& panel, int i0, int i1, int t0, int t1) {
  if (i0 < 0 || t0 < 0 || i1 > panel.n() || t1 > panel.t() || i0 >= i1 ||
      t0 >= t1)
    throw ArgumentError("invalid sub-panel range");
  PanelData sub;
  sub.y = panel.y.block(i0, t0, i1 - i0, t1 - t0);
  sub.x.reserve(panel.x.size());
  for (const auto& xd : panel.x)
    sub.x.push_back(xd.block(i0, t0, i1 - i0, t1 - t0));
  return sub;
}

namespace serial {

double objective_from_index(const PanelData& panel, Family family,
                            const MatrixXd& index) {
  double total = 0.0;
  for (int i = 0; i < panel.n(); ++i) {
    double acc = 0.0;
    for (int t = 0; t < panel.t(); ++t) {
      if (!std::isfinite(index(i, t))) throw_nonfinite(i, t);
      acc += loglik(family, panel.y(i, t), index(i, t));
    }
    total += acc;
  }
  return -total / (static_cast<double>(panel.n()) * panel.t());
}

MatrixXd score_from_index(const PanelData& panel, Family family,
                          const MatrixXd& index) {
  MatrixXd score(panel.n(), panel.t());
  for (int i = 0; i < panel.n(); ++i)
    for (int t = 0; t < panel.t(); ++t) {
      if (!std::isfinite(index(i, t))) throw_nonfinite(i, t);
      score(i, t) = loglik_derivs(family, panel.y(i, t), index(i, t)).d1;
    }
  return score;
}

VectorXd grad_beta(const PanelData& panel, Family family, const VectorXd& beta,
                   const MatrixXd& theta) {
  const MatrixXd index = index_matrix(panel, beta, theta);
  const MatrixXd score = serial::score_from_index(panel, family, index);
  const double scale = -1.0 / (static_cast<double>(panel.n()) * panel.t());
  VectorXd g = VectorXd::Zero(panel.dx());
  for (int d = 0; d < panel.dx(); ++d) {
    double total = 0.0;
    for (int i = 0; i < panel.n(); ++i) {
      double acc = 0.0;
      for (int t = 0; t < panel.t(); ++t) acc += score(i, t) * panel.x[d](i, t);
      total += acc;
    }
    g(d) = scale * total;
  }
  return g;
}

MatrixXd grad_theta(const PanelData& panel, Family family, const VectorXd& beta,
                    const MatrixXd& theta) {
  const MatrixXd index = index_matrix(panel, beta, theta);
  const double scale = -1.0 / (static_cast<double>(panel.n()) * panel.t());
  MatrixXd g(panel.n(), panel.t());
  for (int i = 0; i < panel.n(); ++i)
    for (int t = 0; t < panel.t(); ++t)
      g(i, t) =
          scale * loglik_derivs(family, panel.y(i, t), index(i, t)).d1;
  return g;
}

MatrixXd grad_lambda(const PanelData& panel, Family family,
                     const FactorParams& params) {
  const MatrixXd index = index_matrix(
      panel, params.beta, params.lambda * params.gamma.transpose());
  const MatrixXd score = serial::score_from_index(panel, family, index);
  const double scale = -1.0 / (static_cast<double>(panel.n()) * panel.t());
  MatrixXd g = MatrixXd::Zero(panel.n(), params.rank());
  for (int i = 0; i < panel.n(); ++i) {
    for (int t = 0; t < panel.t(); ++t)
      for (int k = 0; k < params.rank(); ++k)
        g(i, k) += score(i, t) * params.gamma(t, k);
    g.row(i) *= scale;
  }
  return g;
}

MatrixXd grad_gamma(const PanelData& panel, Family family,
                    const FactorParams& params) {
  const MatrixXd index = index_matrix(
      panel, params.beta, params.lambda * params.gamma.transpose());
  const MatrixXd score = serial::score_from_index(panel, family, index);
  const double scale = -1.0 / (static_cast<double>(panel.n()) * panel.t());
  MatrixXd g = MatrixXd::Zero(panel.t(), params.rank());
  for (int t = 0; t < panel.t(); ++t) {
    for (int i = 0; i < panel.n(); ++i)
      for (int k = 0; k < params.rank(); ++k)
        g(t, k) += score(i, t) * params.lambda(i, k);
    g.row(t) *= scale;
  }
  return g;
}

}  // namespace serial

}  // namespace ife
