#pragma once

#include <Eigen/Dense>
#include <stdexcept>
#include <string>
#include <vector>

namespace ife {

using Eigen::MatrixXd;
using Eigen::VectorXd;

// Thrown when an input violates an operation's preconditions.
class ArgumentError : public std::invalid_argument {
 public:
  using std::invalid_argument::invalid_argument;
};

// Thrown when a computation produces or encounters non-finite values,
// or when a dense factorization fails.
class NumericError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

// Thrown when factors are too close to rank-deficient to normalize.
class DegeneracyError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

// Thrown when all singular values are numerically zero and no rank
// can be selected.
class RankSelectionError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

// Thrown when backtracking cannot find an acceptable step above the
// step-size floor.
class StallError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

// Thrown when the tuning pilot fit fails.
class TuningError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

// Thrown when the curvature matrix W is not positive definite.
class InferenceError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

// Thrown when one or more jackknife half-panels fail to estimate.
class JackknifeError : public std::runtime_error {
 public:
  JackknifeError(const std::string& msg, std::vector<std::string> halves)
      : std::runtime_error(msg), failed_halves(std::move(halves)) {}
  std::vector<std::string> failed_halves;
};

// A balanced panel: an N x T outcome matrix plus d_X covariate matrices
// of the same shape. Rows index units, columns index periods.
struct PanelData {
  MatrixXd y;
  std::vector<MatrixXd> x;

  int n() const { return static_cast<int>(y.rows()); }
  int t() const { return static_cast<int>(y.cols()); }
  int dx() const { return static_cast<int>(x.size()); }
};

// Common coefficients plus loadings/factors. lambda is N x R (rows are
// unit loadings), gamma is T x R (rows are period factors).
struct FactorParams {
  VectorXd beta;
  MatrixXd lambda;
  MatrixXd gamma;

  int rank() const { return static_cast<int>(lambda.cols()); }
};

// Checks matrix shapes. Throws ArgumentError on mismatch.
void check_panel_shapes(const PanelData& panel);

// Builds a contiguous sub-panel over units [i0, i1) and periods [t0, t1).
PanelData subpanel(const PanelData& panel, int i0, int i1, int t0, int t1);

}  // namespace ife
