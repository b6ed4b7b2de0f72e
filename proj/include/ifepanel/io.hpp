#pragma once

#include <optional>
#include <string>
#include <vector>

#include "ifepanel/montecarlo.hpp"
#include "ifepanel/types.hpp"

namespace ife {

// Thrown on malformed input files (bad header, unparsable numbers,
// incomplete unit/time grid).
class ParseError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

struct LoadedPanel {
  PanelData panel;
  std::vector<std::string> unit_tokens;  // index -> original token
  std::vector<std::string> time_tokens;
};

// Reads a long-format CSV `unit,time,y,x1,...,xd`. Units/periods are
// re-indexed in sorted token order; the grid must be complete.
LoadedPanel read_panel_csv(const std::string& path);

// Writes the same long format with round-trippable number formatting.
// Token vectors may be empty, in which case zero-padded indices are used.
void write_panel_csv(const PanelData& panel, const std::string& path,
                     const std::vector<std::string>& unit_tokens = {},
                     const std::vector<std::string>& time_tokens = {});

void write_matrix_csv(const MatrixXd& m, const std::string& path);

// User-facing estimation result.
struct EstimateReport {
  VectorXd beta;
  std::optional<VectorXd> beta_bc_analytic;
  std::optional<VectorXd> beta_bc_jackknife;
  std::optional<VectorXd> se;
  int r_hat = 0;
  std::string rank_source;
  double phi_hat = 0.0;
  double phi_tilde = 0.0;
  MatrixXd w_hat;
  int iters_nnr = 0;
  int iters_local = 0;
  double objective = 0.0;
  bool converged = false;
  std::optional<double> convexity_probe_min;
  std::string family;
  int n = 0;
  int t = 0;
  int threads = 1;
  std::vector<std::string> unit_tokens;
  std::vector<std::string> time_tokens;
  std::vector<std::string> warnings;
};

void write_report_json(const EstimateReport& report, const std::string& path);

// Monte Carlo outputs: the bias/std table in the paper's column layout
// (POOL..FER_J plus R_bar, cells in 1e-2 units) and the raw draws.
void write_mc_table_csv(const McResult& result, const std::string& path);
void write_mc_raw_json(const McResult& result, const std::string& path);

}  // namespace ife
