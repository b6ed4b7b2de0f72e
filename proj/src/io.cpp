#include "ifepanel/io.hpp"

#include <cstdio>
#include <fstream>
#include <map>
#include <sstream>

#include <nlohmann/json.hpp>

namespace ife {

namespace {

using nlohmann::json;
using nlohmann::ordered_json;

std::string format_double(double v) {
  char buf[64];
  std::snprintf(buf, sizeof(buf), "%.17g", v);
  return buf;
}

std::vector<std::string> split_csv_line(const std::string& line) {
  std::vector<std::string> fields;
  std::string field;
  std::stringstream ss(line);
  while (std::getline(ss, field, ',')) fields.push_back(field);
  if (!line.empty() && line.back() == ',') fields.push_back("");
  return fields;
}

double parse_double(const std::string& s, int line_no) {
  try {
    size_t pos = 0;
    const double v = std::stod(s, &pos);
    if (pos != s.size()) throw std::invalid_argument(s);
    return v;
  } catch (const std::exception&) {
    throw ParseError("line " + std::to_string(line_no) +
                     ": cannot parse number '" + s + "'");
  }
}

json vector_to_json(const VectorXd& v) {
  json arr = json::array();
  for (int i = 0; i < v.size(); ++i) arr.push_back(v(i));
  return arr;
}

json matrix_to_json(const MatrixXd& m) {
  json rows = json::array();
  for (int i = 0; i < m.rows(); ++i) {
    json row = json::array();
    for (int j = 0; j < m.cols(); ++j) row.push_back(m(i, j));
    rows.push_back(row);
  }
  return rows;
}

}  // namespace

LoadedPanel read_panel_csv(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw ParseError("cannot open input file: " + path);
  std::string line;
  if (!std::getline(in, line)) throw ParseError("empty input file: " + path);
  if (!line.empty() && line.back() == '\r') line.pop_back();
  const std::vector<std::string> header = split_csv_line(line);
  if (header.size() < 3 || header[0] != "unit" || header[1] != "time" ||
      header[2] != "y")
    throw ParseError("header must be 'unit,time,y,x1,...'");
  const int dx = static_cast<int>(header.size()) - 3;
  for (int d = 0; d < dx; ++d)
    if (header[3 + d] != "x" + std::to_string(d + 1))
      throw ParseError("covariate columns must be named x1..x" +
                       std::to_string(dx));

  struct Row {
    std::string unit, time;
    std::vector<double> values;
  };
  std::vector<Row> rows;
  std::map<std::string, int> units, times;
  int line_no = 1;
  while (std::getline(in, line)) {
    ++line_no;
    if (!line.empty() && line.back() == '\r') line.pop_back();
    if (line.empty()) continue;
    const std::vector<std::string> fields = split_csv_line(line);
    if (static_cast<int>(fields.size()) != 3 + dx)
      throw ParseError("line " + std::to_string(line_no) + ": expected " +
                       std::to_string(3 + dx) + " fields, got " +
                       std::to_string(fields.size()));
    Row row;
    row.unit = fields[0];
    row.time = fields[1];
    row.values.reserve(1 + dx);
    for (int k = 2; k < 3 + dx; ++k)
      row.values.push_back(parse_double(fields[k], line_no));
    units.emplace(row.unit, 0);
    times.emplace(row.time, 0);
    rows.push_back(std::move(row));
  }
  if (rows.empty()) throw ParseError("no data rows in " + path);

  LoadedPanel loaded;
  int idx = 0;
  for (auto& [token, id] : units) {
    id = idx++;
    loaded.unit_tokens.push_back(token);
  }
  idx = 0;
  for (auto& [token, id] : times) {
    id = idx++;
    loaded.time_tokens.push_back(token);
  }
  const int n = static_cast<int>(units.size());
  const int t = static_cast<int>(times.size());
  loaded.panel.y.setConstant(n, t, std::nan(""));
  loaded.panel.x.assign(dx, MatrixXd::Constant(n, t, std::nan("")));
  Eigen::MatrixXi seen = Eigen::MatrixXi::Zero(n, t);
  for (const Row& row : rows) {
    const int i = units[row.unit];
    const int tt = times[row.time];
    if (seen(i, tt)++)
      throw ParseError("duplicate cell (unit=" + row.unit +
                       ", time=" + row.time + ")");
    loaded.panel.y(i, tt) = row.values[0];
    for (int d = 0; d < dx; ++d) loaded.panel.x[d](i, tt) = row.values[1 + d];
  }
  for (int i = 0; i < n; ++i)
    for (int tt = 0; tt < t; ++tt)
      if (!seen(i, tt))
        throw ParseError("incomplete panel: missing cell (unit=" +
                         loaded.unit_tokens[i] + ", time=" +
                         loaded.time_tokens[tt] + ")");
  return loaded;
}

void write_panel_csv(const PanelData& panel, const std::string& path,
                     const std::vector<std::string>& unit_tokens,
                     const std::vector<std::string>& time_tokens) {
  std::ofstream out(path);
  if (!out) throw ParseError("cannot open output file: " + path);
  out << "unit,time,y";
  for (int d = 0; d < panel.dx(); ++d) out << ",x" << d + 1;
  out << "\n";
  char token[32];
  for (int i = 0; i < panel.n(); ++i) {
    for (int tt = 0; tt < panel.t(); ++tt) {
      if (i < static_cast<int>(unit_tokens.size())) {
        out << unit_tokens[i];
      } else {
        std::snprintf(token, sizeof(token), "u%06d", i);
        out << token;
      }
      out << ',';
      if (tt < static_cast<int>(time_tokens.size())) {
        out << time_tokens[tt];
      } else {
        std::snprintf(token, sizeof(token), "t%06d", tt);
        out << token;
      }
      out << ',' << format_double(panel.y(i, tt));
      for (int d = 0; d < panel.dx(); ++d)
        out << ',' << format_double(panel.x[d](i, tt));
      out << '\n';
    }
  }
}

void write_matrix_csv(const MatrixXd& m, const std::string& path) {
  std::ofstream out(path);
  if (!out) throw ParseError("cannot open output file: " + path);
  for (int i = 0; i < m.rows(); ++i) {
    for (int j = 0; j < m.cols(); ++j) {
      if (j) out << ',';
      out << format_double(m(i, j));
    }
    out << '\n';
  }
}

void write_report_json(const EstimateReport& report, const std::string& path) {
  ordered_json j;
  j["beta"] = vector_to_json(report.beta);
  j["beta_bc_analytic"] = report.beta_bc_analytic
                              ? vector_to_json(*report.beta_bc_analytic)
                              : json(nullptr);
  j["beta_bc_jackknife"] = report.beta_bc_jackknife
                               ? vector_to_json(*report.beta_bc_jackknife)
                               : json(nullptr);
  j["se"] = report.se ? vector_to_json(*report.se) : json(nullptr);
  j["r_hat"] = report.r_hat;
  j["rank_source"] = report.rank_source;
  j["phi_hat"] = report.phi_hat;
  j["phi_tilde"] = report.phi_tilde;
  j["w_hat"] = matrix_to_json(report.w_hat);
  ordered_json diag;
  diag["iters_nnr"] = report.iters_nnr;
  diag["iters_local"] = report.iters_local;
  diag["objective"] = report.objective;
  diag["converged"] = report.converged;
  diag["convexity_probe_min"] = report.convexity_probe_min
                                    ? json(*report.convexity_probe_min)
                                    : json(nullptr);
  diag["threads"] = report.threads;
  j["diagnostics"] = diag;
  j["family"] = report.family;
  j["n"] = report.n;
  j["t"] = report.t;
  j["unit_map"] = report.unit_tokens;
  j["time_map"] = report.time_tokens;
  j["warnings"] = report.warnings;
  std::ofstream out(path);
  if (!out) throw ParseError("cannot open output file: " + path);
  out << j.dump(2) << "\n";
}

void write_mc_table_csv(const McResult& result, const std::string& path) {
  std::ofstream out(path);
  if (!out) throw ParseError("cannot open output file: " + path);
  const std::set<Estimator> wanted = result.config.effective_estimators();
  const VectorXd beta_true = result.config.effective_beta_true();
  const int dim = static_cast<int>(beta_true.size());

  out << "stat,coef";
  for (Estimator est : all_estimators()) out << ',' << estimator_name(est);
  out << ",R_bar\n";

  char cell[64];
  auto stat_cell = [&](Estimator est, bool std_row, int d) -> std::string {
    if (!wanted.count(est)) return "";
    auto it = result.stats.find(est);
    if (it == result.stats.end()) return "";
    if (std_row && !it->second.std_defined) return "nan";
    const double v =
        100.0 * (std_row ? it->second.std_dev(d) : it->second.bias(d));
    std::snprintf(cell, sizeof(cell), "%.6f", v);
    return cell;
  };

  for (int d = 0; d < dim; ++d) {
    out << "bias_x100,beta" << d + 1;
    for (Estimator est : all_estimators()) out << ',' << stat_cell(est, false, d);
    if (d == 0) {
      std::snprintf(cell, sizeof(cell), "%.6f", result.r_bar);
      out << ',' << cell << "\n";
    } else {
      out << ",\n";
    }
    out << "std_x100,beta" << d + 1;
    for (Estimator est : all_estimators()) out << ',' << stat_cell(est, true, d);
    out << ",\n";
  }
  out << "n_success,";
  for (Estimator est : all_estimators()) {
    out << ',';
    if (wanted.count(est)) out << result.n_success;
  }
  out << ",\n";
}

void write_mc_raw_json(const McResult& result, const std::string& path) {
  ordered_json j;
  ordered_json cfg;
  cfg["dgp"] = dgp_name(result.config.dgp);
  cfg["n"] = result.config.n;
  cfg["t"] = result.config.t;
  cfg["replications"] = result.config.replications;
  cfg["seed"] = result.config.seed;
  cfg["alpha"] = result.config.alpha;
  cfg["r_max"] = result.config.r_max;
  cfg["true_r"] = result.config.true_r;
  cfg["beta_true"] = vector_to_json(result.config.effective_beta_true());
  json ests = json::array();
  for (Estimator est : all_estimators())
    if (result.config.effective_estimators().count(est))
      ests.push_back(estimator_name(est));
  cfg["estimators"] = ests;
  j["config"] = cfg;
  j["r_bar"] = result.r_bar;
  j["n_success"] = result.n_success;
  j["warnings"] = result.warnings;

  ordered_json reps = json::array();
  for (const McRepRecord& rec : result.reps) {
    ordered_json r;
    r["rep"] = rec.rep;
    r["seed"] = rec.seed;
    r["r_hat"] = rec.r_hat;
    r["failed_stage"] =
        rec.failed_stage.empty() ? json(nullptr) : json(rec.failed_stage);
    ordered_json est;
    for (const auto& [e, v] : rec.estimates)
      est[estimator_name(e)] = vector_to_json(v);
    r["estimates"] = est;
    reps.push_back(std::move(r));
  }
  j["replications"] = reps;
  std::ofstream out(path);
  if (!out) throw ParseError("cannot open output file: " + path);
  out << j.dump(2) << "\n";
}

}  // namespace ife
