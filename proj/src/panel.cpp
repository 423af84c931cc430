#include "panelctrl/panel.hpp"

#include <algorithm>
#include <cmath>
#include <istream>
#include <limits>
#include <map>
#include <ostream>
#include <string>
#include <unordered_map>

#include "panelctrl/error.hpp"
#include "panelctrl/io.hpp"

namespace panelctrl {

bool times_numeric(std::span<const std::string> labels) {
  double tmp = 0.0;
  return std::all_of(labels.begin(), labels.end(),
                     [&](const std::string& s) { return io::parse_double(s, tmp); });
}

bool time_less(const std::string& a, const std::string& b, bool numeric) {
  if (numeric) {
    double x = 0.0, y = 0.0;
    if (io::parse_double(a, x) && io::parse_double(b, y)) return x < y;
  }
  return a < b;
}

std::vector<Eigen::Index> PanelData::control_indices() const {
  std::vector<Eigen::Index> idx;
  idx.reserve(static_cast<std::size_t>(n_controls()));
  for (Eigen::Index i = 0; i < n_units(); ++i)
    if (i != treated_index) idx.push_back(i);
  return idx;
}

std::vector<std::string> PanelData::control_ids() const {
  std::vector<std::string> ids;
  for (auto i : control_indices()) ids.push_back(unit_ids[static_cast<std::size_t>(i)]);
  return ids;
}

void PanelData::validate() const {
  const auto n = n_units();
  const auto t = n_periods();
  if (static_cast<Eigen::Index>(unit_ids.size()) != n ||
      static_cast<Eigen::Index>(time_ids.size()) != t)
    throw Error(ErrorCode::invalid_argument, "panel labels do not match outcome matrix shape");
  if (n < 3)
    throw Error(ErrorCode::invalid_argument, "panel needs a treated unit and at least 2 donors");
  if (treated_index < 0 || treated_index >= n)
    throw Error(ErrorCode::unknown_treated, "treated index out of range");
  if (t0 < 2)
    throw Error(ErrorCode::too_few_periods,
                "need at least 2 pre-treatment periods, got " + std::to_string(t0));
  if (t0 >= t)
    throw Error(ErrorCode::treatment_time, "no post-treatment period (T0 >= T)");
  if (!outcomes.allFinite())
    throw Error(ErrorCode::missing_cell, "outcome matrix has missing or non-finite values");
  const bool numeric = times_numeric(time_ids);
  for (std::size_t j = 1; j < time_ids.size(); ++j)
    if (!time_less(time_ids[j - 1], time_ids[j], numeric))
      throw Error(ErrorCode::invalid_argument,
                  "time ids not strictly increasing at '" + time_ids[j] + "'");
  if (covariates.size() > 0) {
    if (covariates.rows() != n ||
        covariates.cols() != static_cast<Eigen::Index>(covariate_names.size()))
      throw Error(ErrorCode::invalid_argument, "covariate table shape mismatch");
    if (!covariates.allFinite())
      throw Error(ErrorCode::missing_cell, "covariate table has non-finite values");
  }
}

PanelData make_panel(Eigen::MatrixXd outcomes, std::vector<std::string> unit_ids,
                     std::vector<std::string> time_ids, Eigen::Index treated_index,
                     Eigen::Index t0) {
  PanelData p;
  p.outcomes = std::move(outcomes);
  p.unit_ids = std::move(unit_ids);
  p.time_ids = std::move(time_ids);
  p.treated_index = treated_index;
  p.t0 = t0;
  p.validate();
  return p;
}

PanelData load_panel(std::istream& in, const std::string& treated_label,
                     const std::string& treatment_time,
                     std::span<const std::string> covariate_columns) {
  std::string line;
  std::size_t line_no = 0;
  std::vector<std::string> header;
  while (std::getline(in, line)) {
    ++line_no;
    if (line.find_first_not_of(" \t\r") == std::string::npos) continue;
    header = io::split_csv_line(line);
    break;
  }
  if (header.empty()) throw Error(ErrorCode::parse, "empty input: missing header");

  auto column = [&](const std::string& name) -> std::size_t {
    auto it = std::find(header.begin(), header.end(), name);
    if (it == header.end()) throw Error(ErrorCode::parse, "missing column '" + name + "'");
    return static_cast<std::size_t>(it - header.begin());
  };
  const std::size_t c_unit = column("unit");
  const std::size_t c_time = column("time");
  const std::size_t c_out = column("outcome");
  std::vector<std::size_t> c_cov;
  for (const auto& name : covariate_columns) c_cov.push_back(column(name));

  struct Row {
    std::string unit, time;
    double y;
    std::vector<double> cov;  // NaN when blank
  };
  std::vector<Row> rows;
  std::vector<std::string> units;
  std::unordered_map<std::string, std::size_t> unit_pos;
  std::vector<std::string> times;
  std::unordered_map<std::string, bool> seen_time;

  while (std::getline(in, line)) {
    ++line_no;
    if (line.find_first_not_of(" \t\r") == std::string::npos) continue;
    auto f = io::split_csv_line(line);
    if (f.size() != header.size())
      throw Error(ErrorCode::parse, "line " + std::to_string(line_no) + ": expected " +
                                        std::to_string(header.size()) + " fields, got " +
                                        std::to_string(f.size()));
    Row r;
    r.unit = f[c_unit];
    r.time = f[c_time];
    if (r.unit.empty() || r.time.empty())
      throw Error(ErrorCode::parse, "line " + std::to_string(line_no) + ": empty unit or time");
    if (f[c_out].empty() || f[c_out] == "NA")
      throw Error(ErrorCode::missing_cell, "missing outcome for unit '" + r.unit +
                                               "' at time '" + r.time + "'");
    if (!io::parse_double(f[c_out], r.y))
      throw Error(ErrorCode::parse, "line " + std::to_string(line_no) +
                                        ": outcome is not a finite number: '" + f[c_out] + "'");
    for (auto c : c_cov) {
      double v = 0.0;
      if (f[c].empty() || f[c] == "NA") {
        v = std::numeric_limits<double>::quiet_NaN();
      } else if (!io::parse_double(f[c], v)) {
        throw Error(ErrorCode::parse, "line " + std::to_string(line_no) +
                                          ": covariate '" + header[c] + "' is not numeric");
      }
      r.cov.push_back(v);
    }
    if (unit_pos.emplace(r.unit, units.size()).second) units.push_back(r.unit);
    if (seen_time.emplace(r.time, true).second) times.push_back(r.time);
    rows.push_back(std::move(r));
  }
  if (rows.empty()) throw Error(ErrorCode::parse, "no data rows");

  const bool numeric = times_numeric(times);
  std::sort(times.begin(), times.end(),
            [&](const std::string& a, const std::string& b) { return time_less(a, b, numeric); });
  std::unordered_map<std::string, std::size_t> time_pos;
  for (std::size_t j = 0; j < times.size(); ++j) time_pos.emplace(times[j], j);

  auto treated_it = unit_pos.find(treated_label);
  if (treated_it == unit_pos.end())
    throw Error(ErrorCode::unknown_treated, "treated unit '" + treated_label + "' not in input");

  // T0 = number of periods strictly before the treatment time.
  bool tt_numeric = numeric;
  if (numeric) {
    double tmp = 0.0;
    tt_numeric = io::parse_double(treatment_time, tmp);
  }
  Eigen::Index t0 = 0;
  for (const auto& t : times)
    if (time_less(t, treatment_time, numeric && tt_numeric)) ++t0;
  if (t0 == 0)
    throw Error(ErrorCode::treatment_time, "treatment time '" + treatment_time +
                                               "' is at or before the first period '" +
                                               times.front() + "'");
  if (t0 == static_cast<Eigen::Index>(times.size()))
    throw Error(ErrorCode::treatment_time, "treatment time '" + treatment_time +
                                               "' is after the last period '" + times.back() + "'");

  const auto n = static_cast<Eigen::Index>(units.size());
  const auto t = static_cast<Eigen::Index>(times.size());
  const auto k = static_cast<Eigen::Index>(c_cov.size());
  Eigen::MatrixXd y = Eigen::MatrixXd::Constant(n, t, std::numeric_limits<double>::quiet_NaN());
  Eigen::MatrixXd cov_sum = Eigen::MatrixXd::Zero(n, k);
  Eigen::MatrixXd cov_cnt = Eigen::MatrixXd::Zero(n, k);
  for (const auto& r : rows) {
    const auto i = static_cast<Eigen::Index>(unit_pos.at(r.unit));
    const auto j = static_cast<Eigen::Index>(time_pos.at(r.time));
    if (!std::isnan(y(i, j)))
      throw Error(ErrorCode::duplicate_cell,
                  "duplicate row for unit '" + r.unit + "' at time '" + r.time + "'");
    y(i, j) = r.y;
    if (j < t0) {
      for (Eigen::Index c = 0; c < k; ++c) {
        const double v = r.cov[static_cast<std::size_t>(c)];
        if (!std::isnan(v)) {
          cov_sum(i, c) += v;
          cov_cnt(i, c) += 1.0;
        }
      }
    }
  }
  for (Eigen::Index i = 0; i < n; ++i)
    for (Eigen::Index j = 0; j < t; ++j)
      if (std::isnan(y(i, j)))
        throw Error(ErrorCode::missing_cell,
                    "missing cell for unit '" + units[static_cast<std::size_t>(i)] +
                        "' at time '" + times[static_cast<std::size_t>(j)] + "'");

  PanelData p;
  p.outcomes = std::move(y);
  p.unit_ids = std::move(units);
  p.time_ids = std::move(times);
  p.treated_index = static_cast<Eigen::Index>(treated_it->second);
  p.t0 = t0;
  if (k > 0) {
    for (Eigen::Index i = 0; i < n; ++i)
      for (Eigen::Index c = 0; c < k; ++c)
        if (cov_cnt(i, c) == 0)
          throw Error(ErrorCode::missing_cell,
                      "covariate '" + header[c_cov[static_cast<std::size_t>(c)]] +
                          "' has no pre-period values for unit '" +
                          p.unit_ids[static_cast<std::size_t>(i)] + "'");
    p.covariates = cov_sum.cwiseQuotient(cov_cnt);
    p.covariate_names.assign(covariate_columns.begin(), covariate_columns.end());
  }
  p.validate();
  return p;
}

void write_long_csv(std::ostream& os, const PanelData& p) {
  os << "unit,time,outcome\n";
  for (Eigen::Index i = 0; i < p.n_units(); ++i)
    for (Eigen::Index j = 0; j < p.n_periods(); ++j)
      os << io::csv_field(p.unit_ids[static_cast<std::size_t>(i)]) << ','
         << io::csv_field(p.time_ids[static_cast<std::size_t>(j)]) << ','
         << io::format_double(p.outcomes(i, j)) << '\n';
}

nlohmann::json panel_manifest(const PanelData& p) {
  nlohmann::json j;
  j["unit_ids"] = p.unit_ids;
  j["time_ids"] = p.time_ids;
  j["treated_index"] = p.treated_index;
  j["treated_unit"] = p.unit_ids[static_cast<std::size_t>(p.treated_index)];
  j["t0"] = p.t0;
  j["n_units"] = p.n_units();
  j["n_periods"] = p.n_periods();
  if (!p.covariate_names.empty()) j["covariates"] = p.covariate_names;
  return j;
}

void write_dense_csv(std::ostream& os, const PanelData& p) {
  io::write_matrix_csv(os, p.outcomes, p.unit_ids, p.time_ids);
}

PanelData truncate_panel(const PanelData& p, Eigen::Index n_periods, Eigen::Index t0) {
  PanelData q = p;
  q.outcomes = p.outcomes.leftCols(n_periods);
  q.time_ids.resize(static_cast<std::size_t>(n_periods));
  q.t0 = t0;
  q.validate();
  return q;
}

namespace {

PanelBlocks center_blocks(PanelBlocks b, bool center) {
  b.centering = Eigen::VectorXd::Zero(b.x0.cols());
  b.centered = center;
  if (center) {
    b.centering = b.x0.colwise().mean().transpose();
    b.x0.rowwise() -= b.centering.transpose();
    b.x1 -= b.centering;
  }
  return b;
}

}  // namespace

PanelBlocks split_and_center(const PanelData& p, bool center) {
  const auto t0 = p.t0;
  const auto post = p.n_post();
  const auto ctrl = p.control_indices();
  const auto n0 = static_cast<Eigen::Index>(ctrl.size());
  PanelBlocks b;
  b.x1 = p.outcomes.row(p.treated_index).head(t0).transpose();
  b.y1_post = p.outcomes.row(p.treated_index).tail(post).transpose();
  b.x0.resize(n0, t0);
  b.y0_post.resize(n0, post);
  for (Eigen::Index r = 0; r < n0; ++r) {
    b.x0.row(r) = p.outcomes.row(ctrl[static_cast<std::size_t>(r)]).head(t0);
    b.y0_post.row(r) = p.outcomes.row(ctrl[static_cast<std::size_t>(r)]).tail(post);
  }
  return center_blocks(std::move(b), center);
}

PanelBlocks make_blocks(Eigen::VectorXd x1, Eigen::MatrixXd x0, Eigen::VectorXd y1_post,
                        Eigen::MatrixXd y0_post, bool center) {
  if (x0.cols() != x1.size() || y0_post.cols() != y1_post.size() ||
      (y0_post.size() > 0 && y0_post.rows() != x0.rows()))
    throw Error(ErrorCode::invalid_argument, "make_blocks: dimension mismatch");
  PanelBlocks b;
  b.x1 = std::move(x1);
  b.x0 = std::move(x0);
  b.y1_post = std::move(y1_post);
  b.y0_post = std::move(y0_post);
  if (b.y0_post.size() == 0) b.y0_post.resize(b.x0.rows(), 0);
  return center_blocks(std::move(b), center);
}

PanelBlocks uncenter(const PanelBlocks& b) {
  PanelBlocks u = b;
  u.x0.rowwise() += b.centering.transpose();
  u.x1 += b.centering;
  u.centering.setZero();
  u.centered = false;
  return u;
}

}  // namespace panelctrl
