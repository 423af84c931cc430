#pragma once

// Panel ingestion and the treated/control, pre/post block layout.
//
// A panel holds one treated unit observed alongside N0 = N - 1 donors over
// T periods, the first T0 of which precede treatment. Everything downstream
// works on PanelBlocks, optionally centered on the control column means of
// the pre-period outcomes.

#include <iosfwd>
#include <span>
#include <string>
#include <vector>

#include <Eigen/Dense>
#include <json.hpp>

namespace panelctrl {

struct PanelData {
  Eigen::MatrixXd outcomes;  // N x T
  std::vector<std::string> unit_ids;
  std::vector<std::string> time_ids;
  Eigen::Index treated_index = 0;
  Eigen::Index t0 = 0;

  // Optional unit-level covariates (N x K), pre-period means of the
  // requested columns of the long input.
  Eigen::MatrixXd covariates;
  std::vector<std::string> covariate_names;

  Eigen::Index n_units() const { return outcomes.rows(); }
  Eigen::Index n_periods() const { return outcomes.cols(); }
  Eigen::Index n_post() const { return outcomes.cols() - t0; }
  Eigen::Index n_controls() const { return outcomes.rows() - 1; }

  // Original row indices of the donors, in panel order.
  std::vector<Eigen::Index> control_indices() const;
  std::vector<std::string> control_ids() const;

  // Throws Error on any broken invariant.
  void validate() const;
};

// Builds and validates a panel. Time labels get numeric ordering when all of
// them parse as numbers, lexicographic ordering otherwise.
PanelData make_panel(Eigen::MatrixXd outcomes, std::vector<std::string> unit_ids,
                     std::vector<std::string> time_ids, Eigen::Index treated_index,
                     Eigen::Index t0);

// Reads long-format CSV with header containing unit,time,outcome. Extra
// columns named in `covariate_columns` are averaged over the pre-period.
PanelData load_panel(std::istream& in, const std::string& treated_label,
                     const std::string& treatment_time,
                     std::span<const std::string> covariate_columns = {});

// Canonical long-format CSV: units in panel order, times ascending.
void write_long_csv(std::ostream& os, const PanelData& p);
nlohmann::json panel_manifest(const PanelData& p);
void write_dense_csv(std::ostream& os, const PanelData& p);

// True when a < b under the panel's time ordering rule.
bool time_less(const std::string& a, const std::string& b, bool numeric);
bool times_numeric(std::span<const std::string> labels);

// Copy of `p` restricted to the first `n_periods` periods with the pre
// period shortened to `t0` (used by placebo and leave-out refits).
PanelData truncate_panel(const PanelData& p, Eigen::Index n_periods, Eigen::Index t0);

struct PanelBlocks {
  Eigen::VectorXd x1;       // T0
  Eigen::MatrixXd x0;       // N0 x T0
  Eigen::MatrixXd y0_post;  // N0 x (T - T0)
  Eigen::VectorXd y1_post;  // T - T0
  Eigen::VectorXd centering;  // control column means removed from x1 and x0
  bool centered = false;

  Eigen::Index n_controls() const { return x0.rows(); }
  Eigen::Index n_pre() const { return x0.cols(); }
  Eigen::Index n_post() const { return y0_post.cols(); }
};

PanelBlocks split_and_center(const PanelData& p, bool center);

// Blocks from raw pieces; used by refits that rearrange periods.
PanelBlocks make_blocks(Eigen::VectorXd x1, Eigen::MatrixXd x0,
                        Eigen::VectorXd y1_post, Eigen::MatrixXd y0_post, bool center);

// Same blocks with the centering shift undone (centering becomes zero).
PanelBlocks uncenter(const PanelBlocks& b);

}  // namespace panelctrl
