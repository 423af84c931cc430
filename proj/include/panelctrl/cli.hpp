#pragma once

// Command driver behind the panelctrl executable. Each command writes its
// CSV artifacts plus manifest.json into the output directory.

#include <cstdint>
#include <optional>
#include <string>
#include <string_view>
#include <vector>

#include <json.hpp>

#include "panelctrl/estimator.hpp"
#include "panelctrl/sim.hpp"

namespace panelctrl {

inline constexpr std::string_view kVersion = "0.1.0";

enum class Command { estimate, cv, placebo, simulate, diagnose };
enum class InferenceChoice { none, conformal, jackknife_plus };

std::string_view command_name(Command c) noexcept;
Command parse_command(std::string_view s);
std::string_view inference_name(InferenceChoice m) noexcept;
InferenceChoice parse_inference(std::string_view s);

struct RunConfig {
  Command command = Command::estimate;

  std::string input;
  std::string treated;
  std::string treatment_time;

  EstimatorKind estimator = EstimatorKind::ascm_ridge;
  std::optional<double> lambda;
  LambdaRule rule = LambdaRule::min;
  CvMode cv_mode = CvMode::leave_one;
  std::vector<std::string> covariates;
  CovariateMode covariate_mode = CovariateMode::joint;

  InferenceChoice inference = InferenceChoice::none;
  double alpha = 0.05;
  std::vector<std::string> placebo_times;

  DgpKind dgp = DgpKind::factor;
  int reps = 200;
  std::uint64_t seed = 1;
  std::string fixture;  // empty: the bundled factor fixture
  bool full_scale = false;
  double noise_multiplier = 1.0;
  bool coverage = false;

  std::vector<double> sigma;  // diagnose; empty derives a grid from the data

  int threads = 1;
  std::string out = "out";

  // Throws Error(invalid_argument) on missing or inconsistent settings.
  void validate() const;
  nlohmann::json to_json() const;
};

struct RunResult {
  int exit_code = 0;
  std::string message;
  std::vector<std::string> files;  // written, relative to the output directory
};

// Never throws for module errors: they map to their exit codes.
RunResult run(const RunConfig& cfg);

}  // namespace panelctrl
