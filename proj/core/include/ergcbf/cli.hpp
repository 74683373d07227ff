#pragma once

#include <optional>
#include <string>

#include "ergcbf/scenario.hpp"
#include "ergcbf/simulate.hpp"

namespace ergcbf::cli {

// shared exit codes
inline constexpr int kExitSuccess = 0;
inline constexpr int kExitHardFailure = 1;
inline constexpr int kExitSafeIncomplete = 2;
inline constexpr int kExitTuneStalled = 3;
inline constexpr int kExitInvalidConfig = 64;

struct CommonOptions {
  std::string config_path;
  std::string out_dir;  // empty -> $ERGCBF_OUT or "."
  std::optional<double> rate_hz;
  std::optional<long> seed;
};

struct TuneCliOptions {
  CommonOptions common;
  int iterations = 20;
  double alpha = 1e-3;
  bool grad_oracle = false;
};

int cmd_run(const CommonOptions& options);
int cmd_compare(const CommonOptions& options);
int cmd_tune(const TuneCliOptions& options);
int cmd_validate(const std::string& config_path);

// emitters, exposed for the end-to-end tests
void write_trajectory_csv(const sim::TrajectoryLog& log, const scenario::ScenarioConfig& config,
                          const std::string& path);
void write_metrics_json(const sim::RunMetrics& metrics, int exit_code, const std::string& path);
std::string resolve_out_dir(const std::string& requested);

}  // namespace ergcbf::cli
