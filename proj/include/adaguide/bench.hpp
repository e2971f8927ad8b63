#pragma once

#include <cstdint>
#include <filesystem>
#include <iosfwd>
#include <map>
#include <optional>
#include <string>
#include <string_view>
#include <vector>

#include "adaguide/guidance.hpp"
#include "adaguide/metrics.hpp"
#include "adaguide/scheduler.hpp"
#include "adaguide/score_model.hpp"

namespace adaguide::bench {

/// "vp-linear:<beta_min>:<beta_max>", "vp-cosine:<s>" or "rectified-flow". Bare vp names take defaults.
NoiseSchedule parse_schedule_spec(std::string_view spec);
std::string format_schedule_spec(const NoiseSchedule& schedule);

struct RunConfig {
  std::string model_path;  // empty selects the built-in canonical preset
  std::string schedule = "vp-linear:0.1:20";
  int steps = 50;
  GuidanceStrategy strategy;
  std::string condition = "all";
  int n_samples = 4000;  // per condition
  std::uint64_t base_seed = 0;
  bool diagnostic_dual_eval = false;
  int threads = 1;
  std::string csv_out;
  std::string trace_dir;
  int trace_count = 1;  // traces written per condition when trace_dir is set

  void validate() const;
};

/// Flag name (without leading dashes) to one or more textual values. Both the JSON
/// config file and the command line reduce to this form; later sources override earlier.
using ConfigValues = std::map<std::string, std::vector<std::string>>;

/// Flat JSON object; values are scalars or arrays of scalars. Unknown keys are rejected.
ConfigValues parse_config_json(std::string_view text);
ConfigValues load_config_file(const std::filesystem::path& path);
/// Every key must carry exactly one value.
RunConfig run_config_from(const ConfigValues& values, RunConfig base = {});

/// Zeroes parameters the strategy does not read so equivalent cells compare equal.
GuidanceStrategy canonical_strategy(const GuidanceStrategy& strategy);

/// Seed of sample i for the class at class_index; independent of strategy parameters.
std::uint64_t sample_seed(const RunConfig& config, int class_index, int i);

struct RunResult {
  RunConfig config;
  QualityReport quality;
  CostReport cost;
};

/// Loads the model named by the config (or the canonical preset).
MixtureModel load_model(const RunConfig& config);

RunResult run_experiment(const RunConfig& config, const MixtureModel& model);
RunResult run_experiment(const RunConfig& config);

// CSV rows: fixed leading columns, then w2/mean_err/cov_err per model class in model order.
std::vector<std::string> csv_header(const MixtureModel& model);
std::string format_csv_row(const RunResult& result, const MixtureModel& model);
RunResult parse_csv_row(std::string_view row, const MixtureModel& model);
/// Index of the wall-time column, which is excluded from byte-determinism comparisons.
inline constexpr std::size_t kWallTimeColumn = 14;

/// Appends rows, writing the header first when the file is new or empty.
class CsvWriter {
 public:
  CsvWriter(const std::filesystem::path& path, const MixtureModel& model);
  void append(const RunResult& result);

 private:
  std::filesystem::path path_;
  const MixtureModel* model_;
};

struct SweepAxes {
  std::vector<StrategyKind> strategies;
  std::vector<double> p;
  std::vector<double> w;
  std::vector<int> steps;
  std::vector<double> gamma;
  std::vector<double> lambda;
  std::vector<ScoreType> late_score;
};

/// Axes taken from list-valued keys; absent keys fall back to the base config's value.
/// A key present with an empty list is an error.
SweepAxes sweep_axes_from(const ConfigValues& values, const RunConfig& base);

/// Cartesian product in the order strategy, T, w, p, gamma, lambda, late_score, with
/// cells that canonicalize to the same configuration collapsed to their first occurrence.
std::vector<RunConfig> expand_sweep(const RunConfig& base, const SweepAxes& axes);
std::vector<RunResult> sweep(const RunConfig& base, const SweepAxes& axes, const MixtureModel& model);

/// Filesystem-safe tag naming one strategy configuration.
std::string cell_tag(const RunConfig& config);

// SNR curves: grid,schedule,step_index,t,fraction,snr. "dense" rows use T = 1000,
// "inference" rows the requested T; fraction = step_index / T in sampling order.
inline constexpr int kDenseSteps = 1000;
void emit_snr_curves(std::ostream& out, const std::vector<NoiseSchedule>& schedules, int steps);
void emit_snr_curves(const std::filesystem::path& path, const std::vector<NoiseSchedule>& schedules, int steps);

/// Fraction of the grid that runs before SNR strictly exceeds the threshold.
double snr_crossing_fraction(const NoiseSchedule& schedule, int steps, double lambda_threshold = 1.0);

struct GammaCurveRow {
  int step_index = 0;
  double t = 0.0;
  double snr = 0.0;
  double mean_gamma = 0.0;
  double min_gamma = 0.0;
  double max_gamma = 0.0;
  int n = 0;
};

/// Mean per-step similarity over n_avg trajectories with dual evaluation forced on.
/// With condition "all", trajectory i uses class i mod K.
std::vector<GammaCurveRow> gamma_curves(const RunConfig& config, const MixtureModel& model, int n_avg);
inline constexpr std::string_view kGammaHeader = "step_index,t,snr,mean_gamma,min_gamma,max_gamma,n";
void write_gamma_curves(std::ostream& out, const std::vector<GammaCurveRow>& rows);
std::vector<GammaCurveRow> read_gamma_curves(std::istream& in);

}  // namespace adaguide::bench
