#pragma once

#include <cstdint>
#include <filesystem>
#include <iosfwd>
#include <optional>
#include <string>
#include <string_view>
#include <vector>

#include "adaguide/guidance.hpp"
#include "adaguide/scheduler.hpp"
#include "adaguide/score_model.hpp"

namespace adaguide {

struct StepRecord {
  int step_index = 0;
  double t = 0.0;
  double alpha = 0.0;
  double sigma = 0.0;
  double snr = 0.0;
  std::optional<double> gamma;
  StepDecision decision;
  int cum_evals = 0;

  friend bool operator==(const StepRecord&, const StepRecord&) = default;
};

struct SampleTrace {
  std::vector<StepRecord> rows;
  int total_evals = 0;
  int diagnostic_evals = 0;  // extra evaluations made only to observe gamma
  double wall_ms = 0.0;
  Vector prior;              // x_T, kept for seed-discipline checks
};

struct SampleResult {
  Vector x0;
  SampleTrace trace;
};

/// Deterministic (eta = 0) DDIM update. A missing t_next means the terminal step,
/// which returns the clean estimate x0_hat = (x_t - sigma(t) eps) / alpha(t).
Vector ddim_step(const Vector& x_t, const Vector& eps, double t, std::optional<double> t_next,
                 const NoiseSchedule& schedule);

struct SamplerOptions {
  bool diagnostic_dual_eval = false;
  int threads = 1;  // sample_batch only
};

/// Runs one trajectory. The prior x_T ~ N(0, sigma(t_T)^2 I) depends only on the seed,
/// so runs that differ only in strategy share the same starting noise.
SampleResult sample(const MixtureModel& model, const NoiseSchedule& schedule, const TimestepGrid& grid,
                    const GuidanceStrategy& strategy, std::string_view condition, std::uint64_t seed,
                    bool diagnostic_dual_eval = false);

/// n independent trajectories with seeds base_seed + i. Output order and contents do not
/// depend on options.threads.
std::vector<SampleResult> sample_batch(const MixtureModel& model, const NoiseSchedule& schedule,
                                       const TimestepGrid& grid, const GuidanceStrategy& strategy,
                                       std::string_view condition, int n, std::uint64_t base_seed,
                                       const SamplerOptions& options = {});

Vector draw_prior(int dim, double sigma_start, std::uint64_t seed);

// Trace files: header plus one comma-separated row per step with columns
// step_index,t,alpha,sigma,snr,gamma,mode,single_score,evals_this_step,cum_evals
inline constexpr std::string_view kTraceHeader =
    "step_index,t,alpha,sigma,snr,gamma,mode,single_score,evals_this_step,cum_evals";

void write_trace(std::ostream& out, const SampleTrace& trace);
void write_trace(const std::filesystem::path& path, const SampleTrace& trace);
/// Parses rows back; wall time, diagnostic counts and the prior are not stored in the file.
SampleTrace read_trace(std::istream& in);
SampleTrace read_trace(const std::filesystem::path& path);

}  // namespace adaguide
