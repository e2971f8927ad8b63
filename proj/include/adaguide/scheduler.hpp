#pragma once

#include <optional>
#include <string>
#include <string_view>
#include <vector>

namespace adaguide {

enum class ScheduleKind { VpLinear, VpCosine, RectifiedFlow };

std::string_view to_string(ScheduleKind kind);
ScheduleKind parse_schedule_kind(std::string_view name);

struct AlphaSigma {
  double alpha;
  double sigma;
};

/// Continuous-time noise schedule x_t = alpha(t) x_0 + sigma(t) eps on t in [0, 1].
///
/// vp-linear:      beta(t) = beta_min + t (beta_max - beta_min), abar = exp(-int_0^t beta)
/// vp-cosine:      abar(t) = cos^2(((t + s) / (1 + s)) pi/2) / cos^2((s / (1 + s)) pi/2)
/// rectified-flow: alpha = 1 - t, sigma = t
///
/// The usable domain is clamped so alpha and sigma stay strictly positive:
/// [1e-5, 1] for the vp kinds and [1e-3, 1 - 1e-3] for rectified-flow.
class NoiseSchedule {
 public:
  static NoiseSchedule vp_linear(double beta_min = 0.1, double beta_max = 20.0);
  static NoiseSchedule vp_cosine(double offset = 0.008);
  static NoiseSchedule rectified_flow();
  static NoiseSchedule from_name(std::string_view name);

  ScheduleKind kind() const { return kind_; }
  std::string_view name() const { return to_string(kind_); }

  double beta_min() const { return beta_min_; }
  double beta_max() const { return beta_max_; }
  double cosine_offset() const { return cosine_offset_; }

  double t_min() const;
  double t_max() const;
  double clamp(double t) const;
  bool in_domain(double t) const { return t >= t_min() && t <= t_max(); }

  // Throws std::domain_error when t is outside [t_min, t_max].
  AlphaSigma alpha_sigma(double t) const;
  double snr(double t) const;

 private:
  NoiseSchedule(ScheduleKind kind, double beta_min, double beta_max, double offset);

  ScheduleKind kind_;
  double beta_min_ = 0.0;
  double beta_max_ = 0.0;
  double cosine_offset_ = 0.0;
};

/// Sampling-order timesteps: steps[0] = t_T (noisiest) ... steps[T-1] = t_1.
struct TimestepGrid {
  std::vector<double> steps;
  double terminal_time = 0.0;

  int size() const { return static_cast<int>(steps.size()); }
  /// 1-based position in sampling order.
  double at_step(int step_index) const { return steps.at(static_cast<std::size_t>(step_index - 1)); }
};

TimestepGrid make_grid(const NoiseSchedule& schedule, int steps);

/// Number of leading grid steps whose SNR does not strictly exceed the threshold.
/// 0 means the threshold is exceeded from the first step, T means never.
int snr_crossing_step(const NoiseSchedule& schedule, const TimestepGrid& grid, double lambda_threshold);

}  // namespace adaguide
