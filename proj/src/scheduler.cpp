#include "adaguide/scheduler.hpp"

#include <algorithm>
#include <cmath>
#include <numbers>
#include <stdexcept>

namespace adaguide {

namespace {

constexpr double kVpFloor = 1e-5;
constexpr double kFlowEdge = 1e-3;

double cosine_abar_unnormalized(double t, double s) {
  const double c = std::cos((t + s) / (1.0 + s) * std::numbers::pi / 2.0);
  return c * c;
}

}  // namespace

std::string_view to_string(ScheduleKind kind) {
  switch (kind) {
    case ScheduleKind::VpLinear: return "vp-linear";
    case ScheduleKind::VpCosine: return "vp-cosine";
    case ScheduleKind::RectifiedFlow: return "rectified-flow";
  }
  return "unknown";
}

ScheduleKind parse_schedule_kind(std::string_view name) {
  if (name == "vp-linear") return ScheduleKind::VpLinear;
  if (name == "vp-cosine") return ScheduleKind::VpCosine;
  if (name == "rectified-flow") return ScheduleKind::RectifiedFlow;
  throw std::invalid_argument("unknown schedule '" + std::string(name) + "'");
}

NoiseSchedule::NoiseSchedule(ScheduleKind kind, double beta_min, double beta_max, double offset)
    : kind_(kind), beta_min_(beta_min), beta_max_(beta_max), cosine_offset_(offset) {}

NoiseSchedule NoiseSchedule::vp_linear(double beta_min, double beta_max) {
  if (!std::isfinite(beta_min) || !std::isfinite(beta_max) || beta_min < 0.0 || beta_max <= beta_min) {
    throw std::domain_error("vp-linear requires 0 <= beta_min < beta_max");
  }
  return NoiseSchedule(ScheduleKind::VpLinear, beta_min, beta_max, 0.0);
}

NoiseSchedule NoiseSchedule::vp_cosine(double offset) {
  if (!std::isfinite(offset) || offset < 0.0) {
    throw std::domain_error("vp-cosine requires offset s >= 0");
  }
  return NoiseSchedule(ScheduleKind::VpCosine, 0.0, 0.0, offset);
}

NoiseSchedule NoiseSchedule::rectified_flow() {
  return NoiseSchedule(ScheduleKind::RectifiedFlow, 0.0, 0.0, 0.0);
}

NoiseSchedule NoiseSchedule::from_name(std::string_view name) {
  switch (parse_schedule_kind(name)) {
    case ScheduleKind::VpLinear: return vp_linear();
    case ScheduleKind::VpCosine: return vp_cosine();
    case ScheduleKind::RectifiedFlow: return rectified_flow();
  }
  throw std::invalid_argument("unknown schedule");
}

double NoiseSchedule::t_min() const {
  return kind_ == ScheduleKind::RectifiedFlow ? kFlowEdge : kVpFloor;
}

double NoiseSchedule::t_max() const {
  return kind_ == ScheduleKind::RectifiedFlow ? 1.0 - kFlowEdge : 1.0;
}

double NoiseSchedule::clamp(double t) const { return std::clamp(t, t_min(), t_max()); }

AlphaSigma NoiseSchedule::alpha_sigma(double t) const {
  if (!(t >= t_min() && t <= t_max())) {
    throw std::domain_error("time " + std::to_string(t) + " outside the " + std::string(name()) + " domain");
  }
  switch (kind_) {
    case ScheduleKind::VpLinear: {
      const double integral = beta_min_ * t + 0.5 * (beta_max_ - beta_min_) * t * t;
      // sigma via expm1 keeps precision when integral is tiny.
      return {std::exp(-0.5 * integral), std::sqrt(-std::expm1(-integral))};
    }
    case ScheduleKind::VpCosine: {
      const double abar = cosine_abar_unnormalized(t, cosine_offset_) /
                          cosine_abar_unnormalized(0.0, cosine_offset_);
      return {std::sqrt(abar), std::sqrt(1.0 - abar)};
    }
    case ScheduleKind::RectifiedFlow:
      return {1.0 - t, t};
  }
  throw std::logic_error("unreachable schedule kind");
}

double NoiseSchedule::snr(double t) const {
  const auto [alpha, sigma] = alpha_sigma(t);
  return alpha / sigma;
}

TimestepGrid make_grid(const NoiseSchedule& schedule, int steps) {
  if (steps < 1) throw std::invalid_argument("grid needs at least one step");
  TimestepGrid grid;
  grid.terminal_time = schedule.t_min();
  grid.steps.reserve(static_cast<std::size_t>(steps));
  const double n = static_cast<double>(steps);
  for (int i = steps; i >= 1; --i) grid.steps.push_back(schedule.clamp(static_cast<double>(i) / n));

  const bool strictly_decreasing =
      std::adjacent_find(grid.steps.begin(), grid.steps.end(), std::less_equal<>{}) == grid.steps.end();
  if (!strictly_decreasing) {
    // Too fine for the clamped domain: spread i/T over [lo, hi] instead.
    const double lo = schedule.t_min();
    const double hi = schedule.t_max();
    for (int i = steps; i >= 1; --i) {
      grid.steps[static_cast<std::size_t>(steps - i)] = lo + (static_cast<double>(i) / n) * (hi - lo);
    }
  }
  return grid;
}

int snr_crossing_step(const NoiseSchedule& schedule, const TimestepGrid& grid, double lambda_threshold) {
  if (grid.steps.empty()) throw std::invalid_argument("empty grid");
  int count = 0;
  for (double t : grid.steps) {
    if (schedule.snr(t) > lambda_threshold) break;
    ++count;
  }
  return count;
}

}  // namespace adaguide
