#include "adaguide/guidance.hpp"

#include <cmath>
#include <limits>
#include <stdexcept>

namespace adaguide {

std::string_view to_string(StrategyKind kind) {
  switch (kind) {
    case StrategyKind::FullCfg: return "full_cfg";
    case StrategyKind::ConditionalOnly: return "conditional_only";
    case StrategyKind::UnconditionalOnly: return "unconditional_only";
    case StrategyKind::StepAg: return "step_ag";
    case StrategyKind::SnrAg: return "snr_ag";
    case StrategyKind::SimilarityAg: return "similarity_ag";
  }
  return "unknown";
}

StrategyKind parse_strategy_kind(std::string_view name) {
  for (auto kind : {StrategyKind::FullCfg, StrategyKind::ConditionalOnly, StrategyKind::UnconditionalOnly,
                    StrategyKind::StepAg, StrategyKind::SnrAg, StrategyKind::SimilarityAg}) {
    if (name == to_string(kind)) return kind;
  }
  throw std::invalid_argument("unknown strategy '" + std::string(name) + "'");
}

std::string_view to_string(StepMode mode) { return mode == StepMode::Guided ? "guided" : "single"; }

GuidanceStrategy GuidanceStrategy::full_cfg(double w) {
  GuidanceStrategy s;
  s.kind = StrategyKind::FullCfg;
  s.w = w;
  return s;
}

GuidanceStrategy GuidanceStrategy::conditional_only() {
  GuidanceStrategy s;
  s.kind = StrategyKind::ConditionalOnly;
  return s;
}

GuidanceStrategy GuidanceStrategy::unconditional_only() {
  GuidanceStrategy s;
  s.kind = StrategyKind::UnconditionalOnly;
  s.late_score = ScoreType::Unconditional;
  return s;
}

GuidanceStrategy GuidanceStrategy::step_ag(double p, double w, ScoreType late) {
  GuidanceStrategy s;
  s.kind = StrategyKind::StepAg;
  s.p = p;
  s.w = w;
  s.late_score = late;
  return s;
}

GuidanceStrategy GuidanceStrategy::snr_ag(double lambda_threshold, double w, ScoreType late) {
  GuidanceStrategy s;
  s.kind = StrategyKind::SnrAg;
  s.lambda_threshold = lambda_threshold;
  s.w = w;
  s.late_score = late;
  return s;
}

GuidanceStrategy GuidanceStrategy::similarity_ag(double gamma_threshold, double w, ScoreType late) {
  GuidanceStrategy s;
  s.kind = StrategyKind::SimilarityAg;
  s.gamma_threshold = gamma_threshold;
  s.w = w;
  s.late_score = late;
  return s;
}

void GuidanceStrategy::validate() const {
  if (!std::isfinite(w) || w < 0.0) throw std::invalid_argument("guidance scale w must be finite and >= 0");
  if (!(p >= 0.0 && p <= 1.0)) throw std::invalid_argument("guidance ratio p must lie in [0, 1]");
  if (!(gamma_threshold >= 0.0 && gamma_threshold <= 1.0)) {
    throw std::invalid_argument("similarity threshold must lie in [0, 1]");
  }
  if (std::isnan(lambda_threshold)) throw std::invalid_argument("SNR threshold must not be NaN");
}

bool GuidanceStrategy::is_adaptive() const {
  return kind == StrategyKind::StepAg || kind == StrategyKind::SnrAg || kind == StrategyKind::SimilarityAg;
}

Vector cfg_combine(const Vector& eps_u, const Vector& eps_c, double w) {
  if (eps_u.size() != eps_c.size()) throw std::invalid_argument("score vectors differ in length");
  return eps_u + w * (eps_c - eps_u);
}

double cosine_similarity(const Vector& eps_c, const Vector& eps_u) {
  if (eps_c.size() != eps_u.size()) throw std::invalid_argument("score vectors differ in length");
  const double norms = eps_c.norm() * eps_u.norm();
  if (!(norms > 0.0)) throw std::domain_error("cosine similarity undefined for a zero vector");
  return std::min(1.0, std::abs(eps_c.dot(eps_u)) / norms);
}

int guided_step_count(double p, int steps) {
  if (!(p >= 0.0 && p <= 1.0)) throw std::invalid_argument("guidance ratio p must lie in [0, 1]");
  if (steps < 1) throw std::invalid_argument("step count must be >= 1");
  // The slack absorbs products like 0.3 * 10 landing a few ulps below an integer.
  return static_cast<int>(std::floor(p * steps + 1e-9));
}

StepDecision decide(const GuidanceStrategy& strategy, int step_index, const TimestepGrid& grid,
                    const NoiseSchedule& schedule, SimilarityState& sim_state, std::optional<double> current_gamma) {
  if (step_index < 1 || step_index > grid.size()) throw std::out_of_range("step index outside the grid");
  switch (strategy.kind) {
    case StrategyKind::FullCfg:
      return StepDecision::guided();
    case StrategyKind::ConditionalOnly:
      return StepDecision::single(ScoreType::Conditional);
    case StrategyKind::UnconditionalOnly:
      return StepDecision::single(ScoreType::Unconditional);
    case StrategyKind::StepAg:
      return step_index <= guided_step_count(strategy.p, grid.size()) ? StepDecision::guided()
                                                                      : StepDecision::single(strategy.late_score);
    case StrategyKind::SnrAg:
      // SNR rises monotonically along the grid, so comparing at this step matches the crossing count.
      return schedule.snr(grid.at_step(step_index)) <= strategy.lambda_threshold
                 ? StepDecision::guided()
                 : StepDecision::single(strategy.late_score);
    case StrategyKind::SimilarityAg: {
      if (sim_state.switched) return StepDecision::single(strategy.late_score);
      if (step_index == 1) return StepDecision::guided();
      if (!current_gamma) throw std::invalid_argument("similarity_ag needs the previous step's gamma");
      sim_state.last_gamma = current_gamma;
      if (*current_gamma > strategy.gamma_threshold) {
        sim_state.switched = true;
        sim_state.switch_step = step_index - 1;
        return StepDecision::single(strategy.late_score);
      }
      return StepDecision::guided();
    }
  }
  throw std::logic_error("unreachable strategy kind");
}

EvalBudget expected_evals(const GuidanceStrategy& strategy, const TimestepGrid& grid, const NoiseSchedule& schedule) {
  const int steps = grid.size();
  switch (strategy.kind) {
    case StrategyKind::FullCfg: return {2 * steps, 2 * steps};
    case StrategyKind::ConditionalOnly:
    case StrategyKind::UnconditionalOnly: return {steps, steps};
    case StrategyKind::StepAg: {
      const int n = steps + guided_step_count(strategy.p, steps);
      return {n, n};
    }
    case StrategyKind::SnrAg: {
      const int n = steps + snr_crossing_step(schedule, grid, strategy.lambda_threshold);
      return {n, n};
    }
    case StrategyKind::SimilarityAg: return {steps + 1, 2 * steps};
  }
  throw std::logic_error("unreachable strategy kind");
}

double matching_snr_threshold(const NoiseSchedule& schedule, const TimestepGrid& grid, int n_guided) {
  if (n_guided < 0 || n_guided > grid.size()) throw std::out_of_range("guided step count outside the grid");
  if (n_guided == 0) return 0.0;  // SNR is strictly positive, so every step exceeds it
  if (n_guided == grid.size()) return std::numeric_limits<double>::infinity();
  return schedule.snr(grid.at_step(n_guided));
}

}  // namespace adaguide
