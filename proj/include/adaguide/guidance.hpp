#pragma once

#include <optional>
#include <string>
#include <string_view>

#include "adaguide/scheduler.hpp"
#include "adaguide/score_model.hpp"

namespace adaguide {

enum class StrategyKind { FullCfg, ConditionalOnly, UnconditionalOnly, StepAg, SnrAg, SimilarityAg };

std::string_view to_string(StrategyKind kind);
StrategyKind parse_strategy_kind(std::string_view name);

/// Per-step choice among {CFG-combined, conditional, unconditional} and its fixed parameters.
struct GuidanceStrategy {
  StrategyKind kind = StrategyKind::FullCfg;
  double w = 7.0;
  double p = 1.0;                    // step_ag: fraction of leading steps that run CFG
  double lambda_threshold = 1.0;     // snr_ag: stop once SNR strictly exceeds this
  double gamma_threshold = 0.99;     // similarity_ag: stop once cosine similarity strictly exceeds this
  ScoreType late_score = ScoreType::Conditional;

  static GuidanceStrategy full_cfg(double w = 7.0);
  static GuidanceStrategy conditional_only();
  static GuidanceStrategy unconditional_only();
  static GuidanceStrategy step_ag(double p, double w = 7.0, ScoreType late = ScoreType::Conditional);
  static GuidanceStrategy snr_ag(double lambda_threshold, double w = 7.0, ScoreType late = ScoreType::Conditional);
  static GuidanceStrategy similarity_ag(double gamma_threshold, double w = 7.0,
                                        ScoreType late = ScoreType::Conditional);

  /// Throws std::invalid_argument on out-of-range parameters.
  void validate() const;
  bool is_adaptive() const;
  /// Whether the evaluation count is fixed before sampling (everything except similarity_ag).
  bool is_deterministic() const { return kind != StrategyKind::SimilarityAg; }
};

enum class StepMode { Guided, Single };

struct StepDecision {
  StepMode mode = StepMode::Guided;
  ScoreType single_score = ScoreType::Conditional;  // meaningful only for Single

  int evals() const { return mode == StepMode::Guided ? 2 : 1; }
  static StepDecision guided() { return {StepMode::Guided, ScoreType::Conditional}; }
  static StepDecision single(ScoreType score) { return {StepMode::Single, score}; }
  friend bool operator==(const StepDecision& a, const StepDecision& b) {
    return a.mode == b.mode && (a.mode == StepMode::Guided || a.single_score == b.single_score);
  }
};

std::string_view to_string(StepMode mode);

/// Online state of the one-shot similarity switch. Owned by a single sampling run.
struct SimilarityState {
  bool switched = false;
  std::optional<int> switch_step;   // step whose gamma exceeded the threshold
  std::optional<double> last_gamma;
};

/// eps_u + w (eps_c - eps_u).
Vector cfg_combine(const Vector& eps_u, const Vector& eps_c, double w);

/// |<eps_c, eps_u>| / (|eps_c| |eps_u|), in [0, 1]. Throws std::domain_error on a zero vector.
double cosine_similarity(const Vector& eps_c, const Vector& eps_u);

/// floor(p T): CFG runs on the first n steps.
int guided_step_count(double p, int steps);

/// Decision for the 1-based step_index.
///
/// For similarity_ag, current_gamma is the similarity measured on the previous step
/// (absent at step 1). Once it strictly exceeds the threshold the state latches and
/// every later step is single-score.
StepDecision decide(const GuidanceStrategy& strategy, int step_index, const TimestepGrid& grid,
                    const NoiseSchedule& schedule, SimilarityState& sim_state, std::optional<double> current_gamma);

/// Exact model evaluations for a run. similarity_ag is data-dependent and yields [T+1, 2T].
struct EvalBudget {
  int min;
  int max;
  bool exact() const { return min == max; }
};

EvalBudget expected_evals(const GuidanceStrategy& strategy, const TimestepGrid& grid, const NoiseSchedule& schedule);

/// SNR threshold under which snr_ag stops guiding exactly where step_ag would after n_guided steps.
double matching_snr_threshold(const NoiseSchedule& schedule, const TimestepGrid& grid, int n_guided);

}  // namespace adaguide
