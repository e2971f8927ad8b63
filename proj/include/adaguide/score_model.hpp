#pragma once

#include <Eigen/Cholesky>
#include <Eigen/Core>

#include <filesystem>
#include <optional>
#include <string>
#include <string_view>
#include <vector>

#include "adaguide/scheduler.hpp"

namespace adaguide {

using Vector = Eigen::VectorXd;
using Matrix = Eigen::MatrixXd;

enum class ScoreType { Conditional, Unconditional };

std::string_view to_string(ScoreType type);
ScoreType parse_score_type(std::string_view name);

struct ClassComponent {
  std::string label;
  Vector mean;
  Matrix cov;
};

struct ScoreOutput {
  Vector eps;
  ScoreType kind;
};

/// Class-conditional Gaussian mixture sum_c w_c N(mu_c, Sigma_c).
///
/// Under the forward process the class-c marginal at time t is
/// N(alpha mu_c, alpha^2 Sigma_c + sigma^2 I), so every score below is exact.
/// Construction validates weights (> 0, normalized) and SPD covariances.
class MixtureModel {
 public:
  MixtureModel(std::vector<ClassComponent> classes, std::vector<double> weights);

  static MixtureModel from_json(std::string_view text);
  static MixtureModel load(const std::filesystem::path& path);
  std::string to_json() const;

  int dim() const { return dim_; }
  int num_classes() const { return static_cast<int>(classes_.size()); }
  const std::vector<ClassComponent>& classes() const { return classes_; }
  const std::vector<double>& weights() const { return weights_; }
  const ClassComponent& component(int index) const { return classes_.at(static_cast<std::size_t>(index)); }

  /// Throws std::invalid_argument for unknown labels.
  int class_index(std::string_view label) const;
  bool has_label(std::string_view label) const;

 private:
  int dim_ = 0;
  std::vector<ClassComponent> classes_;
  std::vector<double> weights_;
};

/// The mixture's marginals frozen at a single time t with every covariance factored.
/// Immutable; safe to share across threads.
class TimeSlice {
 public:
  TimeSlice(const MixtureModel& model, const NoiseSchedule& schedule, double t);

  double t() const { return t_; }
  double alpha() const { return alpha_; }
  double sigma() const { return sigma_; }

  ScoreOutput eps_conditional(const Vector& x, int class_index) const;
  ScoreOutput eps_unconditional(const Vector& x) const;
  double log_density(const Vector& x, std::optional<int> class_index) const;
  /// Posterior class weights at this time; sums to 1.
  Vector responsibilities(const Vector& x) const;

 private:
  struct Factored {
    Vector mean;
    Eigen::LLT<Matrix> chol;
    double log_norm;  // -0.5 (d log 2pi + log det)
  };

  double component_log_pdf(const Vector& x, int index) const;
  void check_dim(const Vector& x) const;

  int dim_;
  std::vector<double> log_weights_;
  double t_;
  double alpha_;
  double sigma_;
  std::vector<Factored> factored_;
};

ScoreOutput eps_conditional(const MixtureModel& model, const NoiseSchedule& schedule, const Vector& x, double t,
                            std::string_view label);
ScoreOutput eps_unconditional(const MixtureModel& model, const NoiseSchedule& schedule, const Vector& x, double t);
double log_density(const MixtureModel& model, const NoiseSchedule& schedule, const Vector& x, double t,
                   std::optional<std::string_view> label = std::nullopt);

/// Posterior over labels for a clean sample, p(c | x) under N(mu_c, Sigma_c).
Vector class_posterior(const MixtureModel& model, const Vector& x);

/// 2D, three classes with unit covariance on a radius-8 circle, equal weights.
MixtureModel canonical_preset();

}  // namespace adaguide
