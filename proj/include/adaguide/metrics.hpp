#pragma once

#include <map>
#include <optional>
#include <string>
#include <utility>
#include <vector>

#include "adaguide/sampler.hpp"
#include "adaguide/score_model.hpp"

namespace adaguide {

struct GaussianFit {
  Vector mean;
  Matrix cov;
};

/// Sample mean and unbiased (n - 1) covariance. Throws std::invalid_argument with fewer
/// than d + 1 samples and std::domain_error when the covariance is not positive definite.
GaussianFit fit_gaussian(const std::vector<Vector>& samples);

/// Squared Bures-Wasserstein distance |m1 - m2|^2 + tr(S1 + S2 - 2 (S2^1/2 S1 S2^1/2)^1/2).
double w2_gaussian(const GaussianFit& a, const GaussianFit& b);

/// Symmetric PSD square root by eigendecomposition. Eigenvalues in [-1e-10, 0) are
/// treated as round-off and floored at 0; anything more negative throws.
Matrix sqrt_psd(const Matrix& m);

struct LabeledSample {
  Vector x;
  std::string label;
};

/// Fraction of samples whose posterior argmax is the requested label.
double alignment_accuracy(const std::vector<LabeledSample>& samples, const MixtureModel& model);

struct ClassQuality {
  int n = 0;
  double mean_err = 0.0;         // |mean_hat - mu_c|
  std::optional<double> w2;      // absent when too few samples or degenerate covariance
  std::optional<double> cov_err; // Frobenius |cov_hat - Sigma_c|
};

struct QualityReport {
  std::map<std::string, ClassQuality> per_class;
  double alignment_acc = 0.0;
};

QualityReport quality_report(const std::vector<LabeledSample>& samples, const MixtureModel& model);

struct CostReport {
  long long total_evals = 0;
  long long diagnostic_evals = 0;
  double mean_wall_ms = 0.0;
  double evals_saved_ratio = 0.0;  // 1 - total / (2 T n)
};

/// Throws std::invalid_argument when traces disagree on T or the list is empty.
CostReport cost_report(const std::vector<SampleTrace>& traces, int steps);

}  // namespace adaguide
