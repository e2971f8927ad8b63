#include "adaguide/metrics.hpp"

#include <Eigen/Cholesky>
#include <Eigen/Eigenvalues>

#include <stdexcept>

namespace adaguide {

namespace {

constexpr double kNegativeEigenTolerance = 1e-10;

}  // namespace

GaussianFit fit_gaussian(const std::vector<Vector>& samples) {
  if (samples.empty()) throw std::invalid_argument("no samples to fit");
  const auto dim = samples.front().size();
  const auto n = static_cast<Eigen::Index>(samples.size());
  if (n < dim + 1) throw std::invalid_argument("need at least d + 1 samples to fit a covariance");

  Vector mean = Vector::Zero(dim);
  for (const auto& s : samples) {
    if (s.size() != dim) throw std::invalid_argument("samples differ in dimension");
    mean += s;
  }
  mean /= static_cast<double>(n);

  Matrix cov = Matrix::Zero(dim, dim);
  for (const auto& s : samples) {
    const Vector centered = s - mean;
    cov.noalias() += centered * centered.transpose();
  }
  cov /= static_cast<double>(n - 1);
  cov = 0.5 * (cov + cov.transpose());

  Eigen::LLT<Matrix> chol(cov);
  if (chol.info() != Eigen::Success) throw std::domain_error("sample covariance is degenerate");
  return {std::move(mean), std::move(cov)};
}

Matrix sqrt_psd(const Matrix& m) {
  Eigen::SelfAdjointEigenSolver<Matrix> eig(0.5 * (m + m.transpose()));
  if (eig.info() != Eigen::Success) throw std::domain_error("eigendecomposition failed");
  Vector values = eig.eigenvalues();
  for (Eigen::Index i = 0; i < values.size(); ++i) {
    if (values[i] < -kNegativeEigenTolerance) throw std::domain_error("matrix is not positive semidefinite");
    values[i] = std::sqrt(std::max(values[i], 0.0));
  }
  return eig.eigenvectors() * values.asDiagonal() * eig.eigenvectors().transpose();
}

double w2_gaussian(const GaussianFit& a, const GaussianFit& b) {
  if (a.mean.size() != b.mean.size() || a.cov.rows() != b.cov.rows()) {
    throw std::invalid_argument("Gaussians differ in dimension");
  }
  for (const Matrix* cov : {&a.cov, &b.cov}) {
    if (Eigen::LLT<Matrix>(*cov).info() != Eigen::Success) throw std::domain_error("covariance is not SPD");
  }
  const Matrix root_b = sqrt_psd(b.cov);
  const Matrix cross = sqrt_psd(root_b * a.cov * root_b);
  const double bures = a.cov.trace() + b.cov.trace() - 2.0 * cross.trace();
  return (a.mean - b.mean).squaredNorm() + std::max(bures, 0.0);
}

double alignment_accuracy(const std::vector<LabeledSample>& samples, const MixtureModel& model) {
  if (samples.empty()) throw std::invalid_argument("no samples to score");
  long long hits = 0;
  for (const auto& s : samples) {
    const int requested = model.class_index(s.label);
    Eigen::Index best = 0;
    class_posterior(model, s.x).maxCoeff(&best);
    if (best == requested) ++hits;
  }
  return static_cast<double>(hits) / static_cast<double>(samples.size());
}

QualityReport quality_report(const std::vector<LabeledSample>& samples, const MixtureModel& model) {
  QualityReport report;
  report.alignment_acc = alignment_accuracy(samples, model);
  std::map<std::string, std::vector<Vector>> grouped;
  for (const auto& s : samples) grouped[s.label].push_back(s.x);
  for (const auto& [label, xs] : grouped) {
    const auto& target = model.component(model.class_index(label));
    ClassQuality q;
    q.n = static_cast<int>(xs.size());
    Vector mean = Vector::Zero(model.dim());
    for (const auto& x : xs) mean += x;
    mean /= static_cast<double>(xs.size());
    q.mean_err = (mean - target.mean).norm();
    try {
      const auto fit = fit_gaussian(xs);
      q.w2 = w2_gaussian(fit, {target.mean, target.cov});
      q.cov_err = (fit.cov - target.cov).norm();
    } catch (const std::invalid_argument&) {
    } catch (const std::domain_error&) {
    }
    report.per_class.emplace(label, q);
  }
  return report;
}

CostReport cost_report(const std::vector<SampleTrace>& traces, int steps) {
  if (traces.empty()) throw std::invalid_argument("no traces to aggregate");
  if (steps < 1) throw std::invalid_argument("step count must be >= 1");
  CostReport report;
  double wall = 0.0;
  for (const auto& trace : traces) {
    if (static_cast<int>(trace.rows.size()) != steps) throw std::invalid_argument("traces mix different T");
    report.total_evals += trace.total_evals;
    report.diagnostic_evals += trace.diagnostic_evals;
    wall += trace.wall_ms;
  }
  const auto n = static_cast<long long>(traces.size());
  report.mean_wall_ms = wall / static_cast<double>(n);
  report.evals_saved_ratio =
      1.0 - static_cast<double>(report.total_evals) / static_cast<double>(2LL * steps * n);
  return report;
}

}  // namespace adaguide
