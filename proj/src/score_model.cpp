#include "adaguide/score_model.hpp"

#include <Eigen/Eigenvalues>
#include <json.hpp>

#include <algorithm>
#include <cctype>
#include <cmath>
#include <fstream>
#include <numbers>
#include <numeric>
#include <sstream>
#include <stdexcept>
#include <unordered_set>

#include "adaguide/text.hpp"

namespace adaguide {

namespace {

constexpr double kWeightSumTolerance = 1e-6;
constexpr double kMinEigenvalue = 1e-9;
constexpr double kSymmetryTolerance = 1e-10;

double log_sum_exp(const std::vector<double>& values) {
  const double peak = *std::max_element(values.begin(), values.end());
  if (!std::isfinite(peak)) return peak;
  double acc = 0.0;
  for (double v : values) acc += std::exp(v - peak);
  return peak + std::log(acc);
}

void validate_label(const std::string& label) {
  if (label.empty()) throw std::invalid_argument("class label must be nonempty");
  for (char ch : label) {
    if (ch == ',' || ch == '"' || std::isspace(static_cast<unsigned char>(ch))) {
      throw std::invalid_argument("class label '" + label + "' contains a delimiter or whitespace");
    }
  }
}

}  // namespace

std::string_view to_string(ScoreType type) {
  return type == ScoreType::Conditional ? "conditional" : "unconditional";
}

ScoreType parse_score_type(std::string_view name) {
  if (name == "conditional" || name == "cond") return ScoreType::Conditional;
  if (name == "unconditional" || name == "uncond") return ScoreType::Unconditional;
  throw std::invalid_argument("unknown score type '" + std::string(name) + "'");
}

MixtureModel::MixtureModel(std::vector<ClassComponent> classes, std::vector<double> weights)
    : classes_(std::move(classes)), weights_(std::move(weights)) {
  if (classes_.empty()) throw std::invalid_argument("mixture needs at least one class");
  if (weights_.size() != classes_.size()) throw std::invalid_argument("one weight per class required");
  dim_ = static_cast<int>(classes_.front().mean.size());
  if (dim_ < 1) throw std::invalid_argument("mixture dimension must be >= 1");

  std::unordered_set<std::string> seen;
  for (auto& component : classes_) {
    validate_label(component.label);
    if (!seen.insert(component.label).second) {
      throw std::invalid_argument("duplicate class label '" + component.label + "'");
    }
    if (component.mean.size() != dim_ || component.cov.rows() != dim_ || component.cov.cols() != dim_) {
      throw std::invalid_argument("class '" + component.label + "' does not match dimension " +
                                  std::to_string(dim_));
    }
    if (!component.mean.allFinite() || !component.cov.allFinite()) {
      throw std::invalid_argument("class '" + component.label + "' has non-finite parameters");
    }
    const double scale = std::max(1.0, component.cov.cwiseAbs().maxCoeff());
    if ((component.cov - component.cov.transpose()).cwiseAbs().maxCoeff() > kSymmetryTolerance * scale) {
      throw std::invalid_argument("covariance of class '" + component.label + "' is not symmetric");
    }
    component.cov = 0.5 * (component.cov + component.cov.transpose());
    Eigen::LLT<Matrix> chol(component.cov);
    const double min_eig = Eigen::SelfAdjointEigenSolver<Matrix>(component.cov, Eigen::EigenvaluesOnly)
                               .eigenvalues()
                               .minCoeff();
    if (chol.info() != Eigen::Success || min_eig <= kMinEigenvalue) {
      throw std::invalid_argument("covariance of class '" + component.label + "' is not positive definite");
    }
  }

  for (double w : weights_) {
    if (!std::isfinite(w) || w <= 0.0) throw std::invalid_argument("class weights must be positive");
  }
  const double total = std::accumulate(weights_.begin(), weights_.end(), 0.0);
  if (std::abs(total - 1.0) > kWeightSumTolerance) {
    throw std::invalid_argument("class weights sum to " + text::format_double(total) + ", expected 1");
  }
  for (double& w : weights_) w /= total;
}

MixtureModel MixtureModel::from_json(std::string_view source) {
  nlohmann::json doc;
  try {
    doc = nlohmann::json::parse(source);
  } catch (const nlohmann::json::parse_error& e) {
    throw std::invalid_argument(std::string("malformed mixture spec: ") + e.what());
  }
  try {
    const int dim = doc.at("dim").get<int>();
    std::vector<ClassComponent> classes;
    std::vector<double> weights;
    for (const auto& entry : doc.at("classes")) {
      ClassComponent component;
      component.label = entry.at("label").get<std::string>();
      const auto mean = entry.at("mean").get<std::vector<double>>();
      const auto cov = entry.at("cov").get<std::vector<std::vector<double>>>();
      if (static_cast<int>(mean.size()) != dim || static_cast<int>(cov.size()) != dim) {
        throw std::invalid_argument("class '" + component.label + "' does not match dim " + std::to_string(dim));
      }
      component.mean = Eigen::Map<const Vector>(mean.data(), dim);
      component.cov.resize(dim, dim);
      for (int r = 0; r < dim; ++r) {
        if (static_cast<int>(cov[r].size()) != dim) {
          throw std::invalid_argument("covariance row length mismatch in class '" + component.label + "'");
        }
        for (int c = 0; c < dim; ++c) component.cov(r, c) = cov[r][c];
      }
      weights.push_back(entry.at("weight").get<double>());
      classes.push_back(std::move(component));
    }
    return MixtureModel(std::move(classes), std::move(weights));
  } catch (const nlohmann::json::exception& e) {
    throw std::invalid_argument(std::string("invalid mixture spec: ") + e.what());
  }
}

MixtureModel MixtureModel::load(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw std::runtime_error("cannot open model file " + path.string());
  std::stringstream buffer;
  buffer << in.rdbuf();
  return from_json(buffer.str());
}

std::string MixtureModel::to_json() const {
  nlohmann::ordered_json doc;
  doc["dim"] = dim_;
  doc["classes"] = nlohmann::ordered_json::array();
  for (std::size_t i = 0; i < classes_.size(); ++i) {
    const auto& component = classes_[i];
    nlohmann::ordered_json entry;
    entry["label"] = component.label;
    entry["weight"] = weights_[i];
    entry["mean"] = std::vector<double>(component.mean.data(), component.mean.data() + dim_);
    std::vector<std::vector<double>> rows;
    for (int r = 0; r < dim_; ++r) {
      std::vector<double> row(static_cast<std::size_t>(dim_));
      for (int c = 0; c < dim_; ++c) row[static_cast<std::size_t>(c)] = component.cov(r, c);
      rows.push_back(std::move(row));
    }
    entry["cov"] = rows;
    doc["classes"].push_back(std::move(entry));
  }
  return doc.dump(2) + "\n";
}

int MixtureModel::class_index(std::string_view label) const {
  for (std::size_t i = 0; i < classes_.size(); ++i) {
    if (classes_[i].label == label) return static_cast<int>(i);
  }
  throw std::invalid_argument("unknown class label '" + std::string(label) + "'");
}

bool MixtureModel::has_label(std::string_view label) const {
  return std::any_of(classes_.begin(), classes_.end(), [&](const auto& c) { return c.label == label; });
}

TimeSlice::TimeSlice(const MixtureModel& model, const NoiseSchedule& schedule, double t)
    : dim_(model.dim()), t_(t) {
  const auto [alpha, sigma] = schedule.alpha_sigma(t);
  alpha_ = alpha;
  sigma_ = sigma;
  const double log_two_pi = std::log(2.0 * std::numbers::pi);
  for (int i = 0; i < model.num_classes(); ++i) {
    const auto& component = model.component(i);
    log_weights_.push_back(std::log(model.weights()[static_cast<std::size_t>(i)]));
    Matrix marginal_cov = alpha * alpha * component.cov;
    marginal_cov.diagonal().array() += sigma * sigma;
    Eigen::LLT<Matrix> chol(marginal_cov);
    if (chol.info() != Eigen::Success) throw std::runtime_error("marginal covariance factorization failed");
    const double log_det = 2.0 * chol.matrixLLT().diagonal().array().log().sum();
    factored_.push_back({alpha * component.mean, std::move(chol), -0.5 * (dim_ * log_two_pi + log_det)});
  }
}

void TimeSlice::check_dim(const Vector& x) const {
  if (x.size() != dim_) {
    throw std::invalid_argument("input has dimension " + std::to_string(x.size()) + ", model expects " +
                                std::to_string(dim_));
  }
}

double TimeSlice::component_log_pdf(const Vector& x, int index) const {
  const auto& f = factored_[static_cast<std::size_t>(index)];
  const Vector whitened = f.chol.matrixL().solve(x - f.mean);
  return f.log_norm - 0.5 * whitened.squaredNorm();
}

ScoreOutput TimeSlice::eps_conditional(const Vector& x, int class_index) const {
  check_dim(x);
  if (class_index < 0 || class_index >= static_cast<int>(factored_.size())) {
    throw std::invalid_argument("class index out of range");
  }
  const auto& f = factored_[static_cast<std::size_t>(class_index)];
  return {sigma_ * f.chol.solve(x - f.mean), ScoreType::Conditional};
}

Vector TimeSlice::responsibilities(const Vector& x) const {
  check_dim(x);
  const auto n = factored_.size();
  std::vector<double> logs(n);
  for (std::size_t i = 0; i < n; ++i) logs[i] = log_weights_[i] + component_log_pdf(x, static_cast<int>(i));
  const double norm = log_sum_exp(logs);
  Vector r(static_cast<Eigen::Index>(n));
  for (std::size_t i = 0; i < n; ++i) r[static_cast<Eigen::Index>(i)] = std::exp(logs[i] - norm);
  return r / r.sum();
}

ScoreOutput TimeSlice::eps_unconditional(const Vector& x) const {
  const Vector r = responsibilities(x);
  Vector eps = Vector::Zero(dim_);
  for (std::size_t i = 0; i < factored_.size(); ++i) {
    const double weight = r[static_cast<Eigen::Index>(i)];
    if (weight == 0.0) continue;
    eps += weight * factored_[i].chol.solve(x - factored_[i].mean);
  }
  return {sigma_ * eps, ScoreType::Unconditional};
}

double TimeSlice::log_density(const Vector& x, std::optional<int> class_index) const {
  check_dim(x);
  if (class_index) {
    if (*class_index < 0 || *class_index >= static_cast<int>(factored_.size())) {
      throw std::invalid_argument("class index out of range");
    }
    return component_log_pdf(x, *class_index);
  }
  std::vector<double> logs(factored_.size());
  for (std::size_t i = 0; i < factored_.size(); ++i) {
    logs[i] = log_weights_[i] + component_log_pdf(x, static_cast<int>(i));
  }
  return log_sum_exp(logs);
}

ScoreOutput eps_conditional(const MixtureModel& model, const NoiseSchedule& schedule, const Vector& x, double t,
                            std::string_view label) {
  const int index = model.class_index(label);
  return TimeSlice(model, schedule, t).eps_conditional(x, index);
}

ScoreOutput eps_unconditional(const MixtureModel& model, const NoiseSchedule& schedule, const Vector& x, double t) {
  return TimeSlice(model, schedule, t).eps_unconditional(x);
}

double log_density(const MixtureModel& model, const NoiseSchedule& schedule, const Vector& x, double t,
                   std::optional<std::string_view> label) {
  std::optional<int> index;
  if (label) index = model.class_index(*label);
  return TimeSlice(model, schedule, t).log_density(x, index);
}

Vector class_posterior(const MixtureModel& model, const Vector& x) {
  if (x.size() != model.dim()) throw std::invalid_argument("input dimension does not match model");
  const double log_two_pi = std::log(2.0 * std::numbers::pi);
  std::vector<double> logs;
  for (int i = 0; i < model.num_classes(); ++i) {
    const auto& component = model.component(i);
    Eigen::LLT<Matrix> chol(component.cov);
    const double log_det = 2.0 * chol.matrixLLT().diagonal().array().log().sum();
    const Vector whitened = chol.matrixL().solve(x - component.mean);
    logs.push_back(std::log(model.weights()[static_cast<std::size_t>(i)]) -
                   0.5 * (model.dim() * log_two_pi + log_det + whitened.squaredNorm()));
  }
  const double norm = log_sum_exp(logs);
  Vector posterior(model.num_classes());
  for (int i = 0; i < model.num_classes(); ++i) posterior[i] = std::exp(logs[static_cast<std::size_t>(i)] - norm);
  return posterior / posterior.sum();
}

MixtureModel canonical_preset() {
  constexpr double kRadius = 8.0;
  std::vector<ClassComponent> classes;
  for (int k = 0; k < 3; ++k) {
    const double angle = 2.0 * std::numbers::pi * k / 3.0;
    Vector mean(2);
    mean << kRadius * std::cos(angle), kRadius * std::sin(angle);
    classes.push_back({"class" + std::to_string(k), mean, Matrix::Identity(2, 2)});
  }
  return MixtureModel(std::move(classes), {1.0 / 3.0, 1.0 / 3.0, 1.0 / 3.0});
}

}  // namespace adaguide
