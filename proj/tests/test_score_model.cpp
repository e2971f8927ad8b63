#include <doctest.h>

#include <cmath>
#include <numbers>
#include <random>
#include <stdexcept>

#include <Eigen/LU>

#include "adaguide/score_model.hpp"

using namespace adaguide;

namespace {

Vector vec(std::initializer_list<double> values) {
  Vector v(static_cast<Eigen::Index>(values.size()));
  Eigen::Index i = 0;
  for (double x : values) v[i++] = x;
  return v;
}

MixtureModel single_standard(int dim) {
  return MixtureModel({{"only", Vector::Zero(dim), Matrix::Identity(dim, dim)}}, {1.0});
}

MixtureModel symmetric_pair() {
  return MixtureModel({{"left", vec({-3.0, 0.0}), Matrix::Identity(2, 2)},
                       {"right", vec({3.0, 0.0}), Matrix::Identity(2, 2)}},
                      {0.5, 0.5});
}

MixtureModel skewed_three() {
  Matrix a(2, 2), b(2, 2), c(2, 2);
  a << 1.0, 0.3, 0.3, 0.5;
  b << 0.4, -0.1, -0.1, 0.9;
  c << 2.0, 0.0, 0.0, 0.25;
  return MixtureModel({{"a", vec({1.0, 2.0}), a}, {"b", vec({-2.0, 0.5}), b}, {"c", vec({0.5, -1.5}), c}},
                      {0.2, 0.5, 0.3});
}

// -sigma * central-difference gradient of log_density, h = 1e-5.
Vector fd_eps(const MixtureModel& m, const NoiseSchedule& s, const Vector& x, double t,
              std::optional<std::string_view> label) {
  const double h = 1e-5;
  const double sigma = s.alpha_sigma(t).sigma;
  Vector grad(x.size());
  for (Eigen::Index i = 0; i < x.size(); ++i) {
    Vector up = x, down = x;
    up[i] += h;
    down[i] -= h;
    grad[i] = (log_density(m, s, up, t, label) - log_density(m, s, down, t, label)) / (2 * h);
  }
  return -sigma * grad;
}

// Naive density sum without log-sum-exp, straight from the Gaussian formula.
double naive_log_density(const MixtureModel& m, const NoiseSchedule& s, const Vector& x, double t) {
  const auto [alpha, sigma] = s.alpha_sigma(t);
  double total = 0.0;
  for (int k = 0; k < m.num_classes(); ++k) {
    const auto& comp = m.component(k);
    Matrix cov = alpha * alpha * comp.cov + sigma * sigma * Matrix::Identity(m.dim(), m.dim());
    const Vector d = x - alpha * comp.mean;
    const double quad = d.dot(cov.inverse() * d);
    total += m.weights()[static_cast<std::size_t>(k)] * std::exp(-0.5 * quad) /
             std::sqrt(std::pow(2 * std::numbers::pi, m.dim()) * cov.determinant());
  }
  return std::log(total);
}

}  // namespace

TEST_CASE("standard normal: eps = sigma x under a vp schedule") {
  const auto model = single_standard(3);
  const auto vp = NoiseSchedule::vp_linear();
  const Vector x = vec({0.3, -1.2, 2.0});
  for (double t : {0.01, 0.3, 0.9}) {
    const auto out = eps_conditional(model, vp, x, t, "only");
    CHECK(out.kind == ScoreType::Conditional);
    CHECK((out.eps - vp.alpha_sigma(t).sigma * x).norm() < 1e-12);
    CHECK((out.eps - fd_eps(model, vp, x, t, std::string_view("only"))).norm() < 1e-6);
  }
}

TEST_CASE("eps vanishes at the transported class mean") {
  const auto model = symmetric_pair();
  const auto rf = NoiseSchedule::rectified_flow();
  const double t = 0.4;
  const Vector x = rf.alpha_sigma(t).alpha * model.component(1).mean;
  CHECK(eps_conditional(model, rf, x, t, "right").eps.norm() < 1e-14);
}

TEST_CASE("unconditional eps vanishes at the symmetry point") {
  const auto model = symmetric_pair();
  for (const auto& s : {NoiseSchedule::vp_linear(), NoiseSchedule::rectified_flow()}) {
    CHECK(eps_unconditional(model, s, Vector::Zero(2), 0.5).eps.norm() < 1e-14);
  }
}

TEST_CASE("single-class marginal equals the conditional") {
  Matrix cov(2, 2);
  cov << 1.5, 0.2, 0.2, 0.7;
  const MixtureModel model({{"c", vec({1.0, -1.0}), cov}}, {1.0});
  const auto s = NoiseSchedule::vp_cosine();
  std::mt19937_64 rng(3);
  std::normal_distribution<double> n;
  for (int i = 0; i < 20; ++i) {
    const Vector x = vec({2 * n(rng), 2 * n(rng)});
    const Vector a = eps_unconditional(model, s, x, 0.37).eps;
    const Vector b = eps_conditional(model, s, x, 0.37, "c").eps;
    CHECK((a - b).norm() <= 1e-14 * (1 + b.norm()));
  }
}

TEST_CASE("analytic eps matches finite differences of log_density") {
  const auto model = skewed_three();
  std::mt19937_64 rng(11);
  std::normal_distribution<double> n;
  for (const auto& s : {NoiseSchedule::vp_linear(), NoiseSchedule::vp_cosine(), NoiseSchedule::rectified_flow()}) {
    std::uniform_real_distribution<double> tu(std::max(s.t_min(), 0.02), std::min(s.t_max(), 0.98));
    for (int i = 0; i < 100; ++i) {
      const double t = tu(rng);
      const Vector x = vec({2 * n(rng), 2 * n(rng)});
      const std::string label = model.component(i % 3).label;
      const Vector cond = eps_conditional(model, s, x, t, label).eps;
      const Vector uncond = eps_unconditional(model, s, x, t).eps;
      const Vector cond_fd = fd_eps(model, s, x, t, std::string_view(label));
      const Vector uncond_fd = fd_eps(model, s, x, t, std::nullopt);
      CHECK((cond - cond_fd).norm() <= 1e-5 * std::max(cond_fd.norm(), 1e-3));
      CHECK((uncond - uncond_fd).norm() <= 1e-5 * std::max(uncond_fd.norm(), 1e-3));
    }
  }
}

TEST_CASE("unconditional eps is the responsibility-weighted sum of component scores") {
  const auto model = skewed_three();
  const auto s = NoiseSchedule::vp_linear();
  std::mt19937_64 rng(5);
  std::normal_distribution<double> n;
  for (int i = 0; i < 50; ++i) {
    const double t = 0.1 + 0.8 * (i / 50.0);
    const Vector x = vec({2 * n(rng), 2 * n(rng)});
    const auto [alpha, sigma] = s.alpha_sigma(t);
    // Direct sum with explicit inverses and plain densities.
    Vector num = Vector::Zero(2);
    double den = 0.0;
    for (int k = 0; k < 3; ++k) {
      const auto& comp = model.component(k);
      const Matrix cov = alpha * alpha * comp.cov + sigma * sigma * Matrix::Identity(2, 2);
      const Vector d = x - alpha * comp.mean;
      const double dens = model.weights()[static_cast<std::size_t>(k)] * std::exp(-0.5 * d.dot(cov.inverse() * d)) /
                          (2 * std::numbers::pi * std::sqrt(cov.determinant()));
      num += dens * sigma * (cov.inverse() * d);
      den += dens;
    }
    const Vector expected = num / den;
    const Vector got = eps_unconditional(model, s, x, t).eps;
    CHECK((got - expected).norm() <= 1e-10 * (1 + expected.norm()));

    const TimeSlice slice(model, s, t);
    CHECK(std::abs(slice.responsibilities(x).sum() - 1.0) <= 1e-12);
  }
}

TEST_CASE("log_density") {
  const auto vp = NoiseSchedule::vp_linear();
  CHECK(log_density(single_standard(2), vp, Vector::Zero(2), 0.5) ==
        doctest::Approx(-std::log(2 * std::numbers::pi)).epsilon(1e-12));
  CHECK(log_density(single_standard(3), vp, Vector::Zero(3), 0.5, std::string_view("only")) ==
        doctest::Approx(-1.5 * std::log(2 * std::numbers::pi)).epsilon(1e-12));

  const auto model = skewed_three();
  std::mt19937_64 rng(13);
  std::normal_distribution<double> n;
  for (int i = 0; i < 50; ++i) {
    const Vector x = vec({n(rng), n(rng)});
    const double t = 0.2 + 0.6 * i / 50.0;
    const double expected = naive_log_density(model, vp, x, t);
    CHECK(std::abs(log_density(model, vp, x, t) - expected) <= 1e-10 * std::abs(expected));
  }

  // Far in the tail the naive sum underflows; log-sum-exp stays finite.
  const Vector far = vec({400.0, -400.0});
  CHECK(std::isfinite(log_density(model, NoiseSchedule::vp_linear(), far, 0.01)));
}

TEST_CASE("class_posterior") {
  const auto preset = canonical_preset();
  for (int k = 0; k < 3; ++k) {
    const Vector post = class_posterior(preset, preset.component(k).mean);
    CHECK(post[k] >= 0.99);
    CHECK(std::abs(post.sum() - 1.0) <= 1e-12);
  }
  const Vector half = class_posterior(symmetric_pair(), Vector::Zero(2));
  CHECK(half[0] == doctest::Approx(0.5).epsilon(1e-15));
  CHECK(half[1] == doctest::Approx(0.5).epsilon(1e-15));
  CHECK(class_posterior(single_standard(2), vec({5.0, 1.0}))[0] == 1.0);
  CHECK_THROWS_AS(class_posterior(preset, Vector::Zero(3)), std::invalid_argument);
}

TEST_CASE("score errors") {
  const auto preset = canonical_preset();
  const auto vp = NoiseSchedule::vp_linear();
  CHECK_THROWS_AS(eps_conditional(preset, vp, Vector::Zero(2), 0.5, "missing"), std::invalid_argument);
  CHECK_THROWS_AS(eps_conditional(preset, vp, Vector::Zero(3), 0.5, "class0"), std::invalid_argument);
  CHECK_THROWS_AS(eps_unconditional(preset, vp, Vector::Zero(1), 0.5), std::invalid_argument);
  CHECK_THROWS_AS(eps_unconditional(preset, vp, Vector::Zero(2), 0.0), std::domain_error);
}

TEST_CASE("mixture spec validation") {
  const char* good = R"({"dim": 2, "classes": [
      {"label": "a", "weight": 0.5, "mean": [0, 1], "cov": [[1, 0], [0, 1]]},
      {"label": "b", "weight": 0.5000004, "mean": [0, -1], "cov": [[2, 0.5], [0.5, 1]]}]})";
  const auto model = MixtureModel::from_json(good);
  CHECK(model.dim() == 2);
  CHECK(model.num_classes() == 2);
  CHECK(std::abs(model.weights()[0] + model.weights()[1] - 1.0) <= 1e-12);

  const auto reloaded = MixtureModel::from_json(model.to_json());
  CHECK(reloaded.weights() == model.weights());
  CHECK(reloaded.component(1).cov == model.component(1).cov);

  auto reject = [](const char* text) { CHECK_THROWS_AS(MixtureModel::from_json(text), std::invalid_argument); };
  // weights far from 1
  reject(R"({"dim": 1, "classes": [{"label": "a", "weight": 0.7, "mean": [0], "cov": [[1]]}]})");
  // nonpositive weight
  reject(R"({"dim": 1, "classes": [{"label": "a", "weight": 1.5, "mean": [0], "cov": [[1]]},
                                   {"label": "b", "weight": -0.5, "mean": [1], "cov": [[1]]}]})");
  // indefinite covariance
  reject(R"({"dim": 2, "classes": [{"label": "a", "weight": 1, "mean": [0, 0], "cov": [[1, 2], [2, 1]]}]})");
  // asymmetric covariance
  reject(R"({"dim": 2, "classes": [{"label": "a", "weight": 1, "mean": [0, 0], "cov": [[1, 0.1], [0, 1]]}]})");
  // dimension mismatch
  reject(R"({"dim": 2, "classes": [{"label": "a", "weight": 1, "mean": [0], "cov": [[1]]}]})");
  // duplicate labels
  reject(R"({"dim": 1, "classes": [{"label": "a", "weight": 0.5, "mean": [0], "cov": [[1]]},
                                   {"label": "a", "weight": 0.5, "mean": [1], "cov": [[1]]}]})");
  // delimiter in label
  reject(R"({"dim": 1, "classes": [{"label": "a,b", "weight": 1, "mean": [0], "cov": [[1]]}]})");
  // nearly singular
  reject(R"({"dim": 1, "classes": [{"label": "a", "weight": 1, "mean": [0], "cov": [[1e-12]]}]})");
  reject("not json");
  reject(R"({"dim": 1, "classes": []})");
}
