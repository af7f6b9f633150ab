#pragma once

// Linear latent classifiers: plain logistic regression and the
// positive-unlabeled variant with Elkan-Noto calibration.

#include "d2c/core.hpp"

#include <algorithm>
#include <numeric>
#include <span>

namespace d2c {

struct LatentClassifier {
  Vector weight;
  double bias = 0.0;
  bool pu = false;
  double c_pu = 1.0;
  // diagnostics from fitting
  double gradient_norm = 0.0;
  int iterations = 0;

  Vector logits(const Matrix& z) const {
    require(z.cols() == weight.size(), Errc::shape_mismatch, "conditional",
            "classifier expects latents of width " + std::to_string(weight.size()));
    return (z * weight).array() + bias;
  }

  /// r(c = 1 | z). For PU classifiers the calibrated g(z) / c, clamped to 1.
  Vector probability(const Matrix& z) const {
    Vector p = logits(z).unaryExpr([](double s) { return 1.0 / (1.0 + std::exp(-s)); });
    if (pu) p = (p / c_pu).cwiseMin(1.0);
    return p;
  }

  std::vector<int> predict(const Matrix& z) const {
    Vector p = probability(z);
    std::vector<int> out(static_cast<std::size_t>(p.size()));
    for (Eigen::Index i = 0; i < p.size(); ++i) out[static_cast<std::size_t>(i)] = p(i) >= 0.5;
    return out;
  }

  double accuracy(const Matrix& z, std::span<const int> labels) const {
    require(static_cast<Eigen::Index>(labels.size()) == z.rows(), Errc::shape_mismatch, "conditional",
            "label count differs from latent count");
    require(!labels.empty(), Errc::invalid_parameter, "conditional", "no examples to score");
    auto pred = predict(z);
    std::size_t hit = 0;
    for (std::size_t i = 0; i < labels.size(); ++i) hit += (pred[i] == (labels[i] != 0));
    return static_cast<double>(hit) / static_cast<double>(labels.size());
  }
};

struct LogisticOptions {
  double l2 = 1e-3;
  double tolerance = 1e-6;
  int max_iterations = 200;
};

/// Penalized logistic log-loss over theta = (w, b):
///   mean_i [log(1 + exp(s_i)) - y_i s_i] + l2/2 |w|^2,  s_i = w.z_i + b.
struct LogisticProblem {
  Matrix x;  // latents with a trailing column of ones
  Vector y;
  Vector reg;

  LogisticProblem(const Matrix& latents, std::span<const int> labels, double l2) {
    const Eigen::Index n = latents.rows(), k = latents.cols();
    require(static_cast<Eigen::Index>(labels.size()) == n, Errc::shape_mismatch, "conditional",
            "label count differs from latent count");
    x.resize(n, k + 1);
    x.leftCols(k) = latents;
    x.col(k).setOnes();
    y.resize(n);
    for (Eigen::Index i = 0; i < n; ++i) y(i) = labels[static_cast<std::size_t>(i)] != 0 ? 1.0 : 0.0;
    reg = Vector::Constant(k + 1, l2);
    reg(k) = 0.0;
  }

  double count() const { return static_cast<double>(x.rows()); }

  Vector probabilities(const Vector& theta) const {
    return (x * theta).unaryExpr([](double s) { return 1.0 / (1.0 + std::exp(-s)); });
  }

  double value(const Vector& theta) const {
    Vector s = x * theta;
    double f = 0.0;
    for (Eigen::Index i = 0; i < s.size(); ++i) {
      const double v = s(i);
      f += (v > 0 ? v + std::log1p(std::exp(-v)) : std::log1p(std::exp(v))) - y(i) * v;
    }
    return f / count() + 0.5 * theta.cwiseProduct(reg).dot(theta);
  }

  Vector gradient(const Vector& theta) const {
    return x.transpose() * (probabilities(theta) - y) / count() + reg.cwiseProduct(theta);
  }

  Matrix hessian(const Vector& theta) const {
    Vector p = probabilities(theta);
    Vector curvature = p.cwiseProduct(Vector::Ones(p.size()) - p) / count();
    Matrix h = x.transpose() * curvature.asDiagonal() * x;
    h.diagonal() += reg;
    return h;
  }
};

/// Damped Newton iterations until the gradient norm falls below the tolerance.
inline LatentClassifier fit_classifier(const Matrix& latents, std::span<const int> labels,
                                       const LogisticOptions& opt = {}) {
  const Eigen::Index n = latents.rows();
  const Eigen::Index k = latents.cols();
  require(static_cast<Eigen::Index>(labels.size()) == n, Errc::shape_mismatch, "conditional",
          "label count differs from latent count");
  require(n >= 2, Errc::single_class, "conditional", "need at least two examples");
  const auto positives = std::count_if(labels.begin(), labels.end(), [](int l) { return l != 0; });
  require(positives > 0 && positives < n, Errc::single_class, "conditional",
          "both classes must be present");
  require(latents.allFinite(), Errc::non_finite, "conditional", "latents contain non-finite values");

  LogisticProblem problem(latents, labels, opt.l2);
  Vector theta = Vector::Zero(k + 1);
  double f = problem.value(theta);
  LatentClassifier out;
  for (int it = 0; it < opt.max_iterations; ++it) {
    Vector grad = problem.gradient(theta);
    out.iterations = it;
    if (grad.norm() < opt.tolerance) break;
    Matrix h = problem.hessian(theta);
    h.diagonal().array() += 1e-10;
    Vector dir = h.ldlt().solve(grad);
    double step = 1.0;
    Vector next = theta - dir;
    double fn = problem.value(next);
    while (!(fn <= f - 1e-4 * step * grad.dot(dir)) && step > 1e-12) {
      step *= 0.5;
      next = theta - step * dir;
      fn = problem.value(next);
    }
    if (!(fn <= f)) break;
    theta = std::move(next);
    f = fn;
  }
  require(theta.allFinite(), Errc::non_finite, "conditional", "logistic fit diverged");
  out.gradient_norm = problem.gradient(theta).norm();
  out.weight = theta.head(k);
  out.bias = theta(k);
  return out;
}

/// c = E[g(z) | labeled positive], estimated on held-out positives and kept in (0, 1].
inline double estimate_label_frequency(std::span<const double> heldout_scores) {
  require(!heldout_scores.empty(), Errc::empty_split, "conditional", "no held-out positives");
  const double c = std::accumulate(heldout_scores.begin(), heldout_scores.end(), 0.0) /
                   static_cast<double>(heldout_scores.size());
  return std::clamp(c, 1e-12, 1.0);
}

struct PuOptions {
  double holdout_fraction = 0.2;
  LogisticOptions logistic;
};

/// Trains g(s = labeled | z) on positives vs unlabeled, then divides by the
/// label frequency c measured on positives held out from that fit.
inline LatentClassifier fit_pu_classifier(const Matrix& positives, const Matrix& unlabeled, Rng& rng,
                                          const PuOptions& opt = {}) {
  require(positives.rows() >= 10, Errc::empty_split, "conditional", "need at least 10 positives");
  require(unlabeled.rows() >= 10, Errc::empty_split, "conditional", "need at least 10 unlabeled examples");
  require(positives.cols() == unlabeled.cols(), Errc::shape_mismatch, "conditional",
          "positive and unlabeled latents differ in width");
  require(opt.holdout_fraction > 0.0 && opt.holdout_fraction < 1.0, Errc::invalid_parameter, "conditional",
          "holdout fraction must lie in (0, 1)");

  std::vector<Eigen::Index> order(static_cast<std::size_t>(positives.rows()));
  std::iota(order.begin(), order.end(), Eigen::Index{0});
  std::shuffle(order.begin(), order.end(), rng);
  const auto held = static_cast<std::size_t>(
      std::clamp<long>(std::lround(opt.holdout_fraction * static_cast<double>(order.size())), 1,
                       static_cast<long>(order.size()) - 1));
  const Eigen::Index train_pos = positives.rows() - static_cast<Eigen::Index>(held);

  Matrix x(train_pos + unlabeled.rows(), positives.cols());
  std::vector<int> s;
  s.reserve(static_cast<std::size_t>(x.rows()));
  for (Eigen::Index i = 0; i < train_pos; ++i) {
    x.row(i) = positives.row(order[static_cast<std::size_t>(i)]);
    s.push_back(1);
  }
  x.bottomRows(unlabeled.rows()) = unlabeled;
  s.insert(s.end(), static_cast<std::size_t>(unlabeled.rows()), 0);

  LatentClassifier g = fit_classifier(x, s, opt.logistic);
  Matrix heldout(static_cast<Eigen::Index>(held), positives.cols());
  for (std::size_t i = 0; i < held; ++i)
    heldout.row(static_cast<Eigen::Index>(i)) = positives.row(order[static_cast<std::size_t>(train_pos) + i]);
  Vector scores = g.probability(heldout);
  g.c_pu = estimate_label_frequency(std::span<const double>(scores.data(), static_cast<std::size_t>(scores.size())));
  g.pu = true;
  return g;
}

}  // namespace d2c
