#pragma once

// Noise-level series and the closed-form Gaussian diffusion formulas.
//
// A level alpha interpolates between clean data (alpha = 1) and pure noise
// (alpha -> 0): x_alpha = sqrt(alpha) x + sqrt(1 - alpha) eps.

#include "d2c/core.hpp"

#include <numbers>
#include <span>
#include <vector>

namespace d2c {

/// alpha_0 = 1 > alpha_1 > ... > alpha_T > 0.
class AlphaSchedule {
 public:
  AlphaSchedule() = default;

  static AlphaSchedule from_levels(std::vector<double> alphas) {
    require(alphas.size() >= 2, Errc::invalid_parameter, "schedule",
            "a schedule needs at least alpha_0 and alpha_1");
    require(alphas.front() == 1.0, Errc::invalid_parameter, "schedule", "alpha_0 must be exactly 1");
    for (std::size_t t = 1; t < alphas.size(); ++t) {
      require(std::isfinite(alphas[t]) && alphas[t] > 0.0, Errc::invalid_parameter, "schedule",
              "levels must be positive");
      require(alphas[t] < alphas[t - 1], Errc::invalid_parameter, "schedule",
              "levels must be strictly decreasing");
    }
    AlphaSchedule s;
    s.alphas_ = std::move(alphas);
    return s;
  }

  /// Step count T.
  std::size_t steps() const { return alphas_.empty() ? 0 : alphas_.size() - 1; }
  double operator[](std::size_t t) const { return alphas_.at(t); }
  double min_level() const { return alphas_.back(); }
  std::span<const double> levels() const { return alphas_; }

  /// True when alpha_T is small enough to stand in for pure noise.
  bool reaches_noise_floor(double floor = 1e-3) const { return min_level() <= floor; }

  bool operator==(const AlphaSchedule&) const = default;

 private:
  std::vector<double> alphas_;
};

/// alpha_t = prod_{s<=t} (1 - beta_s) with beta linear in [beta_min, beta_max].
inline AlphaSchedule make_cumulative_schedule(int steps, double beta_min, double beta_max,
                                              double alpha_floor = 1e-12) {
  require(steps >= 1, Errc::invalid_parameter, "schedule", "T must be >= 1");
  require(beta_min > 0.0 && beta_min <= beta_max && beta_max < 1.0, Errc::invalid_parameter,
          "schedule", "need 0 < beta_min <= beta_max < 1");
  std::vector<double> alphas{1.0};
  alphas.reserve(static_cast<std::size_t>(steps) + 1);
  double prod = 1.0;
  for (int s = 0; s < steps; ++s) {
    const double beta =
        steps == 1 ? beta_min
                   : beta_min + (beta_max - beta_min) * static_cast<double>(s) / (steps - 1);
    prod *= (1.0 - beta);
    alphas.push_back(std::max(prod, alpha_floor));
  }
  return AlphaSchedule::from_levels(std::move(alphas));
}

/// Keeps S + 1 levels at evenly spaced indices round(i T / S), endpoints included.
inline AlphaSchedule subsample(const AlphaSchedule& schedule, std::size_t s) {
  const std::size_t t = schedule.steps();
  require(s >= 1 && s <= t, Errc::invalid_parameter, "schedule",
          "subsample count must lie in [1, T]");
  std::vector<double> out;
  out.reserve(s + 1);
  for (std::size_t i = 0; i <= s; ++i) out.push_back(schedule[(i * t * 2 + s) / (2 * s)]);
  return AlphaSchedule::from_levels(std::move(out));
}

inline Matrix forward_noise(const Matrix& x0, double alpha, const Matrix& eps) {
  require(alpha > 0.0 && alpha <= 1.0, Errc::invalid_parameter, "schedule",
          "noise level must lie in (0, 1]");
  require(x0.rows() == eps.rows() && x0.cols() == eps.cols(), Errc::shape_mismatch, "schedule",
          "noise and data shapes differ");
  return std::sqrt(alpha) * x0 + std::sqrt(1.0 - alpha) * eps;
}

struct Posterior {
  Matrix mean;
  double variance = 0.0;
};

/// Law of x_{alpha_prev} given x_{alpha_t} and x_1 = x0, from conditioning the
/// joint Gaussian of the forward chain:
///   mean = sqrt(a_p)(1 - a_t/a_p)/(1 - a_t) x0 + sqrt(a_t/a_p)(1 - a_p)/(1 - a_t) x_t
///   var  = (1 - a_p)/(1 - a_t) (1 - a_t/a_p)
inline Posterior posterior_params(const Matrix& x_t, const Matrix& x0, double alpha_t,
                                  double alpha_prev) {
  require(alpha_t > 0.0 && alpha_t <= 1.0 && alpha_prev > 0.0 && alpha_prev <= 1.0,
          Errc::invalid_parameter, "schedule", "levels must lie in (0, 1]");
  require(alpha_prev >= alpha_t, Errc::invalid_parameter, "schedule",
          "posterior needs alpha_prev >= alpha_t");
  require(x_t.rows() == x0.rows() && x_t.cols() == x0.cols(), Errc::shape_mismatch, "schedule",
          "x_t and x0 shapes differ");
  if (alpha_prev == alpha_t) return {x_t, 0.0};
  const double ratio = alpha_t / alpha_prev;
  const double c0 = std::sqrt(alpha_prev) * (1.0 - ratio) / (1.0 - alpha_t);
  const double ct = std::sqrt(ratio) * (1.0 - alpha_prev) / (1.0 - alpha_t);
  const double var = (1.0 - alpha_prev) / (1.0 - alpha_t) * (1.0 - ratio);
  return {c0 * x0 + ct * x_t, var};
}

enum class WeightKind { uniform, variational };

/// Loss weights w(alpha_t) for t = 1..T (stored 0-based: weights[t - 1]).
struct WeightFunction {
  WeightKind kind = WeightKind::uniform;
  std::vector<double> weights;

  double at(std::size_t t) const { return weights.at(t - 1); }
  std::size_t size() const { return weights.size(); }
};

inline WeightFunction uniform_weights(const AlphaSchedule& schedule) {
  return {WeightKind::uniform, std::vector<double>(schedule.steps(), 1.0)};
}

/// Weights under which the weighted diffusion loss bounds the latent
/// log-likelihood:
///   w(a_t) = (1 - a_t) a_{t-1} / (2 (1 - a_{t-1})^2 a_t)   for t >= 2
///   w(a_1) = (1 - a_1) / (2 (2 pi)^d a_1)
inline WeightFunction variational_weights(const AlphaSchedule& schedule, int dim) {
  require(dim >= 1, Errc::invalid_parameter, "schedule", "dimensionality must be >= 1");
  require(schedule.steps() >= 1, Errc::invalid_parameter, "schedule", "empty schedule");
  const double a1 = schedule[1];
  require(a1 < 1.0, Errc::degenerate_schedule, "schedule", "alpha_1 must be < 1");
  WeightFunction w{WeightKind::variational, {}};
  w.weights.reserve(schedule.steps());
  w.weights.push_back((1.0 - a1) /
                      (2.0 * std::pow(2.0 * std::numbers::pi, static_cast<double>(dim)) * a1));
  for (std::size_t t = 2; t <= schedule.steps(); ++t) {
    const double a = schedule[t];
    const double ap = schedule[t - 1];
    require(ap < 1.0, Errc::degenerate_schedule, "schedule", "alpha_{t-1} = 1 for t >= 2");
    w.weights.push_back((1.0 - a) * ap / (2.0 * (1.0 - ap) * (1.0 - ap) * a));
  }
  for (double v : w.weights)
    require(std::isfinite(v) && v > 0.0, Errc::degenerate_schedule, "schedule",
            "weights must be finite and positive");
  return w;
}

}  // namespace d2c
