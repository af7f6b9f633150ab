#pragma once

#include "d2c/autodiff.hpp"
#include "d2c/color.hpp"
#include "d2c/nn.hpp"

#include <algorithm>
#include <deque>
#include <span>
#include <vector>

namespace d2c {

/// Random view generation in [0, 1] pixel space: resized crop, horizontal flip,
/// color jitter (brightness, contrast, saturation, hue) and grayscale.
struct AugmentationPolicy {
  double crop_scale_min = 1.0;
  double crop_scale_max = 1.0;
  double aspect_min = 3.0 / 4.0;
  double aspect_max = 4.0 / 3.0;
  double flip_prob = 0.0;
  double brightness = 0.0;
  double contrast = 0.0;
  double saturation = 0.0;
  double hue = 0.0;
  double grayscale_prob = 0.0;

  static AugmentationPolicy identity() { return {}; }

  static AugmentationPolicy desk_default() {
    AugmentationPolicy p;
    p.crop_scale_min = 0.6;
    p.flip_prob = 0.5;
    p.brightness = 0.2;
    p.contrast = 0.2;
    p.saturation = 0.2;
    p.hue = 0.02;
    p.grayscale_prob = 0.1;
    return p;
  }

  void validate() const {
    auto prob = [](double p) { return p >= 0.0 && p <= 1.0; };
    require(crop_scale_min > 0.0 && crop_scale_min <= crop_scale_max && crop_scale_max <= 1.0,
            Errc::invalid_parameter, "contrastive", "crop scale range must lie in (0, 1]");
    require(aspect_min > 0.0 && aspect_min <= aspect_max, Errc::invalid_parameter, "contrastive",
            "bad aspect range");
    require(prob(flip_prob) && prob(grayscale_prob), Errc::invalid_parameter, "contrastive",
            "probabilities must lie in [0, 1]");
    require(brightness >= 0.0 && contrast >= 0.0 && saturation >= 0.0 && hue >= 0.0 && hue <= 0.5,
            Errc::invalid_parameter, "contrastive", "jitter strengths out of range");
  }
};

namespace detail {

inline double luminance(const RowVector& img, const ImageShape& shape, int y, int x) {
  return 0.299 * img(shape.index(y, x, 0)) + 0.587 * img(shape.index(y, x, 1)) +
         0.114 * img(shape.index(y, x, 2));
}

}  // namespace detail

/// One augmented view of a single image (a 1 x pixels row).
inline RowVector augment(const RowVector& image, const ImageShape& shape,
                         const AugmentationPolicy& policy, Rng& rng) {
  policy.validate();
  require(image.size() == shape.size(), Errc::shape_mismatch, "contrastive",
          "image does not match its shape");
  const int H = shape.height, W = shape.width, C = shape.channels;
  RowVector out = image;

  // random resized crop; the whole image is the fallback when no crop fits
  if (policy.crop_scale_min < 1.0 || policy.crop_scale_max < 1.0) {
    int cw = W, ch = H;
    const double area = static_cast<double>(W * H);
    for (int attempt = 0; attempt < 10; ++attempt) {
      const double s = policy.crop_scale_min +
                       (policy.crop_scale_max - policy.crop_scale_min) * uniform01(rng);
      const double log_r = std::log(policy.aspect_min) +
                           (std::log(policy.aspect_max) - std::log(policy.aspect_min)) * uniform01(rng);
      const int w = static_cast<int>(std::lround(std::sqrt(s * area * std::exp(log_r))));
      const int h = static_cast<int>(std::lround(std::sqrt(s * area / std::exp(log_r))));
      if (w >= 1 && h >= 1 && w <= W && h <= H) {
        cw = w;
        ch = h;
        break;
      }
    }
    const int x0 = std::uniform_int_distribution<int>(0, W - cw)(rng);
    const int y0 = std::uniform_int_distribution<int>(0, H - ch)(rng);
    if (cw != W || ch != H) {
      RowVector src = out;
      for (int y = 0; y < H; ++y) {
        const double sy = std::clamp(y0 + (y + 0.5) * ch / H - 0.5, double(y0), double(y0 + ch - 1));
        const int ya = static_cast<int>(std::floor(sy));
        const int yb = std::min(ya + 1, y0 + ch - 1);
        const double fy = sy - ya;
        for (int x = 0; x < W; ++x) {
          const double sx = std::clamp(x0 + (x + 0.5) * cw / W - 0.5, double(x0), double(x0 + cw - 1));
          const int xa = static_cast<int>(std::floor(sx));
          const int xb = std::min(xa + 1, x0 + cw - 1);
          const double fx = sx - xa;
          for (int c = 0; c < C; ++c) {
            const double top = src(shape.index(ya, xa, c)) * (1 - fx) + src(shape.index(ya, xb, c)) * fx;
            const double bot = src(shape.index(yb, xa, c)) * (1 - fx) + src(shape.index(yb, xb, c)) * fx;
            out(shape.index(y, x, c)) = top * (1 - fy) + bot * fy;
          }
        }
      }
    }
  }

  if (policy.flip_prob > 0.0 && uniform01(rng) < policy.flip_prob) {
    RowVector src = out;
    for (int y = 0; y < H; ++y)
      for (int x = 0; x < W; ++x)
        for (int c = 0; c < C; ++c) out(shape.index(y, x, c)) = src(shape.index(y, W - 1 - x, c));
  }

  auto factor = [&rng](double strength) {
    const double lo = std::max(0.0, 1.0 - strength);
    return lo + (1.0 + strength - lo) * uniform01(rng);
  };
  auto clamp01 = [&out]() { out = out.cwiseMax(0.0).cwiseMin(1.0); };

  if (policy.brightness > 0.0) {
    out *= factor(policy.brightness);
    clamp01();
  }
  if (policy.contrast > 0.0) {
    const double f = factor(policy.contrast);
    const double m = out.mean();
    out = ((out.array() - m) * f + m).matrix();
    clamp01();
  }
  if (C == 3 && policy.saturation > 0.0) {
    const double f = factor(policy.saturation);
    for (int y = 0; y < H; ++y)
      for (int x = 0; x < W; ++x) {
        const double g = detail::luminance(out, shape, y, x);
        for (int c = 0; c < 3; ++c) {
          double& v = out(shape.index(y, x, c));
          v = g + f * (v - g);
        }
      }
    clamp01();
  }
  if (C == 3 && policy.hue > 0.0) {
    const double shift = -policy.hue + 2.0 * policy.hue * uniform01(rng);
    for (int y = 0; y < H; ++y)
      for (int x = 0; x < W; ++x) {
        double h, s, v;
        detail::rgb_to_hsv(out(shape.index(y, x, 0)), out(shape.index(y, x, 1)),
                           out(shape.index(y, x, 2)), h, s, v);
        detail::hsv_to_rgb(h + shift + 1.0, s, v, out(shape.index(y, x, 0)),
                           out(shape.index(y, x, 1)), out(shape.index(y, x, 2)));
      }
    clamp01();
  }
  if (C == 3 && policy.grayscale_prob > 0.0 && uniform01(rng) < policy.grayscale_prob) {
    for (int y = 0; y < H; ++y)
      for (int x = 0; x < W; ++x) {
        const double g = detail::luminance(out, shape, y, x);
        for (int c = 0; c < 3; ++c) out(shape.index(y, x, c)) = g;
      }
  }
  clamp01();
  return out;
}

/// g(y, w) = exp(cos(P y, P w) / tau) with a learned linear projection P.
class Critic {
 public:
  Critic() = default;
  Critic(int latent_dim, int proj_dim, double tau, Rng& rng) : tau_(tau) {
    require(latent_dim >= 1 && proj_dim >= 1, Errc::invalid_parameter, "contrastive",
            "critic dimensions must be >= 1");
    require(tau > 0.0, Errc::invalid_parameter, "contrastive", "temperature must be positive");
    const double bound = 1.0 / std::sqrt(static_cast<double>(latent_dim));
    std::uniform_real_distribution<double> u(-bound, bound);
    Matrix w(latent_dim, proj_dim);
    for (Eigen::Index i = 0; i < w.size(); ++i) w.data()[i] = u(rng);
    params_.add("critic.proj", std::move(w));
  }

  double tau() const { return tau_; }
  int latent_dim() const { return static_cast<int>(params_.at(0).value.rows()); }
  ad::ParameterTable& params() { return params_; }
  const ad::ParameterTable& params() const { return params_; }

  ad::Var project(ad::Tape& tape, ad::Var latents) {
    return ad::normalize_rows(ad::matmul(latents, tape.param(params_.at(0))));
  }

  Matrix project(const Matrix& latents) const {
    Matrix p = latents * params_.at(0).value;
    Vector norms = (p.rowwise().squaredNorm().array() + 1e-24).sqrt();
    return norms.cwiseInverse().asDiagonal() * p;
  }

  /// g for each row pair.
  Vector score(const Matrix& y, const Matrix& w) const {
    Matrix py = project(y), pw = project(w);
    return ((py.cwiseProduct(pw)).rowwise().sum() / tau_).array().exp();
  }

 private:
  double tau_ = 0.1;
  ad::ParameterTable params_;
};

/// -L_CPC from an n x m score matrix whose column 0 holds the positive log-critic
/// s+ and the rest the negatives: mean_i [log sum_j exp(S_ij - S_i0) - log m].
inline ad::Var cpc_loss_from_scores(ad::Tape& tape, ad::Var scores) {
  const auto m = static_cast<double>(tape.value(scores).cols());
  require(m >= 2, Errc::shape_mismatch, "contrastive", "need m >= 2 candidates");
  ad::Var rel = ad::sub_col(scores, ad::slice_cols(scores, 0, 1));
  ad::Var per_row = ad::add_scalar(ad::logsumexp_rows(rel), -std::log(m));
  return ad::mean(per_row);
}

/// Contrastive loss -L_CPC. Row i of `queries` pairs with row i of `positives`;
/// `negatives[j]` row i is the j-th negative of query i. `shared_negatives`
/// (already projected and normalized, e.g. from a NegativeStore) are negatives
/// for every query.
inline ad::Var cpc_loss_node(ad::Tape& tape, Critic& critic, ad::Var queries, ad::Var positives,
                             std::span<const ad::Var> negatives,
                             const Matrix* shared_negatives = nullptr) {
  const Matrix& q = tape.value(queries);
  require(tape.value(positives).rows() == q.rows() && tape.value(positives).cols() == q.cols(),
          Errc::shape_mismatch, "contrastive", "positives must match queries");
  for (ad::Var v : negatives)
    require(tape.value(v).rows() == q.rows() && tape.value(v).cols() == q.cols(),
            Errc::shape_mismatch, "contrastive", "negatives must match queries");
  ad::Var py = critic.project(tape, queries);
  ad::Var scores = ad::row_sum(ad::hadamard(py, critic.project(tape, positives)));
  for (ad::Var v : negatives)
    scores = ad::concat_cols(scores, ad::row_sum(ad::hadamard(py, critic.project(tape, v))));
  if (shared_negatives != nullptr && shared_negatives->rows() > 0) {
    require(shared_negatives->cols() == tape.value(py).cols(), Errc::shape_mismatch, "contrastive",
            "stored negatives have the wrong projection width");
    scores = ad::concat_cols(scores, ad::matmul(py, tape.constant(shared_negatives->transpose())));
  }
  return cpc_loss_from_scores(tape, ad::scale(scores, 1.0 / critic.tau()));
}

/// In-batch form: key row j is the positive for query j and a negative for
/// every other query, so m = batch size (+ stored negatives).
inline ad::Var cpc_loss_in_batch(ad::Tape& tape, Critic& critic, ad::Var queries, ad::Var keys,
                                 const Matrix* shared_negatives = nullptr) {
  const Matrix& q = tape.value(queries);
  require(tape.value(keys).rows() == q.rows() && tape.value(keys).cols() == q.cols(), Errc::shape_mismatch,
          "contrastive", "keys must match queries");
  require(q.rows() >= 2, Errc::shape_mismatch, "contrastive", "need m >= 2 candidates");
  ad::Var py = critic.project(tape, queries);
  ad::Var pk = critic.project(tape, keys);
  ad::Var pos = ad::row_sum(ad::hadamard(py, pk));
  ad::Var all = ad::matmul(py, ad::transpose(pk));
  if (shared_negatives != nullptr && shared_negatives->rows() > 0) {
    require(shared_negatives->cols() == tape.value(py).cols(), Errc::shape_mismatch, "contrastive",
            "stored negatives have the wrong projection width");
    all = ad::concat_cols(all, ad::matmul(py, tape.constant(shared_negatives->transpose())));
  }
  const double m = static_cast<double>(tape.value(all).cols());
  ad::Var rel = ad::scale(ad::sub_col(all, pos), 1.0 / critic.tau());
  return ad::mean(ad::add_scalar(ad::logsumexp_rows(rel), -std::log(m)));
}

struct CpcLoss {
  double loss = 0.0;
  Matrix query_grad;
  Matrix positive_grad;
};

/// Standalone evaluation; critic gradients are accumulated into its table.
inline CpcLoss cpc_loss(Critic& critic, const Matrix& queries, const Matrix& positives,
                        const std::vector<Matrix>& negatives) {
  ad::Tape tape;
  ad::Var q = tape.input(queries);
  ad::Var p = tape.input(positives);
  std::vector<ad::Var> negs;
  for (const Matrix& n : negatives) negs.push_back(tape.constant(n));
  ad::Var loss = cpc_loss_node(tape, critic, q, p, negs);
  tape.backward(loss);
  return {tape.scalar(loss), tape.grad(q), tape.grad(p)};
}

/// FIFO ring of past projected keys.
class NegativeStore {
 public:
  explicit NegativeStore(std::size_t capacity = 1024) : capacity_(capacity) {}

  void push(const Matrix& rows) {
    for (Eigen::Index i = 0; i < rows.rows(); ++i) {
      if (capacity_ == 0) return;
      if (rows_.size() == capacity_) rows_.pop_front();
      rows_.push_back(rows.row(i));
    }
  }

  std::size_t size() const { return rows_.size(); }
  std::size_t capacity() const { return capacity_; }

  /// Oldest first.
  Matrix contents() const {
    if (rows_.empty()) return Matrix(0, 0);
    Matrix out(static_cast<Eigen::Index>(rows_.size()), rows_.front().size());
    for (std::size_t i = 0; i < rows_.size(); ++i) out.row(static_cast<Eigen::Index>(i)) = rows_[i];
    return out;
  }

 private:
  std::size_t capacity_;
  std::deque<RowVector> rows_;
};

/// key <- m key + (1 - m) query, elementwise.
inline void momentum_update(ad::ParameterTable& key, const ad::ParameterTable& query, double m_coef) {
  require(m_coef >= 0.0 && m_coef < 1.0, Errc::invalid_parameter, "contrastive",
          "momentum must lie in [0, 1)");
  require(key.congruent(query), Errc::table_mismatch, "contrastive",
          "key and query tables are not congruent");
  for (std::size_t i = 0; i < key.size(); ++i)
    key.at(i).value = m_coef * key.at(i).value + (1.0 - m_coef) * query.at(i).value;
}

}  // namespace d2c
