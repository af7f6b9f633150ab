#pragma once

// Desk-scale metrics: Frechet distance on learned features, linear probes and
// conditional purity.

#include "d2c/autodiff.hpp"
#include "d2c/classifier.hpp"
#include "d2c/data.hpp"
#include "d2c/nn.hpp"

#include <Eigen/Eigenvalues>

namespace d2c {

struct GaussianStats {
  Vector mean;
  Matrix covariance;

  Eigen::Index dim() const { return mean.size(); }
};

/// Sample mean and unbiased covariance of the rows of `features`.
inline GaussianStats gaussian_stats(const Matrix& features) {
  require(features.rows() >= 2, Errc::invalid_parameter, "eval", "need at least two feature rows");
  require(features.allFinite(), Errc::non_finite, "eval", "features contain non-finite values");
  GaussianStats s;
  s.mean = features.colwise().mean().transpose();
  Matrix centered = features.rowwise() - s.mean.transpose();
  s.covariance = centered.transpose() * centered / static_cast<double>(features.rows() - 1);
  s.covariance = 0.5 * (s.covariance + s.covariance.transpose());
  return s;
}

namespace detail {

inline void check_stats(const GaussianStats& s) {
  require(s.covariance.rows() == s.dim() && s.covariance.cols() == s.dim(), Errc::dimension_mismatch, "eval",
          "covariance does not match the mean");
  require((s.covariance - s.covariance.transpose()).cwiseAbs().maxCoeff() <= 1e-10 * (1.0 + s.covariance.cwiseAbs().maxCoeff()),
          Errc::indefinite_covariance, "eval", "covariance is not symmetric");
}

/// Symmetric PSD square root; eigenvalues below -tol raise.
inline Matrix psd_sqrt(const Matrix& m, double tol) {
  Eigen::SelfAdjointEigenSolver<Matrix> eig(0.5 * (m + m.transpose()));
  Vector lam = eig.eigenvalues();
  const double scale = std::max(1.0, lam.cwiseAbs().maxCoeff());
  require(lam.minCoeff() >= -tol * scale, Errc::indefinite_covariance, "eval",
          "matrix has a negative eigenvalue " + std::to_string(lam.minCoeff()));
  lam = lam.cwiseMax(0.0).cwiseSqrt();
  return eig.eigenvectors() * lam.asDiagonal() * eig.eigenvectors().transpose();
}

}  // namespace detail

/// |mu_a - mu_b|^2 + Tr(S_a + S_b - 2 (S_a^1/2 S_b S_a^1/2)^1/2).
inline double frechet_distance(const GaussianStats& a, const GaussianStats& b) {
  require(a.dim() == b.dim() && a.dim() >= 1, Errc::dimension_mismatch, "eval",
          "statistics have different dimensions");
  detail::check_stats(a);
  detail::check_stats(b);
  const double tol = 1e-6;
  Matrix ra = detail::psd_sqrt(a.covariance, tol);
  detail::psd_sqrt(b.covariance, tol);  // validates b
  Matrix inner = ra * b.covariance * ra;
  Eigen::SelfAdjointEigenSolver<Matrix> eig(0.5 * (inner + inner.transpose()), Eigen::EigenvaluesOnly);
  Vector lam = eig.eigenvalues();
  require(lam.minCoeff() >= -tol * std::max(1.0, lam.cwiseAbs().maxCoeff()), Errc::indefinite_covariance, "eval",
          "product covariance is indefinite");
  const double cross = lam.cwiseMax(0.0).cwiseSqrt().sum();
  const double d = (a.mean - b.mean).squaredNorm() + a.covariance.trace() + b.covariance.trace() - 2.0 * cross;
  return std::max(d, 0.0);
}

struct ExtractorOptions {
  int hidden = 128;
  int feature_dim = 32;
  int epochs = 15;
  int batch_size = 64;
  double learning_rate = 2e-3;
  std::uint64_t seed = 0;
};

/// Small supervised network trained to predict every attribute column;
/// features are its penultimate activations.
class FeatureExtractor {
 public:
  FeatureExtractor() = default;

  static FeatureExtractor fit(const TensorArchive& data, const ExtractorOptions& opt = {}) {
    require(!data.attribute_names.empty(), Errc::invalid_parameter, "eval",
            "feature extractor needs an attribute table to train on");
    require(data.count() >= 2, Errc::invalid_parameter, "eval", "feature extractor needs data");
    FeatureExtractor fx;
    fx.shape_ = data.shape;
    fx.trunk_ = nn::Mlp{"feat", {data.shape.size(), opt.hidden, opt.feature_dim}};
    Rng rng = derive_rng(opt.seed, 0xfea7);
    fx.trunk_.init(fx.params_, rng);
    for (Eigen::Index j = 0; j < data.attributes.cols(); ++j) {
      const int classes = std::max(2, data.attributes.col(j).maxCoeff() + 1);
      require(data.attributes.col(j).minCoeff() >= 0, Errc::invalid_parameter, "eval",
              "attribute values must be nonnegative class ids");
      fx.classes_.push_back(classes);
      nn::add_linear(fx.params_, head_name(static_cast<std::size_t>(j)), opt.feature_dim, classes, rng);
    }

    nn::AdamW adam(fx.params_, {opt.learning_rate, 0.9, 0.999, 1e-8, 0.0});
    const auto n = static_cast<std::size_t>(data.count());
    std::vector<Eigen::Index> order(n);
    for (int epoch = 0; epoch < opt.epochs; ++epoch) {
      std::iota(order.begin(), order.end(), Eigen::Index{0});
      Rng shuffle = derive_rng(opt.seed, 0x5107, static_cast<std::uint64_t>(epoch));
      std::shuffle(order.begin(), order.end(), shuffle);
      for (std::size_t start = 0; start + 1 < n; start += static_cast<std::size_t>(opt.batch_size)) {
        const std::size_t end = std::min(n, start + static_cast<std::size_t>(opt.batch_size));
        Matrix x(static_cast<Eigen::Index>(end - start), data.shape.size());
        Eigen::MatrixXi y(x.rows(), data.attributes.cols());
        for (std::size_t i = start; i < end; ++i) {
          x.row(static_cast<Eigen::Index>(i - start)) = data.images.row(order[i]);
          y.row(static_cast<Eigen::Index>(i - start)) = data.attributes.row(order[i]);
        }
        fx.params_.zero_grad();
        ad::Tape tape;
        ad::Var loss = fx.loss_node(tape, x, y);
        tape.backward(loss);
        adam.step(fx.params_);
      }
    }
    return fx;
  }

  Matrix features(const Matrix& images) const {
    require(images.cols() == shape_.size(), Errc::shape_mismatch, "eval", "images do not match the extractor");
    return nn::silu_eval(trunk_.evaluate(params_, images));
  }

  /// Per-attribute accuracy of the heads (diagnostic).
  std::vector<double> head_accuracy(const TensorArchive& data) const {
    Matrix f = features(data.images);
    std::vector<double> out;
    for (std::size_t j = 0; j < classes_.size(); ++j) {
      Matrix logits = nn::linear_eval(params_, head_name(j), f);
      std::size_t hit = 0;
      for (Eigen::Index i = 0; i < logits.rows(); ++i) {
        Eigen::Index best;
        logits.row(i).maxCoeff(&best);
        hit += best == data.attributes(i, static_cast<Eigen::Index>(j));
      }
      out.push_back(static_cast<double>(hit) / static_cast<double>(logits.rows()));
    }
    return out;
  }

  const ImageShape& shape() const { return shape_; }
  int feature_dim() const { return trunk_.widths.back(); }

 private:
  static std::string head_name(std::size_t j) { return "feat.head" + std::to_string(j); }

  ad::Var loss_node(ad::Tape& tape, const Matrix& x, const Eigen::MatrixXi& y) {
    ad::Var f = ad::silu(trunk_.forward(tape, params_, tape.constant(x)));
    ad::Var total = tape.constant(Matrix::Zero(1, 1));
    for (std::size_t j = 0; j < classes_.size(); ++j) {
      ad::Var logits = nn::linear(tape, params_, head_name(j), f);
      Matrix onehot = Matrix::Zero(x.rows(), classes_[j]);
      for (Eigen::Index i = 0; i < x.rows(); ++i) onehot(i, y(i, static_cast<Eigen::Index>(j))) = 1.0;
      ad::Var picked = ad::row_sum(ad::hadamard(logits, tape.constant(std::move(onehot))));
      total = ad::add(total, ad::mean(ad::sub(ad::logsumexp_rows(logits), picked)));
    }
    return total;
  }

  ImageShape shape_;
  nn::Mlp trunk_;
  std::vector<int> classes_;
  ad::ParameterTable params_;
};

inline constexpr Eigen::Index kMinFidImages = 100;

inline double toy_fid(const FeatureExtractor& fx, const Matrix& real, const Matrix& generated) {
  require(real.rows() >= kMinFidImages && generated.rows() >= kMinFidImages, Errc::invalid_parameter, "eval",
          "toy FID needs at least 100 images per set");
  return frechet_distance(gaussian_stats(fx.features(real)), gaussian_stats(fx.features(generated)));
}

/// Held-out accuracy of a logistic probe fitted on the training split.
inline double linear_probe(const Matrix& train_latents, std::span<const int> train_labels,
                           const Matrix& test_latents, std::span<const int> test_labels) {
  LatentClassifier probe = fit_classifier(train_latents, train_labels);
  return probe.accuracy(test_latents, test_labels);
}

/// Fraction of images whose oracle attributes satisfy the query.
inline double purity(const Matrix& images, const ImageShape& shape, const AttributeQuery& target) {
  if (images.rows() == 0) return 0.0;
  std::size_t hit = 0;
  for (Eigen::Index i = 0; i < images.rows(); ++i)
    hit += target.holds(read_attributes(images.row(i), shape));
  return static_cast<double>(hit) / static_cast<double>(images.rows());
}

}  // namespace d2c
