#pragma once

#include "d2c/autodiff.hpp"
#include "d2c/nn.hpp"

#include <numbers>
#include <vector>

namespace d2c {

struct AutoencoderArch {
  ImageShape image;
  int latent_dim = 32;
  std::vector<int> hidden{256, 256};
};

inline constexpr double kLogVarMin = -10.0;
inline constexpr double kLogVarMax = 10.0;

/// Diagonal Gaussian posterior q(z | x): an MLP emitting (mean, log-variance).
class Encoder {
 public:
  Encoder() = default;
  Encoder(AutoencoderArch arch, Rng& rng, std::string prefix = "enc")
      : arch_(std::move(arch)), mlp_{std::move(prefix), {}} {
    require(arch_.latent_dim >= 1, Errc::invalid_parameter, "autoencoder", "latent_dim must be >= 1");
    mlp_.widths.push_back(arch_.image.size());
    for (int h : arch_.hidden) mlp_.widths.push_back(h);
    mlp_.widths.push_back(2 * arch_.latent_dim);
    mlp_.init(params_, rng);
  }

  struct Output {
    ad::Var mean;
    ad::Var logvar;
  };
  struct Values {
    Matrix mean;
    Matrix logvar;
  };

  Output forward(ad::Tape& tape, ad::Var x) {
    check_input(tape.value(x));
    ad::Var h = mlp_.forward(tape, params_, x);
    const int k = arch_.latent_dim;
    return {ad::slice_cols(h, 0, k), ad::clamp(ad::slice_cols(h, k, k), kLogVarMin, kLogVarMax)};
  }

  Values evaluate(const Matrix& x) const {
    check_input(x);
    Matrix h = mlp_.evaluate(params_, x);
    const int k = arch_.latent_dim;
    return {h.leftCols(k), h.rightCols(k).cwiseMax(kLogVarMin).cwiseMin(kLogVarMax)};
  }

  /// Deterministic forward with a different parameter set of the same layout
  /// (the momentum key encoder).
  Values evaluate_with(const ad::ParameterTable& params, const Matrix& x) const {
    check_input(x);
    Matrix h = mlp_.evaluate(params, x);
    const int k = arch_.latent_dim;
    return {h.leftCols(k), h.rightCols(k).cwiseMax(kLogVarMin).cwiseMin(kLogVarMax)};
  }

  const AutoencoderArch& arch() const { return arch_; }
  int latent_dim() const { return arch_.latent_dim; }
  ad::ParameterTable& params() { return params_; }
  const ad::ParameterTable& params() const { return params_; }

 private:
  void check_input(const Matrix& x) const {
    require(x.cols() == arch_.image.size(), Errc::shape_mismatch, "autoencoder",
            "encoder input has " + std::to_string(x.cols()) + " values, expected " +
                std::to_string(arch_.image.size()));
  }

  AutoencoderArch arch_;
  nn::Mlp mlp_;
  ad::ParameterTable params_;
};

/// Gaussian mean decoder p(x | z); outputs are unconstrained pixel means.
class Decoder {
 public:
  Decoder() = default;
  Decoder(AutoencoderArch arch, Rng& rng) : arch_(std::move(arch)), mlp_{"dec", {}} {
    mlp_.widths.push_back(arch_.latent_dim);
    for (auto it = arch_.hidden.rbegin(); it != arch_.hidden.rend(); ++it) mlp_.widths.push_back(*it);
    mlp_.widths.push_back(arch_.image.size());
    mlp_.init(params_, rng);
  }

  ad::Var forward(ad::Tape& tape, ad::Var z) {
    check_input(tape.value(z));
    return mlp_.forward(tape, params_, z);
  }

  Matrix evaluate(const Matrix& z) const {
    check_input(z);
    return mlp_.evaluate(params_, z);
  }

  const AutoencoderArch& arch() const { return arch_; }
  ad::ParameterTable& params() { return params_; }
  const ad::ParameterTable& params() const { return params_; }

 private:
  void check_input(const Matrix& z) const {
    require(z.cols() == arch_.latent_dim, Errc::shape_mismatch, "autoencoder",
            "decoder input width differs from latent_dim");
  }

  AutoencoderArch arch_;
  nn::Mlp mlp_;
  ad::ParameterTable params_;
};

/// z = mean + exp(logvar / 2) * eps. With rng == nullptr returns the mean.
inline Matrix encode(const Encoder& enc, const Matrix& x, Rng* rng) {
  Encoder::Values v = enc.evaluate(x);
  if (rng == nullptr) return v.mean;
  Matrix eps = gaussian_matrix(v.mean.rows(), v.mean.cols(), *rng);
  return v.mean + ((0.5 * v.logvar).array().exp() * eps.array()).matrix();
}

/// Reparametrized sample recorded on the tape.
inline ad::Var encode_node(ad::Tape& tape, Encoder& enc, ad::Var x, Rng& rng) {
  Encoder::Output out = enc.forward(tape, x);
  const Matrix& mean = tape.value(out.mean);
  Matrix eps = gaussian_matrix(mean.rows(), mean.cols(), rng);
  ad::Var stddev = ad::exp(ad::scale(out.logvar, 0.5));
  return ad::add(out.mean, ad::hadamard(stddev, tape.constant(std::move(eps))));
}

inline Matrix decode(const Decoder& dec, const Matrix& z) { return dec.evaluate(z); }

/// Optional pixel noise on top of the mean decode.
inline Matrix decode_sample(const Decoder& dec, const Matrix& z, double sigma_pix, Rng& rng) {
  Matrix mean = dec.evaluate(z);
  return mean + sigma_pix * gaussian_matrix(mean.rows(), mean.cols(), rng);
}

/// Negative Gaussian log-likelihood without its constant:
/// |x - decode(z)|^2 / (2 sigma^2), summed over pixels, averaged over the batch.
inline ad::Var reconstruction_loss_node(ad::Tape& tape, Decoder& dec, const Matrix& x, ad::Var z,
                                        double sigma_pix) {
  ad::Var recon = dec.forward(tape, z);
  require(tape.value(recon).rows() == x.rows() && tape.value(recon).cols() == x.cols(),
          Errc::shape_mismatch, "autoencoder", "target images do not match decoder output");
  ad::Var err = ad::sum(ad::square(ad::sub(tape.constant(x), recon)));
  return ad::scale(err, 1.0 / (2.0 * sigma_pix * sigma_pix * static_cast<double>(x.rows())));
}

/// The additive constant dropped by the reconstruction loss, per image.
inline double reconstruction_log_normalizer(int pixels, double sigma_pix) {
  return pixels * std::log(sigma_pix * std::sqrt(2.0 * std::numbers::pi));
}

struct ReconstructionLoss {
  double loss = 0.0;
  Matrix latent_grad;
};

/// Loss with decoder parameter gradients accumulated and d loss / d z returned.
inline ReconstructionLoss reconstruction_loss(Decoder& dec, const Matrix& x, const Matrix& z,
                                              double sigma_pix = 0.1) {
  ad::Tape tape;
  ad::Var zv = tape.input(z);
  ad::Var loss = reconstruction_loss_node(tape, dec, x, zv, sigma_pix);
  const double value = tape.scalar(loss);
  require(std::isfinite(value), Errc::non_finite, "autoencoder", "reconstruction loss not finite");
  tape.backward(loss);
  return {value, tape.grad(zv)};
}

struct LatentStats {
  RowVector mean;
  RowVector stddev;
};

/// Componentwise mean and population standard deviation.
inline LatentStats fit_latent_stats(const Matrix& latents) {
  require(latents.rows() >= 2, Errc::invalid_parameter, "autoencoder",
          "latent stats need at least two samples");
  LatentStats s;
  s.mean = latents.colwise().mean();
  Matrix centered = latents.rowwise() - s.mean;
  s.stddev = (centered.colwise().squaredNorm() / static_cast<double>(latents.rows())).cwiseSqrt();
  for (Eigen::Index j = 0; j < s.stddev.size(); ++j)
    require(s.stddev(j) > 1e-12 * (1.0 + std::abs(s.mean(j))) && std::isfinite(s.stddev(j)),
            Errc::degenerate_latent, "autoencoder",
            "latent component " + std::to_string(j) + " has zero variance");
  return s;
}

inline Matrix normalize(const Matrix& z, const LatentStats& s) {
  require(z.cols() == s.mean.size(), Errc::shape_mismatch, "autoencoder", "latent width mismatch");
  return (z.rowwise() - s.mean).array().rowwise() / s.stddev.array();
}

inline Matrix denormalize(const Matrix& z, const LatentStats& s) {
  require(z.cols() == s.mean.size(), Errc::shape_mismatch, "autoencoder", "latent width mismatch");
  Matrix out = z.array().rowwise() * s.stddev.array();
  return out.rowwise() + s.mean;
}

}  // namespace d2c
