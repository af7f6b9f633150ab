#pragma once

// Few-shot conditional generation on top of a trained model: rejection
// sampling against a latent classifier, and latent manipulation.

#include "d2c/checkpoint.hpp"
#include "d2c/classifier.hpp"
#include "d2c/parallel.hpp"
#include "d2c/trainer.hpp"

namespace d2c {

enum class AcceptMode { bernoulli, threshold };

struct RejectionOptions {
  std::size_t chunk = 256;
  std::size_t starvation_window = 5000;
  double min_acceptance = 1e-3;
  int threads = 1;
};

struct RejectionStats {
  std::size_t proposed = 0;
  std::size_t accepted = 0;

  double rate() const { return proposed == 0 ? 0.0 : static_cast<double>(accepted) / static_cast<double>(proposed); }
};

struct RejectionResult {
  Matrix samples;
  RejectionStats stats;
};

/// Draws n samples from the unnormalized density score(z) p(z), with p given
/// by `propose(count, rng) -> count x d`. Bernoulli mode accepts when
/// u < score; threshold mode when score >= 0.5. Candidates come in chunks with
/// their own RNG streams and are accepted in candidate order, so the output
/// does not depend on the thread count.
template <typename Propose, typename Score>
RejectionResult rejection_sample(Propose&& propose, Score&& score, std::size_t n, Rng& rng, AcceptMode mode,
                                 const RejectionOptions& opt = {}) {
  require(n >= 1, Errc::invalid_parameter, "conditional", "need n >= 1");
  require(opt.chunk >= 1, Errc::invalid_parameter, "conditional", "chunk must be >= 1");
  const std::uint64_t base = rng();
  RejectionResult out;
  std::vector<RowVector> kept;
  std::uint64_t next_chunk = 0;
  const auto group = static_cast<std::size_t>(std::max(opt.threads, 1));
  while (kept.size() < n) {
    std::vector<Matrix> cand(group);
    std::vector<Vector> scores(group), u(group);
    parallel_for(group, opt.threads, [&](std::size_t g) {
      Rng r = derive_rng(base, 0xacc, next_chunk + g);
      cand[g] = propose(opt.chunk, r);
      scores[g] = score(static_cast<const Matrix&>(cand[g]));
      u[g].resize(cand[g].rows());
      for (Eigen::Index i = 0; i < u[g].size(); ++i) u[g](i) = uniform01(r);
    });
    next_chunk += group;
    for (std::size_t g = 0; g < group && kept.size() < n; ++g) {
      require(scores[g].size() == cand[g].rows(), Errc::shape_mismatch, "conditional",
              "score count differs from candidate count");
      for (Eigen::Index i = 0; i < cand[g].rows() && kept.size() < n; ++i) {
        const double s = scores[g](i);
        require(std::isfinite(s) && s >= 0.0 && s <= 1.0, Errc::invalid_parameter, "conditional",
                "acceptance scores must lie in [0, 1]");
        ++out.stats.proposed;
        const bool accept = mode == AcceptMode::bernoulli ? u[g](i) < s : s >= 0.5;
        if (accept) {
          kept.push_back(cand[g].row(i));
          ++out.stats.accepted;
        }
      }
      if (kept.size() < n && out.stats.proposed >= opt.starvation_window)
        require(out.stats.rate() >= opt.min_acceptance, Errc::acceptance_starvation, "conditional",
                "accepted " + std::to_string(out.stats.accepted) + " of " + std::to_string(out.stats.proposed) +
                    " candidates");
    }
  }
  out.samples.resize(static_cast<Eigen::Index>(n), kept.front().size());
  for (std::size_t i = 0; i < n; ++i) out.samples.row(static_cast<Eigen::Index>(i)) = kept[i];
  return out;
}

/// r(c | z) for c in {0, 1} from a classifier of r(1 | z).
inline Vector class_score(const LatentClassifier& clf, const Matrix& z, int target) {
  Vector p = clf.probability(z);
  return target != 0 ? p : (Vector::Ones(p.size()) - p).eval();
}

struct ConditionalSamples {
  Matrix images;
  Matrix latents;  // normalized
  RejectionStats stats;
};

/// Latent-prior proposals filtered by the classifier, then decoded.
inline ConditionalSamples conditional_sample(const D2cModel& model, const LatentClassifier& clf, int target,
                                             std::size_t n, Rng& rng, AcceptMode mode, int sampler_steps = 50,
                                             RejectionOptions opt = {}) {
  const SamplerSpec spec = model.sampler(sampler_steps);
  auto propose = [&](std::size_t count, Rng& r) {
    return model.sample_latents(static_cast<int>(count), spec, r);
  };
  auto score = [&](const Matrix& z) { return class_score(clf, z, target); };
  RejectionResult res = rejection_sample(propose, score, n, rng, mode, opt);
  return {model.decode_latents(res.samples), res.samples, res.stats};
}

struct ManipulationSpec {
  int target = 1;
  double eta = 1.0;
  double alpha = 0.9;
  int denoise_steps = 5;
  bool allow_any_alpha = false;

  /// eta scaled to the latent dimension: 0.5 sqrt(k).
  static ManipulationSpec defaults(int latent_dim) {
    ManipulationSpec s;
    s.eta = 0.5 * std::sqrt(static_cast<double>(latent_dim));
    return s;
  }

  void validate() const {
    require(eta >= 0.0 && std::isfinite(eta), Errc::invalid_parameter, "conditional", "eta must be >= 0");
    require(alpha > 0.0 && alpha <= 1.0, Errc::invalid_range, "conditional", "alpha must lie in (0, 1]");
    require(allow_any_alpha || (alpha >= 0.65 && alpha <= 0.9), Errc::invalid_range, "conditional",
            "alpha outside [0.65, 0.9]; pass an explicit override to use it");
    require(denoise_steps >= 1, Errc::invalid_parameter, "conditional", "denoise steps must be >= 1");
  }
};

struct ManipulationResult {
  Matrix images;
  Vector score_before;
  Vector score_after;
  Vector displacement;  // latent distance moved, normalized units
};

/// Encode, step along the classifier's logit gradient, noise to alpha, DDIM
/// back to alpha = 1, decode. The latent change is applied to the raw encoding,
/// so eta = 0 with alpha = 1 returns the plain reconstruction exactly.
inline ManipulationResult manipulate(const D2cModel& model, const LatentClassifier& clf,
                                     const ManipulationSpec& spec, const Matrix& images, Rng& rng) {
  spec.validate();
  const Matrix raw = encode(model.encoder(), images, nullptr);
  const Matrix z = normalize(raw, model.stats());
  Vector grad = spec.target != 0 ? clf.weight : Vector(-clf.weight);
  require(grad.allFinite(), Errc::non_finite, "conditional", "classifier gradient is not finite");
  const double gnorm = grad.norm();
  Matrix moved = z;
  if (spec.eta > 0.0 && gnorm > 0.0) moved.rowwise() += (spec.eta / gnorm) * grad.transpose();

  Matrix eps = gaussian_matrix(z.rows(), z.cols(), rng);
  Matrix noisy = forward_noise(moved, spec.alpha, eps);
  std::vector<double> levels = denoise_levels(spec.alpha, 1.0, spec.denoise_steps);
  Matrix clean = run_levels(model.predictor(), SamplerKind::ddim, levels, std::move(noisy), nullptr);

  const Matrix delta = clean - z;
  require(delta.allFinite(), Errc::non_finite, "conditional", "manipulated latent is not finite");
  const Matrix out_raw = raw + (delta.array().rowwise() * model.stats().stddev.array()).matrix();

  ManipulationResult res;
  res.images = decode(model.decoder(), out_raw);
  res.score_before = class_score(clf, z, spec.target);
  res.score_after = class_score(clf, model.encode_latents(res.images), spec.target);
  res.displacement = delta.rowwise().norm();
  return res;
}

// ---------------------------------------------------------------------------
// classifier persistence

inline TableSet classifier_tables(const LatentClassifier& c) {
  TableSet set;
  set.add(vector_table("classifier/weight", std::vector<double>(c.weight.data(), c.weight.data() + c.weight.size())));
  set.add(vector_table("classifier/bias", {c.bias}));
  set.add(vector_table("classifier/pu", {c.pu ? 1.0 : 0.0, c.c_pu}));
  return set;
}

inline LatentClassifier classifier_from_tables(const TableSet& set) {
  LatentClassifier c;
  const auto& w = set.at("classifier/weight").data;
  c.weight = Eigen::Map<const Vector>(w.data(), static_cast<Eigen::Index>(w.size()));
  const auto& b = set.at("classifier/bias").data;
  const auto& pu = set.at("classifier/pu").data;
  require(b.size() == 1 && pu.size() == 2, Errc::corrupt_checkpoint, "conditional", "bad classifier tables");
  c.bias = b[0];
  c.pu = pu[0] != 0.0;
  c.c_pu = pu[1];
  require(c.c_pu > 0.0 && c.c_pu <= 1.0, Errc::corrupt_checkpoint, "conditional", "c_pu out of (0, 1]");
  return c;
}

}  // namespace d2c
