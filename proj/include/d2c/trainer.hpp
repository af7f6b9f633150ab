#pragma once

// Joint training of the autoencoder, latent diffusion prior and contrastive
// critic; checkpoints.

#include "d2c/autoencoder.hpp"
#include "d2c/checkpoint.hpp"
#include "d2c/classifier.hpp"
#include "d2c/config.hpp"
#include "d2c/contrastive.hpp"
#include "d2c/data.hpp"
#include "d2c/diffusion.hpp"
#include "d2c/eval.hpp"

#include <functional>
#include <limits>
#include <optional>

namespace d2c {

/// Everything needed to generate: networks, latent normalization and schedule.
class D2cModel {
 public:
  D2cModel() = default;

  explicit D2cModel(TrainConfig config) : config_(std::move(config)) {
    config_.validate();
    AutoencoderArch arch{config_.image, config_.latent_dim, config_.hidden};
    Rng r_enc = derive_rng(config_.seed, 0x1e7c);
    Rng r_dec = derive_rng(config_.seed, 0x1dec);
    Rng r_eps = derive_rng(config_.seed, 0x1e95);
    Rng r_crit = derive_rng(config_.seed, 0x1c71);
    encoder_ = Encoder(arch, r_enc);
    decoder_ = Decoder(arch, r_dec);
    predictor_ = NoisePredictor({config_.latent_dim, config_.predictor_hidden, config_.predictor_blocks,
                                 config_.predictor_embed},
                                r_eps);
    critic_ = Critic(config_.latent_dim, config_.proj_dim, config_.tau, r_crit);
    key_encoder_ = encoder_.params();
    stats_ = {RowVector::Zero(config_.latent_dim), RowVector::Ones(config_.latent_dim)};
    schedule_ = make_cumulative_schedule(config_.diffusion_steps, config_.beta_min, config_.beta_max);
  }

  const TrainConfig& config() const { return config_; }
  Encoder& encoder() { return encoder_; }
  const Encoder& encoder() const { return encoder_; }
  Decoder& decoder() { return decoder_; }
  const Decoder& decoder() const { return decoder_; }
  NoisePredictor& predictor() { return predictor_; }
  const NoisePredictor& predictor() const { return predictor_; }
  Critic& critic() { return critic_; }
  const Critic& critic() const { return critic_; }
  ad::ParameterTable& key_encoder() { return key_encoder_; }
  const ad::ParameterTable& key_encoder() const { return key_encoder_; }
  LatentStats& stats() { return stats_; }
  const LatentStats& stats() const { return stats_; }
  const AlphaSchedule& schedule() const { return schedule_; }
  long step() const { return step_; }
  void set_step(long s) { step_ = s; }
  int latent_dim() const { return config_.latent_dim; }
  const ImageShape& image_shape() const { return config_.image; }

  /// Normalized mean encodings.
  Matrix encode_latents(const Matrix& images) const {
    return normalize(encode(encoder_, images, nullptr), stats_);
  }

  Matrix decode_latents(const Matrix& normalized) const {
    return decode(decoder_, denormalize(normalized, stats_));
  }

  SamplerSpec sampler(int steps, SamplerKind kind = SamplerKind::ddim) const {
    return {kind, subsample(schedule_, static_cast<std::size_t>(steps))};
  }

  /// Normalized latents from the diffusion prior.
  Matrix sample_latents(int n, const SamplerSpec& spec, Rng& rng) const {
    return sample(predictor_, spec, n, config_.latent_dim, rng);
  }

  Matrix generate(int n, const SamplerSpec& spec, Rng& rng) const {
    return decode_latents(sample_latents(n, spec, rng));
  }

  TableSet tables() const {
    TableSet set;
    const std::string text = config_text(config_);
    set.add(vector_table("meta/step", {static_cast<double>(step_)}));
    set.add(vector_table("meta/config", std::vector<double>(text.begin(), text.end())));
    set.add_parameters("enc", encoder_.params());
    set.add_parameters("key", key_encoder_);
    set.add_parameters("dec", decoder_.params());
    set.add_parameters("eps", predictor_.params());
    set.add_parameters("critic", critic_.params());
    set.add(matrix_table("stats/mean", stats_.mean));
    set.add(matrix_table("stats/stddev", stats_.stddev));
    auto lv = schedule_.levels();
    set.add(vector_table("schedule/alpha", std::vector<double>(lv.begin(), lv.end())));
    return set;
  }

  static D2cModel from_tables(const TableSet& set) {
    const Table& cfg = set.at("meta/config");
    std::string text;
    for (double c : cfg.data) {
      require(c >= 0.0 && c < 256.0 && c == std::floor(c), Errc::corrupt_checkpoint, "checkpoint",
              "config echo is not text");
      text.push_back(static_cast<char>(static_cast<unsigned char>(c)));
    }
    D2cModel m(parse_config(text));
    const Table& step = set.at("meta/step");
    require(step.data.size() == 1, Errc::corrupt_checkpoint, "checkpoint", "bad step table");
    m.step_ = static_cast<long>(step.data[0]);
    set.restore_parameters("enc", m.encoder_.params());
    set.restore_parameters("key", m.key_encoder_);
    set.restore_parameters("dec", m.decoder_.params());
    set.restore_parameters("eps", m.predictor_.params());
    set.restore_parameters("critic", m.critic_.params());
    Matrix mean = table_matrix(set.at("stats/mean"));
    Matrix sd = table_matrix(set.at("stats/stddev"));
    require(mean.rows() == 1 && mean.cols() == m.latent_dim() && sd.rows() == 1 && sd.cols() == m.latent_dim(),
            Errc::table_mismatch, "checkpoint", "latent stats have the wrong width");
    m.stats_ = {mean.row(0), sd.row(0)};
    m.schedule_ = AlphaSchedule::from_levels(set.at("schedule/alpha").data);
    return m;
  }

 private:
  TrainConfig config_;
  Encoder encoder_;
  Decoder decoder_;
  NoisePredictor predictor_;
  Critic critic_;
  ad::ParameterTable key_encoder_;
  LatentStats stats_;
  AlphaSchedule schedule_;
  long step_ = 0;
};

inline std::vector<std::uint8_t> serialize_checkpoint(const D2cModel& m) { return serialize_tables(m.tables()); }

inline D2cModel deserialize_checkpoint(std::span<const std::uint8_t> bytes) {
  return D2cModel::from_tables(deserialize_tables(bytes));
}

inline void save_checkpoint(const std::filesystem::path& path, const D2cModel& m) {
  io::write_file(path, serialize_checkpoint(m));
}

inline D2cModel load_checkpoint(const std::filesystem::path& path) {
  return deserialize_checkpoint(io::read_file(path));
}

struct LossReport {
  double recon = 0.0;
  double diff = 0.0;
  double cpc = 0.0;
  double total = 0.0;
};

/// Optimizer state around a model.
class Trainer {
 public:
  explicit Trainer(D2cModel model)
      : model_(std::move(model)),
        weights_(model_.config().weights == WeightKind::uniform
                     ? uniform_weights(model_.schedule())
                     : variational_weights(model_.schedule(), model_.latent_dim())),
        queue_(static_cast<std::size_t>(model_.config().queue_size)) {
    const TrainConfig& c = model_.config();
    nn::AdamWConfig ac{c.learning_rate, c.beta1, c.beta2, c.adam_eps, c.weight_decay};
    enc_opt_ = nn::AdamW(model_.encoder().params(), ac);
    dec_opt_ = nn::AdamW(model_.decoder().params(), ac);
    eps_opt_ = nn::AdamW(model_.predictor().params(), ac);
    critic_opt_ = nn::AdamW(model_.critic().params(), ac);
    query_policy_ = c.query_augment ? AugmentationPolicy::desk_default() : AugmentationPolicy::identity();
    key_policy_ = c.key_augment ? AugmentationPolicy::desk_default() : AugmentationPolicy::identity();
  }

  D2cModel& model() { return model_; }
  const D2cModel& model() const { return model_; }

  /// Drops the contrastive term entirely (not even evaluated); used to compare
  /// against lambda = 0.
  void set_skip_contrastive(bool skip) { skip_contrastive_ = skip; }

  /// One joint gradient step on L_recon + L_diff + lambda L_CPC. Per-image
  /// randomness comes from streams derived from one draw of `rng`.
  LossReport train_step(const Matrix& batch, Rng& rng) {
    const TrainConfig& c = model_.config();
    const ImageShape& shape = model_.image_shape();
    require(batch.rows() >= 2, Errc::invalid_parameter, "trainer", "batch needs at least two images");
    require(batch.cols() == shape.size(), Errc::shape_mismatch, "trainer", "batch does not match image shape");
    const std::uint64_t base = rng();
    const Eigen::Index m = batch.rows();
    const int k = model_.latent_dim();

    Matrix queries = batch, keys_in = batch;
    for (Eigen::Index i = 0; i < m; ++i) {
      Rng rq = derive_rng(base, static_cast<std::uint64_t>(i), 1);
      Rng rk = derive_rng(base, static_cast<std::uint64_t>(i), 2);
      if (c.query_augment) queries.row(i) = augment(batch.row(i), shape, query_policy_, rq);
      if (c.key_augment) keys_in.row(i) = augment(batch.row(i), shape, key_policy_, rk);
    }
    Rng r_latent = derive_rng(base, 0, 3);
    Rng r_diff = derive_rng(base, 0, 4);

    model_.encoder().params().zero_grad();
    model_.decoder().params().zero_grad();
    model_.predictor().params().zero_grad();
    model_.critic().params().zero_grad();

    ad::Tape tape;
    Encoder::Output q = model_.encoder().forward(tape, tape.constant(queries));
    Matrix eps = gaussian_matrix(m, k, r_latent);
    ad::Var z = ad::add(q.mean, ad::hadamard(ad::exp(ad::scale(q.logvar, 0.5)), tape.constant(std::move(eps))));
    ad::Var recon = reconstruction_loss_node(tape, model_.decoder(), batch, z, c.sigma_pix);

    const LatentStats& st = model_.stats();
    Matrix inv_sd = st.stddev.cwiseInverse().replicate(m, 1);
    ad::Var zn = ad::hadamard(ad::add_row(z, tape.constant(-st.mean)), tape.constant(std::move(inv_sd)));
    ad::Var diff = diffusion_loss_node(tape, model_.predictor(), zn, model_.schedule(), weights_, r_diff);

    Matrix keys;
    ad::Var cpc = tape.constant(Matrix::Zero(1, 1));
    if (!skip_contrastive_) {
      keys = model_.encoder().evaluate_with(model_.key_encoder(), keys_in).mean;
      Matrix stored;
      if (queue_.size() > 0) stored = model_.critic().project(queue_.contents());
      cpc = cpc_loss_in_batch(tape, model_.critic(), z, tape.constant(keys), queue_.size() > 0 ? &stored : nullptr);
    }
    ad::Var total = ad::add(ad::add(recon, diff), ad::scale(cpc, c.lambda));

    LossReport report{tape.scalar(recon), tape.scalar(diff), tape.scalar(cpc), tape.scalar(total)};
    require(std::isfinite(report.recon), Errc::non_finite, "trainer",
            "reconstruction loss is not finite at step " + std::to_string(model_.step()));
    require(std::isfinite(report.diff), Errc::non_finite, "trainer",
            "diffusion loss is not finite at step " + std::to_string(model_.step()));
    require(std::isfinite(report.cpc), Errc::non_finite, "trainer",
            "contrastive loss is not finite at step " + std::to_string(model_.step()));
    tape.backward(total);

    enc_opt_.step(model_.encoder().params());
    dec_opt_.step(model_.decoder().params());
    eps_opt_.step(model_.predictor().params());
    critic_opt_.step(model_.critic().params());
    momentum_update(model_.key_encoder(), model_.encoder().params(), c.momentum);
    if (!skip_contrastive_) queue_.push(keys);
    model_.set_step(model_.step() + 1);
    return report;
  }

  /// Diffusion-only step on fixed latents (the encoder is not touched).
  double prior_step(const Matrix& normalized_latents, Rng& rng) {
    if (prior_opt_.steps() == 0 && !prior_opt_ready_) {
      const TrainConfig& c = model_.config();
      prior_opt_ = nn::AdamW(model_.predictor().params(),
                             {c.prior_learning_rate, c.beta1, c.beta2, c.adam_eps, c.weight_decay});
      prior_opt_ready_ = true;
    }
    model_.predictor().params().zero_grad();
    DiffusionLoss l = diffusion_loss(model_.predictor(), normalized_latents, model_.schedule(), weights_, rng);
    prior_opt_.step(model_.predictor().params());
    return l.loss;
  }

 private:
  D2cModel model_;
  WeightFunction weights_;
  NegativeStore queue_;
  nn::AdamW enc_opt_, dec_opt_, eps_opt_, critic_opt_, prior_opt_;
  bool prior_opt_ready_ = false;
  AugmentationPolicy query_policy_, key_policy_;
  bool skip_contrastive_ = false;
};

// ---------------------------------------------------------------------------
// Outer loop

struct MetricsRow {
  int epoch = 0;
  LossReport loss;
  double probe_acc = std::numeric_limits<double>::quiet_NaN();
  double fid = std::numeric_limits<double>::quiet_NaN();
};

struct PriorRow {
  int epoch = 0;
  double diff = 0.0;
};

namespace detail {

inline std::string csv_number(double v) { return std::isnan(v) ? "nan" : format_double(v); }

}  // namespace detail

inline std::string metrics_csv(const std::vector<MetricsRow>& rows) {
  std::string out = "epoch,recon,diff,cpc,total,probe_acc,fid\n";
  for (const auto& r : rows)
    out += std::to_string(r.epoch) + "," + detail::csv_number(r.loss.recon) + "," + detail::csv_number(r.loss.diff) +
           "," + detail::csv_number(r.loss.cpc) + "," + detail::csv_number(r.loss.total) + "," +
           detail::csv_number(r.probe_acc) + "," + detail::csv_number(r.fid) + "\n";
  return out;
}

inline std::string prior_csv(const std::vector<PriorRow>& rows) {
  std::string out = "epoch,diff\n";
  for (const auto& r : rows) out += std::to_string(r.epoch) + "," + detail::csv_number(r.diff) + "\n";
  return out;
}

/// Training split (leading rows) and held-out split (trailing `holdout` rows).
struct DataSplit {
  TensorArchive train;
  TensorArchive heldout;
};

inline TensorArchive slice_archive(const TensorArchive& a, Eigen::Index start, Eigen::Index count) {
  TensorArchive out;
  out.shape = a.shape;
  out.images = a.images.middleRows(start, count);
  out.attribute_names = a.attribute_names;
  out.attributes = a.attributes.middleRows(start, count);
  return out;
}

inline DataSplit split_archive(const TensorArchive& a, std::size_t holdout) {
  const auto n = a.count();
  const auto h = static_cast<Eigen::Index>(std::min<std::size_t>(holdout, static_cast<std::size_t>(n)));
  return {slice_archive(a, 0, n - h), slice_archive(a, n - h, h)};
}

inline TensorArchive load_dataset(const TrainConfig& c) {
  if (c.dataset == "synthetic") return generate_synthetic(c.synthetic_spec(), c.threads);
  const std::filesystem::path p(c.dataset);
  const std::string name = p.filename().string();
  TensorArchive a = (p.extension() == ".idx" || name.find("idx") != std::string::npos) ? load_idx(p) : load_archive(p);
  require(a.shape == c.image, Errc::shape_mismatch, "trainer",
          "dataset images are " + std::to_string(a.shape.height) + "x" + std::to_string(a.shape.width) + "x" +
              std::to_string(a.shape.channels) + " but the config declares another shape");
  return a;
}

/// Indices of up to n/2 positives and n/2 negatives, chosen at random.
inline std::vector<Eigen::Index> balanced_subset(std::span<const int> labels, int n, Rng& rng) {
  std::vector<Eigen::Index> pos, neg;
  for (std::size_t i = 0; i < labels.size(); ++i) (labels[i] ? pos : neg).push_back(static_cast<Eigen::Index>(i));
  std::shuffle(pos.begin(), pos.end(), rng);
  std::shuffle(neg.begin(), neg.end(), rng);
  const auto half = static_cast<std::size_t>(n / 2);
  pos.resize(std::min(pos.size(), half));
  neg.resize(std::min(neg.size(), static_cast<std::size_t>(n) - pos.size()));
  pos.insert(pos.end(), neg.begin(), neg.end());
  return pos;
}

inline Matrix gather_rows(const Matrix& m, std::span<const Eigen::Index> idx) {
  Matrix out(static_cast<Eigen::Index>(idx.size()), m.cols());
  for (std::size_t i = 0; i < idx.size(); ++i) out.row(static_cast<Eigen::Index>(i)) = m.row(idx[i]);
  return out;
}

/// Probe accuracy with `n_labels` balanced training labels from `train`,
/// scored on `heldout`. NaN when the attribute or a class is missing.
inline double probe_accuracy(const D2cModel& model, const TensorArchive& train, const TensorArchive& heldout,
                             const AttributeQuery& query, int n_labels, Rng& rng) {
  if (n_labels < 2 || heldout.count() == 0 || train.attribute_names.empty()) return std::nan("");
  std::vector<int> labels = query.labels(train);
  auto idx = balanced_subset(labels, n_labels, rng);
  std::vector<int> y;
  for (auto i : idx) y.push_back(labels[static_cast<std::size_t>(i)]);
  const auto positives = std::count(y.begin(), y.end(), 1);
  if (positives == 0 || positives == static_cast<long>(y.size())) return std::nan("");
  Matrix z = model.encode_latents(gather_rows(train.images, idx));
  std::vector<int> test = query.labels(heldout);
  return linear_probe(z, y, model.encode_latents(heldout.images), test);
}

struct TrainResult {
  D2cModel model;
  std::vector<MetricsRow> metrics;
  std::vector<PriorRow> prior;
};

struct TrainHooks {
  std::function<void(const MetricsRow&)> on_epoch;
  std::function<void(const PriorRow&)> on_prior_epoch;
};

inline void refit_stats(D2cModel& model, const Matrix& images) {
  model.stats() = fit_latent_stats(encode(model.encoder(), images, nullptr));
}

template <typename Fn>
void for_each_batch(Eigen::Index n, int batch_size, std::uint64_t seed, std::uint64_t tag, Fn&& fn) {
  std::vector<Eigen::Index> order(static_cast<std::size_t>(n));
  std::iota(order.begin(), order.end(), Eigen::Index{0});
  Rng shuffle = derive_rng(seed, 0x0bd3, tag);
  std::shuffle(order.begin(), order.end(), shuffle);
  for (std::size_t start = 0; start + 2 <= order.size(); start += static_cast<std::size_t>(batch_size)) {
    const std::size_t end = std::min(order.size(), start + static_cast<std::size_t>(batch_size));
    fn(std::span<const Eigen::Index>(order.data() + start, end - start));
  }
}

inline TrainResult train(const TrainConfig& config, const TensorArchive& data, const TrainHooks& hooks = {}) {
  config.validate();
  DataSplit split = split_archive(data, config.holdout);
  require(split.train.count() >= config.batch_size, Errc::invalid_parameter, "trainer",
          "training split is smaller than one batch");
  Trainer trainer{D2cModel(config)};
  D2cModel& model = trainer.model();

  std::optional<AttributeQuery> query;
  if (!split.train.attribute_names.empty() && config.probe_labels > 0) {
    query = AttributeQuery::parse(config.probe_attribute);
    split.train.column(query->name);
  }
  std::optional<FeatureExtractor> extractor;
  if (config.fid_every > 0) {
    require(split.heldout.count() >= kMinFidImages, Errc::invalid_parameter, "trainer",
            "toy FID needs a held-out split of at least 100 images");
    extractor = FeatureExtractor::fit(split.train, {.seed = config.seed});
  }

  TrainResult result;
  const Matrix& x = split.train.images;
  for (int epoch = 1; epoch <= config.epochs; ++epoch) {
    refit_stats(model, x);
    LossReport sum;
    int batches = 0;
    for_each_batch(x.rows(), config.batch_size, config.seed, static_cast<std::uint64_t>(epoch),
                   [&](std::span<const Eigen::Index> idx) {
                     Rng r = derive_rng(config.seed, 0x57e9, static_cast<std::uint64_t>(model.step()));
                     LossReport l = trainer.train_step(gather_rows(x, idx), r);
                     sum.recon += l.recon;
                     sum.diff += l.diff;
                     sum.cpc += l.cpc;
                     sum.total += l.total;
                     ++batches;
                   });
    MetricsRow row;
    row.epoch = epoch;
    row.loss = {sum.recon / batches, sum.diff / batches, sum.cpc / batches, sum.total / batches};
    if (query) {
      Rng r = derive_rng(config.seed, 0x9be, static_cast<std::uint64_t>(epoch));
      row.probe_acc = probe_accuracy(model, split.train, split.heldout, *query, config.probe_labels, r);
    }
    if (extractor && epoch % config.fid_every == 0) {
      Rng r = derive_rng(config.seed, 0xf1d, static_cast<std::uint64_t>(epoch));
      Matrix gen = model.generate(config.fid_samples, model.sampler(config.fid_steps), r);
      row.fid = toy_fid(*extractor, split.heldout.images, gen);
    }
    result.metrics.push_back(row);
    if (hooks.on_epoch) hooks.on_epoch(row);
  }

  if (config.prior_epochs > 0) {
    refit_stats(model, x);
    const Encoder::Values enc = model.encoder().evaluate(x);
    for (int epoch = 1; epoch <= config.prior_epochs; ++epoch) {
      double sum = 0.0;
      int batches = 0;
      for_each_batch(x.rows(), config.batch_size, config.seed, 0x10000u + static_cast<std::uint64_t>(epoch),
                     [&](std::span<const Eigen::Index> idx) {
                       Rng r = derive_rng(config.seed, 0x9a10, static_cast<std::uint64_t>(model.step()));
                       Matrix mean = gather_rows(enc.mean, idx);
                       Matrix logvar = gather_rows(enc.logvar, idx);
                       Matrix z = mean + ((0.5 * logvar).array().exp() *
                                          gaussian_matrix(mean.rows(), mean.cols(), r).array())
                                             .matrix();
                       sum += trainer.prior_step(normalize(z, model.stats()), r);
                       ++batches;
                       model.set_step(model.step() + 1);
                     });
      PriorRow row{epoch, sum / batches};
      result.prior.push_back(row);
      if (hooks.on_prior_epoch) hooks.on_prior_epoch(row);
    }
  }
  result.model = std::move(model);
  return result;
}

inline TrainResult train(const TrainConfig& config, const TrainHooks& hooks = {}) {
  return train(config, load_dataset(config), hooks);
}

}  // namespace d2c
