#pragma once

// Batch command line: every subcommand writes its outputs into --out.
// Exit codes: 0 success, 2 usage error, 1 runtime error.

#include "d2c/conditional.hpp"
#include "d2c/priorhole.hpp"

#include <CLI11.hpp>

#include <filesystem>
#include <iostream>
#include <map>
#include <optional>

namespace d2c::cli {

namespace fs = std::filesystem;

struct UsageError : std::runtime_error {
  using std::runtime_error::runtime_error;
};

struct Common {
  std::string config;
  std::optional<std::uint64_t> seed;
  std::string out;
  bool force = false;
  int threads = 1;
};

namespace detail {

inline void add_common(CLI::App* sub, Common& c) {
  sub->add_option("--config", c.config, "config file (key = value lines)");
  sub->add_option("--seed", c.seed, "random seed");
  sub->add_option("--out", c.out, "output directory")->required();
  sub->add_flag("--force", c.force, "reuse an existing output directory");
  sub->add_option("--threads", c.threads, "worker cap")->check(CLI::PositiveNumber);
}

inline fs::path prepare_out(const Common& c) {
  const fs::path dir(c.out);
  if (fs::exists(dir) && !c.force)
    throw UsageError("output directory '" + c.out + "' exists; pass --force to reuse it");
  std::error_code ec;
  fs::create_directories(dir, ec);
  require(!ec && fs::is_directory(dir), Errc::io_error, "cli", "cannot create '" + c.out + "'");
  return dir;
}

inline TrainConfig load_config(const Common& c) {
  TrainConfig cfg = c.config.empty() ? TrainConfig{} : parse_config(io::read_text(c.config));
  if (c.seed) cfg.seed = *c.seed;
  cfg.threads = c.threads;
  cfg.validate();
  return cfg;
}

inline std::uint64_t run_seed(const Common& c) { return c.seed.value_or(0); }

inline SamplerKind sampler_kind(const std::string& s) { return s == "ddpm" ? SamplerKind::ddpm : SamplerKind::ddim; }

inline std::string num(double v) { return ::d2c::detail::csv_number(v); }

/// Dataset the checkpoint was trained on, split the same way.
inline DataSplit model_split(const D2cModel& m) {
  return split_archive(load_dataset(m.config()), m.config().holdout);
}

inline TensorArchive input_images(const std::string& path) {
  const fs::path p(path);
  const std::string name = p.filename().string();
  return (p.extension() == ".idx" || name.find("idx") != std::string::npos) ? load_idx(p) : load_archive(p);
}

struct LabelSource {
  std::string label;
  std::string labels_file;
  int shots = 100;
  bool pu = false;
};

/// Labels for the training split: an index,label file when given, otherwise
/// the archive's attribute table.
inline std::vector<int> train_labels(const TensorArchive& train, const AttributeQuery& q, const std::string& file) {
  if (file.empty()) return q.labels(train);
  std::vector<int> y(static_cast<std::size_t>(train.count()), -1);
  for (const auto& [i, l] : parse_labels(io::read_text(file))) {
    require(i < y.size(), Errc::invalid_parameter, "cli", "label index " + std::to_string(i) + " is out of range");
    y[i] = l == q.value ? 1 : 0;
  }
  return y;
}

/// Few-shot latent classifier: balanced logistic fit, or PU fit from
/// positives against the whole training split.
inline LatentClassifier fit_label_classifier(const D2cModel& m, const TensorArchive& train, const LabelSource& src,
                                             Rng& rng) {
  const AttributeQuery q = AttributeQuery::parse(src.label);
  std::vector<int> y = train_labels(train, q, src.labels_file);
  if (src.pu) {
    std::vector<Eigen::Index> pos;
    for (std::size_t i = 0; i < y.size() && static_cast<int>(pos.size()) < src.shots; ++i)
      if (y[i] == 1) pos.push_back(static_cast<Eigen::Index>(i));
    return fit_pu_classifier(m.encode_latents(gather_rows(train.images, pos)), m.encode_latents(train.images), rng);
  }
  std::vector<int> known;
  std::vector<Eigen::Index> rows;
  for (std::size_t i = 0; i < y.size(); ++i)
    if (y[i] >= 0) {
      known.push_back(y[i]);
      rows.push_back(static_cast<Eigen::Index>(i));
    }
  auto idx = balanced_subset(known, src.shots, rng);
  std::vector<int> yy;
  std::vector<Eigen::Index> picked;
  for (auto i : idx) {
    yy.push_back(known[static_cast<std::size_t>(i)]);
    picked.push_back(rows[static_cast<std::size_t>(i)]);
  }
  return fit_classifier(m.encode_latents(gather_rows(train.images, picked)), yy);
}

inline void write_grid(const fs::path& path, const Matrix& images, const ImageShape& shape, Eigen::Index max_rows = 64) {
  io::write_file(path, ppm_grid(images.topRows(std::min(max_rows, images.rows())), shape));
}

}  // namespace detail

// ---------------------------------------------------------------------------
// subcommands

inline int cmd_gen_data(const Common& c, std::size_t n, std::ostream& out) {
  TrainConfig cfg = detail::load_config(c);
  SyntheticSpec spec = cfg.synthetic_spec();
  if (c.seed) spec.seed = *c.seed;
  if (n > 0) spec.count = n;
  const fs::path dir = detail::prepare_out(c);
  TensorArchive a = generate_synthetic(spec, c.threads);
  save_archive(dir / "data.d2cd", a);
  detail::write_grid(dir / "preview.ppm", a.images, a.shape);
  out << "wrote " << a.count() << " images to " << (dir / "data.d2cd").string() << "\n";
  return 0;
}

inline int cmd_train(const Common& c, std::ostream& out) {
  TrainConfig cfg = detail::load_config(c);
  const fs::path dir = detail::prepare_out(c);
  io::write_text(dir / "config.cfg", config_text(cfg));
  TrainHooks hooks;
  hooks.on_epoch = [&](const MetricsRow& r) {
    out << "epoch " << r.epoch << " recon " << r.loss.recon << " diff " << r.loss.diff << " cpc " << r.loss.cpc
        << " total " << r.loss.total << " probe " << r.probe_acc << "\n";
  };
  hooks.on_prior_epoch = [&](const PriorRow& r) {
    if (r.epoch % 25 == 0 || r.epoch == cfg.prior_epochs) out << "prior epoch " << r.epoch << " diff " << r.diff << "\n";
  };
  TrainResult res = train(cfg, hooks);
  io::write_text(dir / "metrics.csv", metrics_csv(res.metrics));
  io::write_text(dir / "prior_metrics.csv", prior_csv(res.prior));
  save_checkpoint(dir / "model.ckpt", res.model);
  Rng rng = derive_rng(cfg.seed, 0x5a3e);
  detail::write_grid(dir / "samples.ppm", res.model.generate(64, res.model.sampler(50), rng), cfg.image);
  out << "checkpoint " << (dir / "model.ckpt").string() << "\n";
  return 0;
}

inline int cmd_sample(const Common& c, const std::string& ckpt, int n, int steps, const std::string& sampler,
                      std::ostream& out) {
  D2cModel m = load_checkpoint(ckpt);
  const fs::path dir = detail::prepare_out(c);
  Rng rng = derive_rng(detail::run_seed(c), 0x5a3e);
  TensorArchive a;
  a.shape = m.image_shape();
  a.images = m.generate(n, m.sampler(steps, detail::sampler_kind(sampler)), rng);
  a.attributes.resize(a.images.rows(), 0);
  save_archive(dir / "samples.d2cd", a);
  detail::write_grid(dir / "samples.ppm", a.images, a.shape);
  out << "wrote " << n << " samples (" << sampler << ", " << steps << " steps)\n";
  return 0;
}

inline int cmd_invert(const Common& c, const std::string& ckpt, const std::string& data, int n, int steps,
                      std::ostream& out) {
  D2cModel m = load_checkpoint(ckpt);
  TensorArchive src = data.empty() ? detail::model_split(m).heldout : detail::input_images(data);
  require(src.shape == m.image_shape(), Errc::shape_mismatch, "cli", "images do not match the checkpoint");
  const fs::path dir = detail::prepare_out(c);
  const Matrix x = src.images.topRows(std::min<Eigen::Index>(n, src.count()));
  const SamplerSpec spec = m.sampler(steps);
  const Matrix z = m.encode_latents(x);
  const Matrix noise = ddim_invert(m.predictor(), spec.schedule, z);
  const Matrix back = sample_from(m.predictor(), spec, noise);

  std::string csv = "index,noise_norm,roundtrip_rel_error\n";
  double worst = 0.0;
  for (Eigen::Index i = 0; i < z.rows(); ++i) {
    const double rel = (back.row(i) - z.row(i)).norm() / std::max(z.row(i).norm(), 1e-12);
    worst = std::max(worst, rel);
    csv += std::to_string(i) + "," + detail::num(noise.row(i).norm()) + "," + detail::num(rel) + "\n";
  }
  io::write_text(dir / "invert.csv", csv);
  std::string lat;
  for (Eigen::Index i = 0; i < noise.rows(); ++i) {
    for (Eigen::Index j = 0; j < noise.cols(); ++j) lat += (j ? "," : "") + detail::num(noise(i, j));
    lat += "\n";
  }
  io::write_text(dir / "noise.csv", lat);
  const Eigen::Index k = std::min<Eigen::Index>(x.rows(), 16);
  Matrix grid(3 * k, x.cols());
  grid << x.topRows(k), m.decode_latents(z.topRows(k)), m.decode_latents(back.topRows(k));
  io::write_file(dir / "roundtrip.ppm", ppm_grid(grid, m.image_shape(), static_cast<int>(k)));
  out << "max roundtrip relative error " << worst << "\n";
  return 0;
}

inline int cmd_condition(const Common& c, const std::string& ckpt, const detail::LabelSource& src, int n,
                         int steps, const std::string& mode, std::ostream& out) {
  D2cModel m = load_checkpoint(ckpt);
  const fs::path dir = detail::prepare_out(c);
  const std::uint64_t seed = detail::run_seed(c);
  DataSplit split = detail::model_split(m);
  Rng fit_rng = derive_rng(seed, 0xc1f);
  LatentClassifier clf = detail::fit_label_classifier(m, split.train, src, fit_rng);
  save_tables(dir / "classifier.tbl", classifier_tables(clf));

  RejectionOptions opt;
  opt.threads = c.threads;
  Rng rng = derive_rng(seed, 0xc0d);
  const AcceptMode am = mode == "bernoulli" ? AcceptMode::bernoulli : AcceptMode::threshold;
  ConditionalSamples cs = conditional_sample(m, clf, 1, static_cast<std::size_t>(n), rng, am, steps, opt);
  Rng base_rng = derive_rng(seed, 0xba5e);
  const Matrix plain = m.generate(n, m.sampler(steps), base_rng);

  const AttributeQuery q = AttributeQuery::parse(src.label);
  const double p_cond = purity(cs.images, m.image_shape(), q);
  const double p_plain = purity(plain, m.image_shape(), q);
  TensorArchive a;
  a.shape = m.image_shape();
  a.images = cs.images;
  a.attributes.resize(a.images.rows(), 0);
  save_archive(dir / "samples.d2cd", a);
  detail::write_grid(dir / "samples.ppm", cs.images, a.shape);
  const std::string line = "purity " + detail::num(p_cond) + " unconditional " + detail::num(p_plain) +
                           " acceptance " + detail::num(cs.stats.rate()) + " proposed " +
                           std::to_string(cs.stats.proposed) + "\n";
  io::write_text(dir / "report.txt", "label " + src.label + "\nmode " + mode + "\n" + line);
  out << line;
  return 0;
}

inline int cmd_manipulate(const Common& c, const std::string& ckpt, const detail::LabelSource& src, int n,
                          std::optional<double> eta, double alpha, int denoise_steps, bool any_alpha,
                          std::ostream& out) {
  D2cModel m = load_checkpoint(ckpt);
  ManipulationSpec spec = ManipulationSpec::defaults(m.latent_dim());
  if (eta) spec.eta = *eta;
  spec.alpha = alpha;
  spec.denoise_steps = denoise_steps;
  spec.allow_any_alpha = any_alpha;
  spec.validate();
  const fs::path dir = detail::prepare_out(c);
  const std::uint64_t seed = detail::run_seed(c);
  DataSplit split = detail::model_split(m);
  Rng fit_rng = derive_rng(seed, 0xc1f);
  LatentClassifier clf = detail::fit_label_classifier(m, split.train, src, fit_rng);
  save_tables(dir / "classifier.tbl", classifier_tables(clf));

  // sources: held-out images that do not carry the label yet
  const AttributeQuery q = AttributeQuery::parse(src.label);
  std::vector<int> y = q.labels(split.heldout);
  std::vector<Eigen::Index> rows;
  for (std::size_t i = 0; i < y.size() && static_cast<int>(rows.size()) < n; ++i)
    if (y[i] == 0) rows.push_back(static_cast<Eigen::Index>(i));
  require(!rows.empty(), Errc::empty_split, "cli", "no held-out images lack the label");
  const Matrix x = gather_rows(split.heldout.images, rows);
  Rng rng = derive_rng(seed, 0x3a1);
  ManipulationResult r = manipulate(m, clf, spec, x, rng);

  std::string csv = "index,score_before,score_after,displacement,pixel_distance,has_label\n";
  int up = 0, flipped = 0;
  for (Eigen::Index i = 0; i < x.rows(); ++i) {
    const bool has = q.holds(read_attributes(r.images.row(i), m.image_shape()));
    up += r.score_after(i) >= r.score_before(i);
    flipped += has;
    csv += std::to_string(rows[static_cast<std::size_t>(i)]) + "," + detail::num(r.score_before(i)) + "," +
           detail::num(r.score_after(i)) + "," + detail::num(r.displacement(i)) + "," +
           detail::num((r.images.row(i) - x.row(i)).norm()) + "," + (has ? "1" : "0") + "\n";
  }
  io::write_text(dir / "manipulate.csv", csv);
  const Eigen::Index k = std::min<Eigen::Index>(x.rows(), 32);
  Matrix pairs(2 * k, x.cols());
  for (Eigen::Index i = 0; i < k; ++i) {
    pairs.row(2 * i) = x.row(i);
    pairs.row(2 * i + 1) = r.images.row(i);
  }
  detail::write_grid(dir / "manipulate.ppm", pairs, m.image_shape());
  const double total = static_cast<double>(x.rows());
  out << "score increased " << detail::num(up / total) << " label present " << detail::num(flipped / total) << "\n";
  return 0;
}

inline int cmd_eval(const Common& c, const std::string& ckpt, std::vector<int> steps, int n,
                    const std::string& sampler, std::ostream& out) {
  D2cModel m = load_checkpoint(ckpt);
  const fs::path dir = detail::prepare_out(c);
  const std::uint64_t seed = detail::run_seed(c);
  DataSplit split = detail::model_split(m);
  require(split.heldout.count() >= kMinFidImages, Errc::invalid_parameter, "cli",
          "toy FID needs a held-out split of at least 100 images");
  FeatureExtractor fx = FeatureExtractor::fit(split.train, {.seed = m.config().seed});
  const Matrix& real = split.heldout.images;

  Rng noise_rng = derive_rng(seed, 0xe7a1);
  const Matrix z0 = gaussian_matrix(n, m.latent_dim(), noise_rng);
  std::string csv = "steps,sampler,toy_fid\n";
  for (int s : steps) {
    Rng r = derive_rng(seed, 0xe7a2, static_cast<std::uint64_t>(s));
    const SamplerSpec spec = m.sampler(s, detail::sampler_kind(sampler));
    const Matrix g = m.decode_latents(sample_from(m.predictor(), spec, z0, &r));
    const double fid = toy_fid(fx, real, g);
    csv += std::to_string(s) + "," + sampler + "," + detail::num(fid) + "\n";
    out << "steps " << s << " toy_fid " << fid << "\n";
  }
  io::write_text(dir / "eval.csv", csv);

  const Eigen::Index half = std::min(split.train.count(), real.rows());
  const double floor = toy_fid(fx, real, split.train.images.topRows(half));
  Rng u_rng = derive_rng(seed, 0xe7a3);
  Matrix uniform(real.rows(), real.cols());
  for (Eigen::Index i = 0; i < uniform.rows(); ++i)
    for (Eigen::Index j = 0; j < uniform.cols(); ++j) uniform(i, j) = uniform01(u_rng);
  const double noise_fid = toy_fid(fx, real, uniform);
  const Matrix recon = m.decode_latents(m.encode_latents(real));
  const double mse = (recon - real).squaredNorm() / static_cast<double>(real.size());
  Rng probe_rng = derive_rng(seed, 0x9be);
  const double probe = probe_accuracy(m, split.train, split.heldout, AttributeQuery::parse(m.config().probe_attribute),
                                      std::max(m.config().probe_labels, 2), probe_rng);
  io::write_text(dir / "summary.csv", "metric,value\nnoise_floor," + detail::num(floor) + "\nuniform_noise_fid," +
                                          detail::num(noise_fid) + "\nrecon_mse," + detail::num(mse) +
                                          "\nprobe_acc," + detail::num(probe) + "\n");
  out << "noise floor " << floor << " recon mse " << mse << " probe " << probe << "\n";
  return 0;
}

inline int cmd_priorhole(const Common& c, const std::vector<double>& deltas, const std::vector<int>& ns,
                         const std::vector<double>& alphas, int dim, std::ostream& out) {
  for (double a : alphas)
    if (!(a > 0.0 && a <= 1.0)) throw UsageError("--alpha values must lie in (0, 1]");
  if (dim == 2)
    for (double a : alphas)
      if (a != 1.0) throw UsageError("noised quantities are one-dimensional; use --dim 1 with --alpha");
  std::string csv = "delta,n,d,alpha,p_mass,q_mass,kl,w2,w2_bound,noised_kl,noised_q_mass\n";
  for (double delta : deltas)
    for (int n : ns) {
      const RingConstruction rc = build_rings(delta, n, dim);
      const HoleReport r = hole_report(rc);
      for (double a : alphas) {
        double nkl = std::nan(""), nq = std::nan("");
        if (dim == 1) {
          nkl = noised_hole_kl(rc, a);
          nq = noised_hole_masses(rc, a).noised;
        }
        csv += detail::num(delta) + "," + std::to_string(n) + "," + std::to_string(dim) + "," + detail::num(a) + "," +
               detail::num(r.p_mass) + "," + detail::num(r.q_mass) + "," + detail::num(r.kl) + "," +
               detail::num(r.w2) + "," + detail::num(r.w2_bound) + "," + detail::num(nkl) + "," + detail::num(nq) +
               "\n";
      }
    }
  const fs::path dir = detail::prepare_out(c);
  io::write_text(dir / "priorhole.csv", csv);
  out << csv;
  return 0;
}

// ---------------------------------------------------------------------------

inline int run(int argc, const char* const* argv, std::ostream& out = std::cout, std::ostream& err = std::cerr) {
  CLI::App app{"Latent diffusion autoencoder toolkit", "d2c"};
  app.require_subcommand(1);
  app.set_help_all_flag("--help-all");

  Common common;
  std::string ckpt, sampler = "ddim", mode = "threshold", data;
  int steps = 50, n = 64, denoise_steps = 5, dim = 1;
  std::size_t count = 0;
  std::optional<double> eta;
  double alpha = 0.9;
  bool any_alpha = false;
  detail::LabelSource labels;
  std::vector<double> deltas{0.49}, alphas{1.0};
  std::vector<int> ring_counts{1, 2, 4, 8}, step_list{10, 100};
  const auto sampler_check = CLI::IsMember({"ddpm", "ddim"});

  auto* gen = app.add_subcommand("gen-data", "render a synthetic attribute dataset");
  detail::add_common(gen, common);
  gen->add_option("--n", count, "image count (default from config)");

  auto* tr = app.add_subcommand("train", "train autoencoder, prior and critic jointly");
  detail::add_common(tr, common);

  auto* sa = app.add_subcommand("sample", "unconditional samples from a checkpoint");
  detail::add_common(sa, common);
  sa->add_option("--ckpt", ckpt, "checkpoint")->required()->check(CLI::ExistingFile);
  sa->add_option("--n", n, "sample count")->check(CLI::PositiveNumber);
  sa->add_option("--steps", steps, "sampler steps")->check(CLI::PositiveNumber);
  sa->add_option("--sampler", sampler, "ddpm or ddim")->check(sampler_check);

  auto* inv = app.add_subcommand("invert", "DDIM-invert encoded images to noise and back");
  detail::add_common(inv, common);
  inv->add_option("--ckpt", ckpt, "checkpoint")->required()->check(CLI::ExistingFile);
  inv->add_option("--data", data, "image archive or IDX file (default: held-out split)")->check(CLI::ExistingFile);
  inv->add_option("--n", n, "image count")->check(CLI::PositiveNumber);
  inv->add_option("--steps", steps, "sampler steps")->check(CLI::PositiveNumber);

  auto add_labels = [&](CLI::App* sub) {
    sub->add_option("--label", labels.label, "target attribute, e.g. hue=warm")->required();
    sub->add_option("--labels", labels.labels_file, "index,label CSV for the training split")
        ->check(CLI::ExistingFile);
    sub->add_option("--shots", labels.shots, "labeled examples for the classifier")->check(CLI::Range(2, 1 << 30));
    sub->add_flag("--pu", labels.pu, "fit from positives and unlabeled data");
  };

  auto* co = app.add_subcommand("condition", "label-conditioned samples by rejection");
  detail::add_common(co, common);
  co->add_option("--ckpt", ckpt, "checkpoint")->required()->check(CLI::ExistingFile);
  add_labels(co);
  co->add_option("--n", n, "sample count")->check(CLI::PositiveNumber);
  co->add_option("--steps", steps, "sampler steps")->check(CLI::PositiveNumber);
  co->add_option("--mode", mode, "threshold or bernoulli")->check(CLI::IsMember({"threshold", "bernoulli"}));

  auto* ma = app.add_subcommand("manipulate", "push held-out images toward a label");
  detail::add_common(ma, common);
  ma->add_option("--ckpt", ckpt, "checkpoint")->required()->check(CLI::ExistingFile);
  add_labels(ma);
  ma->add_option("--n", n, "source image count")->check(CLI::PositiveNumber);
  ma->add_option("--eta", eta, "latent step length (default 0.5 sqrt(latent_dim))");
  ma->add_option("--alpha", alpha, "noise level for the diffuse-denoise pass");
  ma->add_option("--denoise-steps", denoise_steps, "DDIM steps back to alpha = 1")->check(CLI::PositiveNumber);
  ma->add_flag("--allow-any-alpha", any_alpha, "accept alpha outside [0.65, 0.9]");

  auto* ph = app.add_subcommand("priorhole", "ring construction sweep");
  detail::add_common(ph, common);
  ph->add_option("--delta", deltas, "hole masses")->delimiter(',');
  ph->add_option("--n", ring_counts, "ring-pair counts")->delimiter(',')->check(CLI::PositiveNumber);
  ph->add_option("--alpha", alphas, "noise levels")->delimiter(',');
  ph->add_option("--dim", dim, "dimension")->check(CLI::IsMember({1, 2}));

  auto* ev = app.add_subcommand("eval", "toy FID versus sampler steps, reconstruction and probe");
  detail::add_common(ev, common);
  ev->add_option("--ckpt", ckpt, "checkpoint")->required()->check(CLI::ExistingFile);
  ev->add_option("--steps", step_list, "sampler step counts")->delimiter(',')->check(CLI::PositiveNumber);
  ev->add_option("--n", n, "samples per step count")->check(CLI::Range(static_cast<int>(kMinFidImages), 1 << 20));
  ev->add_option("--sampler", sampler, "ddpm or ddim")->check(sampler_check);

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int code = app.exit(e, out, err);
    return code == 0 ? 0 : 2;
  }

  try {
    if (gen->parsed()) return cmd_gen_data(common, count, out);
    if (tr->parsed()) return cmd_train(common, out);
    if (sa->parsed()) return cmd_sample(common, ckpt, n, steps, sampler, out);
    if (inv->parsed()) return cmd_invert(common, ckpt, data, n, steps, out);
    if (co->parsed()) return cmd_condition(common, ckpt, labels, n, steps, mode, out);
    if (ma->parsed()) return cmd_manipulate(common, ckpt, labels, n, eta, alpha, denoise_steps, any_alpha, out);
    if (ph->parsed()) return cmd_priorhole(common, deltas, ring_counts, alphas, dim, out);
    if (ev->parsed()) return cmd_eval(common, ckpt, step_list, n, sampler, out);
  } catch (const UsageError& e) {
    err << "d2c: usage: " << e.what() << "\n";
    return 2;
  } catch (const Error& e) {
    err << "d2c: error: " << e.what() << "\n";
    return 1;
  } catch (const std::exception& e) {
    err << "d2c: error: " << e.what() << "\n";
    return 1;
  }
  return 2;
}

}  // namespace d2c::cli
