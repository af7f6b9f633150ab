// Acceptance suite: one PASS/FAIL line per criterion, nonzero exit on any failure.

#include "d2c/conditional.hpp"
#include "d2c/eval.hpp"
#include "d2c/priorhole.hpp"

#include "support.hpp"

#include <boost/math/distributions/chi_squared.hpp>
#include <boost/math/quadrature/gauss_kronrod.hpp>

#include <chrono>
#include <functional>
#include <iostream>
#include <random>

using namespace d2c;

namespace {

using Clock = std::chrono::steady_clock;

// Collects failed checks for one criterion.
class Check {
 public:
  void expect(bool ok, const std::string& what) {
    if (!ok) failures_.push_back(what);
  }
  void near(double got, double want, double tol, const std::string& what) {
    if (!(std::abs(got - want) <= tol))
      failures_.push_back(what + ": got " + fmt(got) + ", want " + fmt(want) + " +- " + fmt(tol));
  }
  void note(const std::string& s) { notes_.push_back(s); }
  const std::vector<std::string>& failures() const { return failures_; }
  const std::vector<std::string>& notes() const { return notes_; }

  static std::string fmt(double v) {
    std::ostringstream os;
    os.precision(10);
    os << v;
    return os.str();
  }

 private:
  std::vector<std::string> failures_, notes_;
};

struct Criterion {
  int id;
  std::string name;
  double time_limit;  // seconds, 0 for none
  std::function<void(Check&)> body;
};

struct ZeroModel {
  Matrix predict(const Matrix& x, double) const { return Matrix::Zero(x.rows(), x.cols()); }
};

Matrix scalar(double v) { return Matrix::Constant(1, 1, v); }

// ---------------------------------------------------------------------------

void posterior_oracle(Check& c) {
  std::mt19937_64 rng(5);
  std::uniform_real_distribution<double> u(0.0, 1.0);
  std::normal_distribution<double> g(0.0, 2.0);
  double worst = 0.0;
  for (int i = 0; i < 1000; ++i) {
    double a = 1e-4 + (1 - 2e-4) * u(rng), b = 1e-4 + (1 - 2e-4) * u(rng);
    const double at = std::min(a, b), ap = std::max(a, b);
    const double x0 = g(rng), xt = g(rng);
    Posterior p = posterior_params(scalar(xt), scalar(x0), at, ap);
    Eigen::Matrix2d cov;
    const double c12 = std::sqrt(at / ap) * (1.0 - ap);
    cov << 1.0 - ap, c12, c12, 1.0 - at;
    const double mean = std::sqrt(ap) * x0 + cov(0, 1) / cov(1, 1) * (xt - std::sqrt(at) * x0);
    const double var = cov(0, 0) - cov(0, 1) * cov(1, 0) / cov(1, 1);
    worst = std::max({worst, std::abs(p.mean(0, 0) - mean), std::abs(p.variance - var)});
  }
  c.expect(worst <= 1e-10, "posterior vs conditioning oracle, max error " + Check::fmt(worst));
  c.note("max oracle error " + Check::fmt(worst));

  const double x0 = 0.7, at = 0.3, ap = 0.6;
  const int n = 100000;
  std::mt19937_64 r2(17);
  std::normal_distribution<double> n01(0.0, 1.0);
  double s1 = 0, q1 = 0, s2 = 0, q2 = 0;
  for (int i = 0; i < n; ++i) {
    Matrix xt = forward_noise(scalar(x0), at, scalar(n01(r2)));
    Posterior p = posterior_params(xt, scalar(x0), at, ap);
    const double chained = p.mean(0, 0) + std::sqrt(p.variance) * n01(r2);
    const double direct = forward_noise(scalar(x0), ap, scalar(n01(r2)))(0, 0);
    s1 += chained;
    q1 += chained * chained;
    s2 += direct;
    q2 += direct * direct;
  }
  const double m1 = s1 / n, m2 = s2 / n, v1 = q1 / n - m1 * m1, v2 = q2 / n - m2 * m2;
  const double z_mean = (m1 - m2) / std::sqrt((v1 + v2) / n);
  const double z_var = (v1 - v2) / std::sqrt(2.0 * (v1 * v1 + v2 * v2) / n);
  c.expect(std::abs(z_mean) < 4.0, "marginal mean z = " + Check::fmt(z_mean));
  c.expect(std::abs(z_var) < 4.0, "marginal variance z = " + Check::fmt(z_var));
  c.note("marginal z " + Check::fmt(z_mean) + " / " + Check::fmt(z_var));
}

void variational_weight_oracle(Check& c) {
  std::mt19937_64 rng(21);
  std::uniform_real_distribution<double> u(0.0, 1.0);
  double worst = 0.0;
  for (int trial = 0; trial < 100; ++trial) {
    const int steps = 1 + static_cast<int>(u(rng) * 200);
    const double bmin = 1e-5 + 0.01 * u(rng), bmax = bmin + 0.1 * u(rng);
    const int d = 1 + trial % 8;
    const AlphaSchedule s = make_cumulative_schedule(steps, bmin, bmax);
    const WeightFunction w = variational_weights(s, d);
    for (std::size_t t = 1; t <= s.steps(); ++t) {
      const long double a = s[t], ap = s[t - 1];
      long double want;
      if (t == 1) {
        long double tau = 1.0L;
        for (int k = 0; k < d; ++k) tau *= 2.0L * std::numbers::pi_v<long double>;
        want = (1.0L - a) / (2.0L * tau * a);
      } else {
        want = (1.0L - a) * ap / (2.0L * (1.0L - ap) * (1.0L - ap) * a);
      }
      worst = std::max(worst, static_cast<double>(std::abs(w.at(t) - want) / want));
    }
  }
  c.expect(worst <= 1e-12, "relative error vs substitution " + Check::fmt(worst));
  c.note("max relative error " + Check::fmt(worst));

  const AlphaSchedule s = AlphaSchedule::from_levels({1.0, 0.99, 0.8});
  c.near(variational_weights(s, 1).at(1), 8.038128438984613e-04, 1e-16, "w(0.99), d = 1");
  for (int d = 1; d <= 6; ++d) {
    const double ratio = variational_weights(s, d).at(1) / variational_weights(s, d + 1).at(1);
    c.expect(std::abs(ratio / (2.0 * std::numbers::pi) - 1.0) < 1e-15, "(2 pi)^d factor at d = " + std::to_string(d));
    c.expect(variational_weights(s, d).at(2) == variational_weights(s, 1).at(2), "later weights depend on d");
  }
}

void ddim_algebra(Check& c) {
  std::mt19937_64 rng(4);
  std::uniform_real_distribution<double> u(1e-3, 1.0);
  double step_err = 0.0;
  for (int i = 0; i < 200; ++i) {
    double a = u(rng), b = u(rng);
    const double at = std::min(a, b), ap = std::max(a, b);
    const double x = u(rng) * 4.0 - 2.0;
    step_err = std::max(step_err, std::abs(ddim_step(ZeroModel{}, scalar(x), at, ap)(0, 0) - std::sqrt(ap / at) * x));
  }
  c.expect(step_err <= 1e-9, "zero-noise step error " + Check::fmt(step_err));

  const AlphaSchedule s = subsample(make_cumulative_schedule(1000, 1e-4, 0.02), 50);
  Rng r(3);
  const Matrix noise = gaussian_matrix(16, 4, r);
  const Matrix out = sample_from(ZeroModel{}, SamplerSpec{SamplerKind::ddim, s}, noise);
  const double chain_err = (out - noise / std::sqrt(s.min_level())).cwiseAbs().maxCoeff();
  c.expect(chain_err <= 1e-9 * std::max(1.0, out.cwiseAbs().maxCoeff()), "full chain error " + Check::fmt(chain_err));

  const Matrix back = ddim_invert(ZeroModel{}, s, out);
  const double inv_err = (back - noise).norm() / noise.norm();
  c.expect(inv_err <= 1e-6, "invert(sample) relative error " + Check::fmt(inv_err));
  c.note("step " + Check::fmt(step_err) + ", chain " + Check::fmt(chain_err) + ", inversion " + Check::fmt(inv_err));
}

void gradient_suite(Check& c) {
  const std::size_t samples = 200;
  auto report = [&](const std::string& name, const d2c::testing::GradCheck& g) {
    c.expect(g.checked >= 100, name + " checked only " + std::to_string(g.checked));
    c.expect(g.max_rel_error < 1e-4, name + " relative error " + Check::fmt(g.max_rel_error));
    c.note(name + " " + std::to_string(g.checked) + " params, max rel " + Check::fmt(g.max_rel_error));
  };

  Rng init(3);
  NoisePredictor pred({4, 16, 2, 8}, init);
  const AlphaSchedule sched = make_cumulative_schedule(50, 1e-3, 0.05);
  const WeightFunction w = uniform_weights(sched);
  Rng data(8);
  const Matrix lat = gaussian_matrix(6, 4, data);
  report("predictor", d2c::testing::check_parameter_gradients(
                          pred.params(),
                          [&](bool backward) {
                            Rng r(99);
                            ad::Tape tape;
                            ad::Var l = diffusion_loss_node(tape, pred, tape.constant(lat), sched, w, r);
                            if (backward) tape.backward(l);
                            return tape.scalar(l);
                          },
                          samples, 5));

  const AutoencoderArch arch{ImageShape{6, 6, 1}, 4, {16}};
  Encoder enc(arch, init);
  Decoder dec(arch, init);
  Matrix x(4, 36);
  for (Eigen::Index i = 0; i < x.size(); ++i) x.data()[i] = uniform01(data);
  report("encoder", d2c::testing::check_parameter_gradients(
                        enc.params(),
                        [&](bool backward) {
                          Rng eps(17);
                          ad::Tape tape;
                          ad::Var z = encode_node(tape, enc, tape.constant(x), eps);
                          ad::Var l = reconstruction_loss_node(tape, dec, x, z, 0.3);
                          if (backward) tape.backward(l);
                          return tape.scalar(l);
                        },
                        samples, 4));
  const Matrix z = gaussian_matrix(4, 4, data);
  report("decoder", d2c::testing::check_parameter_gradients(
                        dec.params(),
                        [&](bool backward) {
                          ad::Tape tape;
                          ad::Var l = reconstruction_loss_node(tape, dec, x, tape.constant(z), 0.3);
                          if (backward) tape.backward(l);
                          return tape.scalar(l);
                        },
                        samples, 3));

  Critic critic(8, 16, 0.3, init);
  const Matrix q = gaussian_matrix(4, 8, data), p = gaussian_matrix(4, 8, data);
  const std::vector<Matrix> negs{gaussian_matrix(4, 8, data), gaussian_matrix(4, 8, data)};
  const Matrix shared = critic.project(gaussian_matrix(5, 8, data));
  report("critic", d2c::testing::check_parameter_gradients(
                       critic.params(),
                       [&](bool backward) {
                         ad::Tape tape;
                         std::vector<ad::Var> nv;
                         for (const Matrix& n : negs) nv.push_back(tape.constant(n));
                         ad::Var l = cpc_loss_node(tape, critic, tape.constant(q), tape.constant(p), nv, &shared);
                         if (backward) tape.backward(l);
                         return tape.scalar(l);
                       },
                       samples, 2));

  // logistic probe over a 128-dim latent: 129 parameters
  const Matrix pz = gaussian_matrix(40, 128, data);
  std::vector<int> py(40);
  for (std::size_t i = 0; i < py.size(); ++i) py[i] = pz(static_cast<Eigen::Index>(i), 0) > 0.0;
  LogisticProblem prob(pz, py, 1e-2);
  Vector theta = gaussian_matrix(129, 1, data).col(0) * 0.1;
  const Vector g = prob.gradient(theta);
  d2c::testing::GradCheck probe;
  for (Eigen::Index j = 0; j < theta.size(); ++j) {
    Vector up = theta, down = theta;
    up(j) += 1e-5;
    down(j) -= 1e-5;
    probe.max_rel_error =
        std::max(probe.max_rel_error, d2c::testing::rel_error(g(j), (prob.value(up) - prob.value(down)) / 2e-5));
    ++probe.checked;
  }
  report("probe", probe);
}

double cpc_from_scores(const Matrix& s) {
  ad::Tape tape;
  return tape.scalar(cpc_loss_from_scores(tape, tape.constant(s)));
}

// The loss is the negated bound estimate, so "estimate <= log m" reads loss >= -log m.
void cpc_properties(Check& c) {
  for (int m : {2, 4, 17}) c.expect(cpc_from_scores(Matrix::Constant(5, m, 0.37)) == 0.0, "constant critic, m = " + std::to_string(m));
  Rng init(1);
  Critic same(3, 4, 0.5, init);
  const Matrix cq = Matrix::Constant(3, 3, 0.2);
  c.expect(cpc_loss(same, cq, cq, {cq, cq, cq}).loss == 0.0, "identical critic inputs");

  std::mt19937_64 rng(3);
  std::normal_distribution<double> g(0.0, 5.0);
  std::uniform_int_distribution<int> mdist(2, 20);
  int violations = 0;
  for (int trial = 0; trial < 10000; ++trial) {
    const int m = mdist(rng);
    Matrix s(1, m);
    for (int j = 0; j < m; ++j) s(0, j) = g(rng);
    violations += cpc_from_scores(s) < -std::log(static_cast<double>(m)) - 1e-12;
  }
  c.expect(violations == 0, std::to_string(violations) + " inputs exceed log m");

  Critic sep(2, 2, 1.0 / 50.0, init);
  sep.params().at(0).value = Matrix::Identity(2, 2);
  Matrix q(1, 2);
  q << 1.0, 0.0;
  const Matrix n = -q;
  const double loss = cpc_loss(sep, q, q, {n, n, n}).loss;
  c.near(-loss, std::log(4.0), 1e-3, "separating critic estimate");
  c.note("separating estimate " + Check::fmt(-loss) + " vs log 4 = " + Check::fmt(std::log(4.0)));
}

void rejection_correctness(Check& c) {
  auto r_of = [](double z) { return 1.0 / (1.0 + std::exp(-(2.0 * z - 0.5))); };
  auto propose = [](std::size_t n, Rng& rng) { return gaussian_matrix(static_cast<Eigen::Index>(n), 1, rng); };
  auto score = [&](const Matrix& z) { return Vector(z.col(0).unaryExpr(r_of)); };
  Rng rng(6);
  const std::size_t n = 100000;
  RejectionResult res = rejection_sample(propose, score, n, rng, AcceptMode::bernoulli, {.chunk = 4096});

  std::vector<double> edges{-1e9};
  for (double e = -2.5; e <= 3.5 + 1e-9; e += 0.25) edges.push_back(e);
  edges.push_back(1e9);
  auto density = [&](double z) { return r_of(z) * std_normal_pdf(z); };
  using GK = boost::math::quadrature::gauss_kronrod<double, 61>;
  const double total = GK::integrate(density, -12.0, 12.0, 10, 1e-12);
  std::vector<double> expected, observed(edges.size() - 1, 0.0);
  for (std::size_t b = 0; b + 1 < edges.size(); ++b)
    expected.push_back(static_cast<double>(n) *
                       GK::integrate(density, std::max(edges[b], -12.0), std::min(edges[b + 1], 12.0), 10, 1e-12) / total);
  for (Eigen::Index i = 0; i < res.samples.rows(); ++i) {
    const auto it = std::upper_bound(edges.begin(), edges.end(), res.samples(i, 0));
    observed[static_cast<std::size_t>(it - edges.begin() - 1)] += 1.0;
  }
  double chi2 = 0.0;
  for (std::size_t b = 0; b < expected.size(); ++b) chi2 += std::pow(observed[b] - expected[b], 2) / expected[b];
  const boost::math::chi_squared dist(static_cast<double>(expected.size() - 1));
  const double pval = boost::math::cdf(boost::math::complement(dist, chi2));
  c.expect(res.samples.rows() == static_cast<Eigen::Index>(n), "sample count");
  c.expect(pval > 0.01, "chi-square p = " + Check::fmt(pval));
  c.note("chi2 " + Check::fmt(chi2) + " on " + std::to_string(expected.size() - 1) + " dof, p = " + Check::fmt(pval));
}

void prior_hole(Check& c) {
  double prev = std::numeric_limits<double>::infinity(), first = 0.0, last = 0.0;
  for (int n : {1, 2, 4, 8}) {
    const RingConstruction rc = build_rings(0.49, n, 1);
    const std::string tag = " (n = " + std::to_string(n) + ")";
    const double pm = hole_prior_mass(rc), qm = hole_q_mass(rc), kl = kl_divergence(rc);
    c.expect(pm >= 0.49 - 1e-6, "hole p-mass " + Check::fmt(pm) + tag);
    c.expect(qm <= 1e-10, "hole q-mass " + Check::fmt(qm) + tag);
    c.near(kl, 0.98 * std::numbers::ln2, 1e-3, "KL" + tag);
    c.expect(kl < std::numbers::ln2, "KL below ln 2" + tag);
    const double w = wasserstein2_exact_1d(rc);
    c.expect(w < prev, "W2 strictly decreasing" + tag);
    c.expect(w2_bound(rc) >= w * w, "bound below W2^2" + tag);
    if (n == 1) first = w;
    last = w;
    prev = w;
    c.note("n=" + std::to_string(n) + " p " + Check::fmt(pm) + " q " + Check::fmt(qm) + " kl " + Check::fmt(kl) +
           " w2 " + Check::fmt(w) + " bound " + Check::fmt(w2_bound(rc)));
  }
  c.expect(last / first < 0.5, "W2(8)/W2(1) = " + Check::fmt(last / first));
}

void noising(Check& c) {
  const RingConstruction rc = build_rings(0.49, 4, 1);
  double prev = std::numeric_limits<double>::infinity();
  std::string line;
  for (double alpha : {1.0, 0.9, 0.5, 0.1}) {
    const double kl = noised_hole_kl(rc, alpha);
    c.expect(kl < prev, "KL not decreasing at alpha = " + Check::fmt(alpha));
    prev = kl;
    line += " " + Check::fmt(alpha) + ":" + Check::fmt(kl);
  }
  c.expect(prev < 1e-3, "KL at alpha = 0.1 is " + Check::fmt(prev));
  c.note("KL by alpha" + line);
}

// ---------------------------------------------------------------------------

void reference_run(Check& c, const std::filesystem::path& config_path) {
  const TrainConfig cfg = parse_config(io::read_text(config_path));
  const auto t0 = Clock::now();
  TrainResult trained = train(cfg);
  const D2cModel& m = trained.model;
  c.note("training took " + Check::fmt(std::chrono::duration<double>(Clock::now() - t0).count()) + " s");

  TensorArchive data = load_dataset(cfg);
  DataSplit split = split_archive(data, cfg.holdout);
  const ImageShape sh = m.image_shape();
  Rng rng(11);
  const AttributeQuery warm = AttributeQuery::parse("hue=warm");

  const double probe = probe_accuracy(m, split.train, split.heldout, warm, 100, rng);
  c.expect(probe >= 0.9, "(a) probe accuracy " + Check::fmt(probe));

  const auto labels = warm.labels(split.train);
  const auto idx = balanced_subset(labels, 100, rng);
  std::vector<int> y;
  for (auto i : idx) y.push_back(labels[i]);
  const LatentClassifier clf = fit_classifier(m.encode_latents(gather_rows(split.train.images, idx)), y);
  const double unc = purity(m.generate(500, m.sampler(50), rng), sh, warm);
  ConditionalSamples cs = conditional_sample(m, clf, 1, 500, rng, AcceptMode::threshold);
  const double cond = purity(cs.images, sh, warm);
  c.expect(cond >= 0.8 && cond > unc, "(b) threshold purity " + Check::fmt(cond) + " from " + Check::fmt(unc));

  // PU: 100 labeled positives of the 15% attribute, a fresh unlabeled draw
  const AttributeQuery q0 = AttributeQuery::parse("quadrant=0");
  const auto qlab = q0.labels(split.train);
  std::vector<Eigen::Index> pos;
  for (std::size_t i = 0; i < qlab.size() && pos.size() < 100; ++i)
    if (qlab[i]) pos.push_back(static_cast<Eigen::Index>(i));
  SyntheticSpec us = cfg.synthetic_spec();
  us.count = 10000;
  us.seed = cfg.data_seed + 1000;
  const TensorArchive unlabeled = generate_synthetic(us);
  Rng pu_rng(3);
  const LatentClassifier pu =
      fit_pu_classifier(m.encode_latents(gather_rows(split.train.images, pos)), m.encode_latents(unlabeled.images), pu_rng);
  const double pu_base = purity(m.generate(500, m.sampler(50), rng), sh, q0);
  const double pu_purity = purity(conditional_sample(m, pu, 1, 500, rng, AcceptMode::threshold).images, sh, q0);
  c.expect(pu_purity >= 0.7, "(c) PU purity " + Check::fmt(pu_purity));

  const FeatureExtractor fx = FeatureExtractor::fit(split.train, {.seed = 1});
  Rng fr(100);
  const Matrix noise = gaussian_matrix(1000, m.latent_dim(), fr);
  const double fid10 = toy_fid(fx, split.heldout.images, m.decode_latents(sample_from(m.predictor(), m.sampler(10), noise)));
  const double fid100 = toy_fid(fx, split.heldout.images, m.decode_latents(sample_from(m.predictor(), m.sampler(100), noise)));
  c.expect(fid10 > fid100, "(d) toy FID 10 steps " + Check::fmt(fid10) + " vs 100 steps " + Check::fmt(fid100));

  std::vector<Eigen::Index> cool;
  for (Eigen::Index i = 0; i < split.heldout.count() && cool.size() < 200; ++i)
    if (!warm.holds(read_attributes(split.heldout.images.row(i), sh))) cool.push_back(i);
  const Matrix src = gather_rows(split.heldout.images, cool);
  const ManipulationResult mr = manipulate(m, clf, ManipulationSpec::defaults(m.latent_dim()), src, rng);
  const Matrix indep = m.generate(static_cast<int>(src.rows()), m.sampler(50), rng);
  int up = 0, close = 0;
  for (Eigen::Index i = 0; i < src.rows(); ++i) {
    up += mr.score_after(i) > mr.score_before(i);
    close += (mr.images.row(i) - src.row(i)).norm() < (indep.row(i) - src.row(i)).norm();
  }
  const double up_rate = up / static_cast<double>(src.rows()), close_rate = close / static_cast<double>(src.rows());
  c.expect(up_rate >= 0.9, "(e) score increased on " + Check::fmt(up_rate));
  c.expect(close_rate >= 0.9, "(e) closer than independent sample on " + Check::fmt(close_rate));

  c.note("probe " + Check::fmt(probe) + ", purity " + Check::fmt(unc) + " -> " + Check::fmt(cond) + ", PU purity " +
         Check::fmt(pu_base) + " -> " + Check::fmt(pu_purity) + " (c = " + Check::fmt(pu.c_pu) + ")");
  c.note("toy FID 10 steps " + Check::fmt(fid10) + ", 100 steps " + Check::fmt(fid100) + ", manipulation up " +
         Check::fmt(up_rate) + " closer " + Check::fmt(close_rate) + " over " + std::to_string(src.rows()));
}

template <typename F>
std::optional<Errc> code_of(F&& f) {
  try {
    f();
  } catch (const Error& e) {
    return e.code();
  }
  return std::nullopt;
}

void determinism_and_formats(Check& c) {
  TrainConfig cfg;
  cfg.seed = 5;
  cfg.epochs = 2;
  cfg.prior_epochs = 2;
  cfg.latent_dim = 4;
  cfg.hidden = {16};
  cfg.predictor_hidden = 16;
  cfg.predictor_blocks = 1;
  cfg.predictor_embed = 4;
  cfg.proj_dim = 8;
  cfg.diffusion_steps = 50;
  cfg.image = {8, 8, 3};
  cfg.data_count = 96;
  cfg.holdout = 32;
  cfg.probe_labels = 20;
  TrainResult a = train(cfg), b = train(cfg);
  c.expect(metrics_csv(a.metrics) == metrics_csv(b.metrics), "metrics CSV differs between identical runs");
  c.expect(prior_csv(a.prior) == prior_csv(b.prior), "prior CSV differs between identical runs");

  d2c::testing::TempDir dir("accept");
  const auto ckpt = serialize_checkpoint(a.model);
  save_checkpoint(dir / "m.ckpt", a.model);
  c.expect(serialize_checkpoint(load_checkpoint(dir / "m.ckpt")) == ckpt, "checkpoint round trip");
  c.expect(ckpt == serialize_checkpoint(b.model), "checkpoint differs between identical runs");

  SyntheticSpec spec = cfg.synthetic_spec();
  spec.count = 64;
  const TensorArchive archive = generate_synthetic(spec);
  save_archive(dir / "a.d2cd", archive);
  const TensorArchive back = load_archive(dir / "a.d2cd");
  c.expect(back == archive && serialize_archive(back) == serialize_archive(archive), "archive round trip");

  auto flipped = ckpt;
  flipped[flipped.size() / 2] ^= 0x20;
  c.expect(code_of([&] { deserialize_checkpoint(flipped); }) == Errc::corrupt_checkpoint, "flipped checkpoint byte");
  std::vector<std::uint8_t> cut(ckpt.begin(), ckpt.begin() + static_cast<long>(ckpt.size() / 3));
  c.expect(code_of([&] { deserialize_checkpoint(cut); }) == Errc::corrupt_checkpoint, "truncated checkpoint");

  const auto bytes = serialize_archive(archive);
  auto magic = bytes;
  magic[0] = 'X';
  c.expect(code_of([&] { deserialize_archive(magic); }) == Errc::corrupt_header, "archive magic");
  std::vector<std::uint8_t> short_archive(bytes.begin(), bytes.begin() + 100);
  c.expect(code_of([&] { deserialize_archive(short_archive); }) == Errc::truncated_payload, "truncated archive");
  c.expect(code_of([&] { load_checkpoint(dir / "missing.ckpt"); }) == Errc::io_error, "missing checkpoint");
}

}  // namespace

int main(int argc, char** argv) {
  const std::filesystem::path reference = argc > 1 ? argv[1] : D2C_REFERENCE_CONFIG;
  const std::vector<Criterion> criteria{
      {1, "posterior oracle and marginal consistency", 10.0, posterior_oracle},
      {2, "variational weights", 0.0, variational_weight_oracle},
      {3, "DDIM closed forms and inversion", 5.0, ddim_algebra},
      {4, "finite-difference gradients", 60.0, gradient_suite},
      {5, "CPC bound properties", 0.0, cpc_properties},
      {6, "rejection sampling histogram", 30.0, rejection_correctness},
      {7, "prior-hole construction", 60.0, prior_hole},
      {8, "noised prior-hole KL", 0.0, noising},
      {9, "end-to-end reference run", 0.0, [&](Check& c) { reference_run(c, reference); }},
      {10, "determinism and file formats", 0.0, determinism_and_formats},
  };
  int failed = 0;
  for (const Criterion& cr : criteria) {
    Check c;
    const auto start = Clock::now();
    try {
      cr.body(c);
    } catch (const std::exception& e) {
      c.expect(false, std::string("threw: ") + e.what());
    }
    const double secs = std::chrono::duration<double>(Clock::now() - start).count();
    if (cr.time_limit > 0.0) c.expect(secs < cr.time_limit, "runtime " + Check::fmt(secs) + " s over limit");
    const bool ok = c.failures().empty();
    failed += !ok;
    std::cout << (ok ? "PASS" : "FAIL") << " criterion " << cr.id << ": " << cr.name << " (" << Check::fmt(secs)
              << " s)\n";
    for (const auto& n : c.notes()) std::cout << "    " << n << "\n";
    for (const auto& f : c.failures()) std::cout << "    failed: " << f << "\n";
    std::cout.flush();
  }
  std::cout << (failed == 0 ? "all criteria passed" : std::to_string(failed) + " criteria failed") << "\n";
  return failed == 0 ? 0 : 1;
}
