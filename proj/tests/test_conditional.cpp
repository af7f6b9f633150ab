#include "d2c/conditional.hpp"

#include "support.hpp"

#include <boost/math/distributions/chi_squared.hpp>
#include <boost/math/quadrature/gauss_kronrod.hpp>
#include <gtest/gtest.h>

using namespace d2c;

namespace {

// Two Gaussian blobs at (+-sep, 0); label 1 for the right blob.
void blobs(int n, double sep, Rng& rng, Matrix& z, std::vector<int>& y, double positive_rate = 0.5) {
  z = gaussian_matrix(n, 2, rng);
  y.assign(static_cast<std::size_t>(n), 0);
  for (int i = 0; i < n; ++i) {
    y[static_cast<std::size_t>(i)] = uniform01(rng) < positive_rate;
    z(i, 0) += y[static_cast<std::size_t>(i)] ? sep : -sep;
  }
}

TrainConfig tiny() {
  TrainConfig c;
  c.seed = 2;
  c.latent_dim = 4;
  c.hidden = {16};
  c.predictor_hidden = 16;
  c.predictor_blocks = 1;
  c.predictor_embed = 4;
  c.proj_dim = 8;
  c.diffusion_steps = 50;
  c.image = {8, 8, 3};
  return c;
}

Matrix tiny_images(int n) {
  SyntheticSpec s = tiny().synthetic_spec();
  s.count = static_cast<std::size_t>(n);
  return generate_synthetic(s).images;
}

double normal_pdf(double z) { return std::exp(-0.5 * z * z) / std::sqrt(2.0 * std::numbers::pi); }

}  // namespace

TEST(Classifier, SeparableTrainingAccuracy) {
  Rng r(1);
  Matrix z;
  std::vector<int> y;
  blobs(200, 6.0, r, z, y);
  LatentClassifier c = fit_classifier(z, y);
  EXPECT_EQ(c.accuracy(z, y), 1.0);
  EXPECT_LT(c.gradient_norm, 1e-6);
  Vector p = c.probability(z);
  EXPECT_GT(p.minCoeff(), 0.0);
  EXPECT_LT(p.maxCoeff(), 1.0);
}

TEST(Classifier, RandomLabelsAreChance) {
  Rng r(2);
  Matrix z = gaussian_matrix(200, 4, r), zt = gaussian_matrix(2000, 4, r);
  std::vector<int> y(200), yt(2000);
  for (auto& v : y) v = uniform01(r) < 0.5;
  for (auto& v : yt) v = uniform01(r) < 0.5;
  EXPECT_NEAR(fit_classifier(z, y).accuracy(zt, yt), 0.5, 0.1);
}

TEST(Classifier, SingleClassRejected) {
  Matrix z = Matrix::Identity(3, 2);
  std::vector<int> y{1, 1, 1};
  try {
    fit_classifier(z, y);
    FAIL();
  } catch (const Error& e) {
    EXPECT_EQ(e.code(), Errc::single_class);
  }
}

TEST(Classifier, LogisticDerivatives) {
  Rng r(3);
  Matrix z;
  std::vector<int> y;
  blobs(30, 1.0, r, z, y);
  LogisticProblem prob(z, y, 0.05);
  Vector theta(3);
  theta << 0.3, -0.7, 0.2;
  const Vector g = prob.gradient(theta);
  const Matrix h = prob.hessian(theta);
  const double step = 1e-5;
  for (int j = 0; j < 3; ++j) {
    Vector up = theta, down = theta;
    up(j) += step;
    down(j) -= step;
    EXPECT_LT(d2c::testing::rel_error(g(j), (prob.value(up) - prob.value(down)) / (2 * step)), 1e-6);
    const Vector hcol = (prob.gradient(up) - prob.gradient(down)) / (2 * step);
    for (int i = 0; i < 3; ++i) EXPECT_LT(d2c::testing::rel_error(h(i, j), hcol(i)), 1e-6);
  }
}

TEST(PuClassifier, NoHiddenPositivesIsSupervised) {
  Rng r(4);
  Matrix pos = gaussian_matrix(100, 2, r), neg = gaussian_matrix(300, 2, r);
  pos.col(0).array() += 6.0;
  neg.col(0).array() -= 6.0;
  LatentClassifier c = fit_pu_classifier(pos, neg, r);
  EXPECT_TRUE(c.pu);
  Matrix tp = gaussian_matrix(200, 2, r), tn = gaussian_matrix(200, 2, r);
  tp.col(0).array() += 6.0;
  tn.col(0).array() -= 6.0;
  Matrix test(400, 2);
  test << tp, tn;
  std::vector<int> labels(400, 0);
  std::fill(labels.begin(), labels.begin() + 200, 1);
  EXPECT_EQ(c.accuracy(test, labels), 1.0);
}

TEST(PuClassifier, ConfidentScoresGiveIdentityCalibration) {
  const std::vector<double> scores{1.0, 1.0, 1.0};
  EXPECT_EQ(estimate_label_frequency(scores), 1.0);
  LatentClassifier c;
  c.weight = Vector::Constant(2, 0.7);
  c.bias = -0.1;
  LatentClassifier pu = c;
  pu.pu = true;
  pu.c_pu = 1.0;
  Rng r(1);
  Matrix z = gaussian_matrix(20, 2, r);
  EXPECT_EQ(pu.probability(z), c.probability(z));
  pu.c_pu = 0.2;
  EXPECT_LE(pu.probability(z).maxCoeff(), 1.0);
}

TEST(PuClassifier, FifteenPercentMixture) {
  // 100 labeled positives against 10k unlabeled with 15% hidden positives
  Rng r(5);
  Matrix pos = gaussian_matrix(100, 2, r);
  pos.col(0).array() += 2.5;
  Matrix unl;
  std::vector<int> hidden;
  blobs(10000, 1.25, r, unl, hidden, 0.15);
  for (Eigen::Index i = 0; i < unl.rows(); ++i) unl(i, 0) += 1.25;
  LatentClassifier c = fit_pu_classifier(pos, unl, r);
  Matrix test;
  std::vector<int> truth;
  blobs(5000, 1.25, r, test, truth, 0.15);
  test.col(0).array() += 1.25;
  EXPECT_GE(c.accuracy(test, truth), 0.8);
  EXPECT_GT(c.c_pu, 0.0);
  EXPECT_LE(c.c_pu, 1.0);
}

TEST(PuClassifier, TooFewExamples) {
  Rng r(1);
  try {
    fit_pu_classifier(Matrix::Zero(5, 2), Matrix::Zero(50, 2), r);
    FAIL();
  } catch (const Error& e) {
    EXPECT_EQ(e.code(), Errc::empty_split);
  }
}

TEST(Rejection, MatchesProductDensity) {
  // prior N(0, 1), r(z) = sigmoid(2z - 0.5)
  auto r_of = [](double z) { return 1.0 / (1.0 + std::exp(-(2.0 * z - 0.5))); };
  auto propose = [](std::size_t n, Rng& rng) { return gaussian_matrix(static_cast<Eigen::Index>(n), 1, rng); };
  auto score = [&](const Matrix& z) { return Vector(z.col(0).unaryExpr(r_of)); };
  Rng rng(6);
  const std::size_t n = 100000;
  RejectionResult res = rejection_sample(propose, score, n, rng, AcceptMode::bernoulli, {.chunk = 4096});
  ASSERT_EQ(res.samples.rows(), static_cast<Eigen::Index>(n));

  std::vector<double> edges{-1e9};
  for (double e = -2.5; e <= 3.5 + 1e-9; e += 0.25) edges.push_back(e);
  edges.push_back(1e9);
  auto density = [&](double z) { return r_of(z) * normal_pdf(z); };
  using GK = boost::math::quadrature::gauss_kronrod<double, 61>;
  const double total = GK::integrate(density, -12.0, 12.0, 10, 1e-12);
  std::vector<double> expected, observed(edges.size() - 1, 0.0);
  for (std::size_t b = 0; b + 1 < edges.size(); ++b)
    expected.push_back(n * GK::integrate(density, std::max(edges[b], -12.0), std::min(edges[b + 1], 12.0), 10, 1e-12) /
                       total);
  for (Eigen::Index i = 0; i < res.samples.rows(); ++i) {
    const double z = res.samples(i, 0);
    const auto it = std::upper_bound(edges.begin(), edges.end(), z);
    observed[static_cast<std::size_t>(it - edges.begin() - 1)] += 1.0;
  }
  double chi2 = 0.0;
  for (std::size_t b = 0; b < expected.size(); ++b) chi2 += std::pow(observed[b] - expected[b], 2) / expected[b];
  const boost::math::chi_squared dist(static_cast<double>(expected.size() - 1));
  EXPECT_GT(boost::math::cdf(boost::math::complement(dist, chi2)), 0.01) << chi2;
  EXPECT_NEAR(res.stats.rate(), total, 0.01);
}

TEST(Rejection, AlwaysAcceptIsUnconditional) {
  auto propose = [](std::size_t n, Rng& rng) { return gaussian_matrix(static_cast<Eigen::Index>(n), 1, rng); };
  auto one = [](const Matrix& z) { return Vector(Vector::Ones(z.rows())); };
  Rng rng(7);
  RejectionResult res = rejection_sample(propose, one, 20000, rng, AcceptMode::bernoulli);
  EXPECT_EQ(res.stats.rate(), 1.0);
  EXPECT_NEAR(res.samples.mean(), 0.0, 4.0 / std::sqrt(20000.0));
  const double var = res.samples.array().square().mean();
  EXPECT_NEAR(var, 1.0, 0.04);
}

TEST(Rejection, StarvationInThresholdMode) {
  auto propose = [](std::size_t n, Rng& rng) { return gaussian_matrix(static_cast<Eigen::Index>(n), 1, rng); };
  auto zero = [](const Matrix& z) { return Vector(Vector::Zero(z.rows())); };
  Rng rng(7);
  try {
    rejection_sample(propose, zero, 5, rng, AcceptMode::threshold);
    FAIL();
  } catch (const Error& e) {
    EXPECT_EQ(e.code(), Errc::acceptance_starvation);
  }
}

TEST(Rejection, ThreadCountDoesNotChangeOutput) {
  auto propose = [](std::size_t n, Rng& rng) { return gaussian_matrix(static_cast<Eigen::Index>(n), 2, rng); };
  auto score = [](const Matrix& z) { return Vector(z.col(0).unaryExpr([](double v) { return v > 0 ? 0.9 : 0.1; })); };
  Rng a(8), b(8);
  RejectionResult one = rejection_sample(propose, score, 700, a, AcceptMode::bernoulli, {.chunk = 64, .threads = 1});
  RejectionResult three = rejection_sample(propose, score, 700, b, AcceptMode::bernoulli, {.chunk = 64, .threads = 3});
  EXPECT_EQ(one.samples, three.samples);
}

TEST(Rejection, ScoresOutsideUnitIntervalRejected) {
  auto propose = [](std::size_t n, Rng& rng) { return gaussian_matrix(static_cast<Eigen::Index>(n), 1, rng); };
  auto bad = [](const Matrix& z) { return Vector(Vector::Constant(z.rows(), 1.5)); };
  Rng rng(1);
  EXPECT_THROW(rejection_sample(propose, bad, 3, rng, AcceptMode::bernoulli), Error);
}

TEST(Conditional, SampleShapesAndAcceptance) {
  D2cModel m(tiny());
  LatentClassifier c;
  c.weight = Vector::Zero(4);
  c.bias = 50.0;
  Rng rng(3);
  ConditionalSamples s = conditional_sample(m, c, 1, 12, rng, AcceptMode::threshold, 5);
  EXPECT_EQ(s.images.rows(), 12);
  EXPECT_EQ(s.images.cols(), m.image_shape().size());
  EXPECT_EQ(s.latents.cols(), 4);
  EXPECT_EQ(s.stats.rate(), 1.0);
  Vector target0 = class_score(c, s.latents, 0);
  EXPECT_LT(target0.maxCoeff(), 1e-20);
}

TEST(Manipulate, NoStepNoNoiseIsReconstruction) {
  D2cModel m(tiny());
  LatentClassifier c;
  c.weight = Vector::LinSpaced(4, -1.0, 1.0);
  ManipulationSpec spec;
  spec.eta = 0.0;
  spec.alpha = 1.0;
  spec.allow_any_alpha = true;
  Matrix x = tiny_images(5);
  Rng rng(1);
  ManipulationResult res = manipulate(m, c, spec, x, rng);
  EXPECT_EQ(res.images, decode(m.decoder(), encode(m.encoder(), x, nullptr)));
  EXPECT_EQ(res.displacement.maxCoeff(), 0.0);
}

TEST(Manipulate, SpecValidation) {
  ManipulationSpec s = ManipulationSpec::defaults(16);
  EXPECT_DOUBLE_EQ(s.eta, 2.0);
  EXPECT_NO_THROW(s.validate());
  s.alpha = 0.5;
  try {
    s.validate();
    FAIL();
  } catch (const Error& e) {
    EXPECT_EQ(e.code(), Errc::invalid_range);
  }
  s.allow_any_alpha = true;
  EXPECT_NO_THROW(s.validate());
  s.alpha = 0.0;
  EXPECT_THROW(s.validate(), Error);
  s.alpha = 0.8;
  s.eta = -1.0;
  EXPECT_THROW(s.validate(), Error);
}

TEST(Manipulate, StepMovesLatentsTowardTarget) {
  D2cModel m(tiny());
  Matrix x = tiny_images(6);
  LatentClassifier c;
  c.weight = Vector::Zero(4);
  c.weight(1) = 1.0;
  ManipulationSpec spec;
  spec.eta = 1.0;
  spec.alpha = 1.0;
  spec.allow_any_alpha = true;
  Rng rng(1);
  ManipulationResult res = manipulate(m, c, spec, x, rng);
  // with alpha = 1 the latent move is exactly eta along the unit weight
  EXPECT_LT((res.displacement.array() - 1.0).abs().maxCoeff(), 1e-12);
  EXPECT_EQ(res.images.rows(), 6);
}

TEST(ClassifierTables, RoundTrip) {
  LatentClassifier c;
  c.weight = Vector::LinSpaced(3, 0.1, 0.3);
  c.bias = -0.25;
  c.pu = true;
  c.c_pu = 0.4;
  LatentClassifier back = classifier_from_tables(deserialize_tables(serialize_tables(classifier_tables(c))));
  EXPECT_EQ(back.weight, c.weight);
  EXPECT_EQ(back.bias, c.bias);
  EXPECT_TRUE(back.pu);
  EXPECT_EQ(back.c_pu, 0.4);
  TableSet bad = classifier_tables(c);
  TableSet broken;
  for (const Table& t : bad) broken.add(t.name == "classifier/pu" ? vector_table("classifier/pu", {1.0, 0.0}) : t);
  EXPECT_THROW(classifier_from_tables(broken), Error);
}
