#pragma once

// Training configuration and its `key = value` text form.

#include "d2c/data.hpp"
#include "d2c/schedule.hpp"

#include <charconv>
#include <sstream>

namespace d2c {

static_assert(std::is_same_v<std::uint64_t, std::size_t>, "config parsing assumes a 64-bit size_t");

inline constexpr double kLambdaText = 1e-4;
inline constexpr double kLambdaTable = 1.0 / 17500.0;

struct TrainConfig {
  std::uint64_t seed = 0;
  int epochs = 20;
  int prior_epochs = 0;
  int batch_size = 64;

  // AdamW
  double learning_rate = 1e-3;
  double prior_learning_rate = 1e-3;
  double beta1 = 0.9;
  double beta2 = 0.999;
  double adam_eps = 1e-8;
  double weight_decay = 0.0;

  double lambda = kLambdaText;
  double sigma_pix = 0.1;

  // architecture
  int latent_dim = 32;
  std::vector<int> hidden{256, 256};
  int predictor_hidden = 256;
  int predictor_blocks = 2;
  int predictor_embed = 32;

  // diffusion
  int diffusion_steps = 1000;
  double beta_min = 1e-4;
  double beta_max = 0.02;
  WeightKind weights = WeightKind::uniform;

  // contrastive
  double tau = 0.1;
  int proj_dim = 64;
  double momentum = 0.99;
  int queue_size = 0;
  bool key_augment = true;
  bool query_augment = false;

  // data
  std::string dataset = "synthetic";
  ImageShape image;
  std::size_t data_count = 2000;
  std::uint64_t data_seed = 1;
  double square_rate = 0.5;
  double warm_rate = 0.5;
  std::array<double, 4> quadrant_rates{0.25, 0.25, 0.25, 0.25};
  std::size_t holdout = 500;

  // metrics
  std::string probe_attribute = "hue=warm";
  int probe_labels = 100;
  int fid_every = 0;
  int fid_samples = 500;
  int fid_steps = 50;

  int threads = 1;

  void validate() const {
    auto bad = [](bool cond, const std::string& what) {
      require(cond, Errc::invalid_parameter, "trainer", what);
    };
    bad(lambda >= 0.0 && std::isfinite(lambda), "lambda must be >= 0");
    bad(batch_size >= 2, "batch size must be >= 2");
    bad(learning_rate >= 0.0 && prior_learning_rate >= 0.0, "learning rate must be >= 0");
    bad(epochs >= 0 && prior_epochs >= 0, "epoch counts must be >= 0");
    bad(beta1 >= 0.0 && beta1 < 1.0 && beta2 >= 0.0 && beta2 < 1.0 && adam_eps > 0.0, "bad AdamW constants");
    bad(sigma_pix > 0.0, "sigma_pix must be > 0");
    bad(latent_dim >= 1 && predictor_hidden >= 1 && predictor_blocks >= 0, "bad architecture");
    bad(predictor_embed >= 2 && predictor_embed % 2 == 0, "predictor_embed must be even and >= 2");
    for (int h : hidden) bad(h >= 1, "hidden widths must be >= 1");
    bad(diffusion_steps >= 1, "diffusion_steps must be >= 1");
    bad(tau > 0.0 && proj_dim >= 1, "bad critic settings");
    bad(momentum >= 0.0 && momentum < 1.0, "momentum must lie in [0, 1)");
    bad(queue_size >= 0, "queue_size must be >= 0");
    bad(probe_labels >= 0 && fid_every >= 0 && fid_samples >= 0 && fid_steps >= 1, "bad metric settings");
    bad(threads >= 1, "threads must be >= 1");
  }

  SyntheticSpec synthetic_spec() const {
    SyntheticSpec s;
    s.shape = image;
    s.square_rate = square_rate;
    s.warm_rate = warm_rate;
    s.quadrant_rates = quadrant_rates;
    s.count = data_count;
    s.seed = data_seed;
    return s;
  }
};

namespace detail {

inline std::string format_double(double v) {
  char buf[64];
  auto [p, ec] = std::to_chars(buf, buf + sizeof buf, v);
  (void)ec;
  return std::string(buf, p);
}

inline std::string trim(std::string_view s) {
  const auto b = s.find_first_not_of(" \t\r");
  if (b == std::string_view::npos) return {};
  const auto e = s.find_last_not_of(" \t\r");
  return std::string(s.substr(b, e - b + 1));
}

template <typename T>
T parse_number(const std::string& key, const std::string& v) {
  T out{};
  const auto [p, ec] = std::from_chars(v.data(), v.data() + v.size(), out);
  require(ec == std::errc{} && p == v.data() + v.size() && !v.empty(), Errc::invalid_parameter, "config",
          "key '" + key + "': cannot parse '" + v + "'");
  return out;
}

inline bool parse_bool(const std::string& key, const std::string& v) {
  if (v == "true" || v == "1" || v == "desk") return true;
  if (v == "false" || v == "0" || v == "none") return false;
  fail(Errc::invalid_parameter, "config", "key '" + key + "': expected a boolean, got '" + v + "'");
}

template <typename T>
std::string join(const T& values) {
  std::string out;
  for (const auto& v : values) {
    if (!out.empty()) out += ",";
    if constexpr (std::is_floating_point_v<std::decay_t<decltype(v)>>)
      out += format_double(v);
    else
      out += std::to_string(v);
  }
  return out;
}

}  // namespace detail

/// Binds every config key to a field. Used both to parse and to print so the
/// two can never disagree.
template <typename Visit>
void visit_config(TrainConfig& c, Visit&& v) {
  v("seed", c.seed);
  v("epochs", c.epochs);
  v("prior_epochs", c.prior_epochs);
  v("batch_size", c.batch_size);
  v("learning_rate", c.learning_rate);
  v("prior_learning_rate", c.prior_learning_rate);
  v("beta1", c.beta1);
  v("beta2", c.beta2);
  v("adam_eps", c.adam_eps);
  v("weight_decay", c.weight_decay);
  v("lambda", c.lambda);
  v("sigma_pix", c.sigma_pix);
  v("latent_dim", c.latent_dim);
  v("hidden", c.hidden);
  v("predictor_hidden", c.predictor_hidden);
  v("predictor_blocks", c.predictor_blocks);
  v("predictor_embed", c.predictor_embed);
  v("diffusion_steps", c.diffusion_steps);
  v("beta_min", c.beta_min);
  v("beta_max", c.beta_max);
  v("weights", c.weights);
  v("tau", c.tau);
  v("proj_dim", c.proj_dim);
  v("momentum", c.momentum);
  v("queue_size", c.queue_size);
  v("key_augment", c.key_augment);
  v("query_augment", c.query_augment);
  v("dataset", c.dataset);
  v("image_height", c.image.height);
  v("image_width", c.image.width);
  v("image_channels", c.image.channels);
  v("data_count", c.data_count);
  v("data_seed", c.data_seed);
  v("square_rate", c.square_rate);
  v("warm_rate", c.warm_rate);
  v("quadrant_rates", c.quadrant_rates);
  v("holdout", c.holdout);
  v("probe_attribute", c.probe_attribute);
  v("probe_labels", c.probe_labels);
  v("fid_every", c.fid_every);
  v("fid_samples", c.fid_samples);
  v("fid_steps", c.fid_steps);
  v("threads", c.threads);
}

namespace detail {

struct Assign {
  const std::string& key;
  const std::string& text;
  bool& matched;

  void set(double& f) {
    if (key == "lambda" && text == "text")
      f = kLambdaText;
    else if (key == "lambda" && text == "table")
      f = kLambdaTable;
    else
      f = parse_number<double>(key, text);
  }
  void set(int& f) { f = parse_number<int>(key, text); }
  void set(std::size_t& f) { f = parse_number<std::size_t>(key, text); }
  void set(bool& f) { f = parse_bool(key, text); }
  void set(std::string& f) { f = text; }
  void set(WeightKind& f) {
    if (text == "uniform")
      f = WeightKind::uniform;
    else if (text == "variational")
      f = WeightKind::variational;
    else
      fail(Errc::invalid_parameter, "config", "weights must be uniform or variational");
  }
  void set(std::vector<int>& f) {
    f.clear();
    for (const auto& part : split(text, ',')) f.push_back(parse_number<int>(key, trim(part)));
  }
  void set(std::array<double, 4>& f) {
    auto parts = split(text, ',');
    require(parts.size() == 4, Errc::invalid_parameter, "config", "key '" + key + "' needs 4 values");
    for (std::size_t i = 0; i < 4; ++i) f[i] = parse_number<double>(key, trim(parts[i]));
  }

  template <typename T>
  void operator()(const char* name, T& field) {
    if (key != name) return;
    matched = true;
    set(field);
  }
};

inline std::string show(double v) { return format_double(v); }
inline std::string show(int v) { return std::to_string(v); }
inline std::string show(std::size_t v) { return std::to_string(v); }
inline std::string show(bool v) { return v ? "true" : "false"; }
inline std::string show(const std::string& v) { return v; }
inline std::string show(WeightKind v) { return v == WeightKind::uniform ? "uniform" : "variational"; }
inline std::string show(const std::vector<int>& v) { return join(v); }
inline std::string show(const std::array<double, 4>& v) { return join(v); }

}  // namespace detail

/// Applies `key = value` lines on top of `base`. Unknown keys are errors.
inline TrainConfig parse_config(const std::string& text, TrainConfig base = {}) {
  std::istringstream in(text);
  std::string line;
  int lineno = 0;
  while (std::getline(in, line)) {
    ++lineno;
    if (auto hash = line.find('#'); hash != std::string::npos) line.erase(hash);
    const std::string t = detail::trim(line);
    if (t.empty()) continue;
    const auto eq = t.find('=');
    require(eq != std::string::npos, Errc::invalid_parameter, "config",
            "line " + std::to_string(lineno) + ": expected key = value");
    const std::string key = detail::trim(std::string_view(t).substr(0, eq));
    const std::string value = detail::trim(std::string_view(t).substr(eq + 1));
    bool matched = false;
    visit_config(base, detail::Assign{key, value, matched});
    require(matched, Errc::invalid_parameter, "config",
            "line " + std::to_string(lineno) + ": unknown key '" + key + "'");
  }
  base.validate();
  return base;
}

/// Canonical text; parse_config(config_text(c)) == c.
inline std::string config_text(const TrainConfig& c) {
  TrainConfig copy = c;
  std::string out;
  visit_config(copy, [&](const char* name, auto& field) { out += std::string(name) + " = " + detail::show(field) + "\n"; });
  return out;
}

}  // namespace d2c
