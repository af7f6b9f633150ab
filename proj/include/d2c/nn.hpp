#pragma once

#include "d2c/autodiff.hpp"

#include <string>
#include <vector>

namespace d2c::nn {

/// Registers `<prefix>.weight` (in x out) and `<prefix>.bias` (1 x out) with a
/// uniform(-1/sqrt(in), 1/sqrt(in)) initialization.
inline void add_linear(ad::ParameterTable& table, const std::string& prefix, int in, int out,
                       Rng& rng, double gain = 1.0) {
  const double bound = gain / std::sqrt(static_cast<double>(in));
  std::uniform_real_distribution<double> u(-bound, bound);
  Matrix w(in, out);
  for (int i = 0; i < in; ++i)
    for (int j = 0; j < out; ++j) w(i, j) = u(rng);
  table.add(prefix + ".weight", std::move(w));
  table.add(prefix + ".bias", Matrix::Zero(1, out));
}

inline ad::Var linear(ad::Tape& tape, ad::ParameterTable& table, const std::string& prefix,
                      ad::Var x) {
  ad::Var w = tape.param(table[prefix + ".weight"]);
  ad::Var b = tape.param(table[prefix + ".bias"]);
  return ad::add_row(ad::matmul(x, w), b);
}

inline Matrix linear_eval(const ad::ParameterTable& table, const std::string& prefix,
                          const Matrix& x) {
  Matrix out = x * table[prefix + ".weight"].value;
  out.rowwise() += table[prefix + ".bias"].value.row(0);
  return out;
}

inline Matrix silu_eval(const Matrix& x) {
  return (x.array() / (1.0 + (-x.array()).exp())).matrix();
}

/// Plain multilayer perceptron `layer0 .. layerN` with SiLU between layers and
/// a linear output.
struct Mlp {
  std::string prefix;
  std::vector<int> widths;  // input, hidden..., output

  void init(ad::ParameterTable& table, Rng& rng) const {
    for (std::size_t i = 0; i + 1 < widths.size(); ++i)
      add_linear(table, name(i), widths[i], widths[i + 1], rng);
  }

  ad::Var forward(ad::Tape& tape, ad::ParameterTable& table, ad::Var x) const {
    for (std::size_t i = 0; i + 1 < widths.size(); ++i) {
      x = linear(tape, table, name(i), x);
      if (i + 2 < widths.size()) x = ad::silu(x);
    }
    return x;
  }

  Matrix evaluate(const ad::ParameterTable& table, Matrix x) const {
    for (std::size_t i = 0; i + 1 < widths.size(); ++i) {
      x = linear_eval(table, name(i), x);
      if (i + 2 < widths.size()) x = silu_eval(x);
    }
    return x;
  }

  std::string name(std::size_t i) const { return prefix + ".layer" + std::to_string(i); }
};

struct AdamWConfig {
  double learning_rate = 1e-3;
  double beta1 = 0.9;
  double beta2 = 0.999;
  double eps = 1e-8;
  double weight_decay = 0.0;
};

/// Adam with decoupled weight decay. One instance per parameter table.
class AdamW {
 public:
  AdamW() = default;
  AdamW(const ad::ParameterTable& table, AdamWConfig config) : config_(config) {
    for (const auto& p : table) {
      m_.push_back(Matrix::Zero(p.value.rows(), p.value.cols()));
      v_.push_back(Matrix::Zero(p.value.rows(), p.value.cols()));
    }
  }

  void step(ad::ParameterTable& table) {
    require(table.size() == m_.size(), Errc::table_mismatch, "optimizer",
            "parameter table does not match optimizer state");
    ++t_;
    const double c1 = 1.0 - std::pow(config_.beta1, static_cast<double>(t_));
    const double c2 = 1.0 - std::pow(config_.beta2, static_cast<double>(t_));
    const double lr = config_.learning_rate;
    for (std::size_t i = 0; i < table.size(); ++i) {
      auto& p = table.at(i);
      m_[i] = config_.beta1 * m_[i] + (1.0 - config_.beta1) * p.grad;
      v_[i] = config_.beta2 * v_[i] + (1.0 - config_.beta2) * p.grad.cwiseAbs2();
      if (lr == 0.0) continue;
      p.value *= (1.0 - lr * config_.weight_decay);
      p.value.array() -=
          lr * (m_[i].array() / c1) / ((v_[i].array() / c2).sqrt() + config_.eps);
    }
  }

  long steps() const { return t_; }
  const std::vector<Matrix>& first_moments() const { return m_; }
  const std::vector<Matrix>& second_moments() const { return v_; }
  void restore(long t, std::vector<Matrix> m, std::vector<Matrix> v) {
    t_ = t;
    m_ = std::move(m);
    v_ = std::move(v);
  }

 private:
  AdamWConfig config_;
  long t_ = 0;
  std::vector<Matrix> m_;
  std::vector<Matrix> v_;
};

}  // namespace d2c::nn
