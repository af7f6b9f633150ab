#pragma once

#include "d2c/autodiff.hpp"

#include <algorithm>
#include <filesystem>
#include <random>
#include <string>

namespace d2c::testing {

/// Scratch directory removed on scope exit.
class TempDir {
 public:
  explicit TempDir(const std::string& tag) {
    std::random_device rd;
    path_ = std::filesystem::temp_directory_path() /
            ("d2c-" + tag + "-" + std::to_string(rd()) + std::to_string(rd()));
    std::filesystem::create_directories(path_);
  }
  ~TempDir() {
    std::error_code ec;
    std::filesystem::remove_all(path_, ec);
  }
  TempDir(const TempDir&) = delete;
  TempDir& operator=(const TempDir&) = delete;

  const std::filesystem::path& path() const { return path_; }
  std::filesystem::path operator/(const std::string& name) const { return path_ / name; }

 private:
  std::filesystem::path path_;
};

struct GradCheck {
  std::size_t checked = 0;
  double max_rel_error = 0.0;
};

inline double rel_error(double a, double b) {
  const double scale = std::max({std::abs(a), std::abs(b), 1e-7});
  return std::abs(a - b) / scale;
}

/// Central differences on `samples` randomly chosen scalars of `params`
/// (all of them when there are fewer). `loss(true)` must record the loss and
/// run backward into the table's gradients; `loss(false)` only evaluates.
template <typename Loss>
GradCheck check_parameter_gradients(ad::ParameterTable& params, Loss&& loss, std::size_t samples,
                                    std::uint64_t seed, double h = 1e-5) {
  params.zero_grad();
  loss(true);
  std::vector<std::pair<std::size_t, Eigen::Index>> slots;
  for (std::size_t p = 0; p < params.size(); ++p)
    for (Eigen::Index k = 0; k < params.at(p).value.size(); ++k) slots.emplace_back(p, k);
  std::mt19937_64 rng(seed);
  std::shuffle(slots.begin(), slots.end(), rng);
  if (slots.size() > samples) slots.resize(samples);

  GradCheck out;
  for (auto [p, k] : slots) {
    double& v = params.at(p).value.data()[k];
    const double analytic = params.at(p).grad.data()[k];
    const double orig = v;
    v = orig + h;
    const double up = loss(false);
    v = orig - h;
    const double down = loss(false);
    v = orig;
    const double numeric = (up - down) / (2.0 * h);
    out.max_rel_error = std::max(out.max_rel_error, rel_error(analytic, numeric));
    ++out.checked;
  }
  return out;
}

/// Same check for the gradient of a function of a plain matrix input.
template <typename Loss>
GradCheck check_input_gradient(Matrix x, const Matrix& analytic, Loss&& loss, double h = 1e-5) {
  GradCheck out;
  for (Eigen::Index k = 0; k < x.size(); ++k) {
    const double orig = x.data()[k];
    x.data()[k] = orig + h;
    const double up = loss(x);
    x.data()[k] = orig - h;
    const double down = loss(x);
    x.data()[k] = orig;
    out.max_rel_error = std::max(out.max_rel_error, rel_error(analytic.data()[k], (up - down) / (2.0 * h)));
    ++out.checked;
  }
  return out;
}

}  // namespace d2c::testing
