#pragma once

#include <Eigen/Dense>

#include <cmath>
#include <cstdint>
#include <random>
#include <stdexcept>
#include <string>
#include <string_view>
#include <utility>
#include <vector>

namespace d2c {

using Matrix = Eigen::MatrixXd;
using Vector = Eigen::VectorXd;
using RowVector = Eigen::RowVectorXd;

/// Error categories shared by every module. The CLI maps all of them to exit
/// code 1 and prints the component name with the message.
enum class Errc {
  invalid_parameter,
  shape_mismatch,
  degenerate_schedule,
  non_finite,
  degenerate_latent,
  single_class,
  empty_split,
  acceptance_starvation,
  quadrature_nonconvergence,
  invalid_range,
  io_error,
  corrupt_checkpoint,
  corrupt_header,
  truncated_payload,
  table_mismatch,
  dimension_mismatch,
  indefinite_covariance,
};

inline std::string_view errc_name(Errc code) {
  switch (code) {
    case Errc::invalid_parameter: return "invalid-parameter";
    case Errc::shape_mismatch: return "shape-mismatch";
    case Errc::degenerate_schedule: return "degenerate-schedule";
    case Errc::non_finite: return "non-finite";
    case Errc::degenerate_latent: return "degenerate-latent";
    case Errc::single_class: return "single-class-input";
    case Errc::empty_split: return "empty-split";
    case Errc::acceptance_starvation: return "acceptance-starvation";
    case Errc::quadrature_nonconvergence: return "quadrature-nonconvergence";
    case Errc::invalid_range: return "invalid-range";
    case Errc::io_error: return "io-error";
    case Errc::corrupt_checkpoint: return "corrupt-checkpoint";
    case Errc::corrupt_header: return "corrupt-header";
    case Errc::truncated_payload: return "truncated-payload";
    case Errc::table_mismatch: return "table-mismatch";
    case Errc::dimension_mismatch: return "dimension-mismatch";
    case Errc::indefinite_covariance: return "indefinite-covariance";
  }
  return "unknown";
}

class Error : public std::runtime_error {
 public:
  Error(Errc code, std::string component, const std::string& what)
      : std::runtime_error(component + ": " + std::string(errc_name(code)) + ": " + what),
        code_(code),
        component_(std::move(component)) {}

  Errc code() const noexcept { return code_; }
  const std::string& component() const noexcept { return component_; }

 private:
  Errc code_;
  std::string component_;
};

[[noreturn]] inline void fail(Errc code, std::string component, const std::string& what) {
  throw Error(code, std::move(component), what);
}

inline void require(bool cond, Errc code, const char* component, const std::string& what) {
  if (!cond) fail(code, component, what);
}

using Rng = std::mt19937_64;

inline std::uint64_t splitmix64(std::uint64_t x) {
  x += 0x9e3779b97f4a7c15ULL;
  x = (x ^ (x >> 30)) * 0xbf58476d1ce4e5b9ULL;
  x = (x ^ (x >> 27)) * 0x94d049bb133111ebULL;
  return x ^ (x >> 31);
}

/// Independent stream for (seed, a, b). Streams never depend on the order in
/// which they are requested, so per-item work can be scheduled freely.
inline Rng derive_rng(std::uint64_t seed, std::uint64_t a, std::uint64_t b = 0) {
  return Rng(splitmix64(splitmix64(splitmix64(seed) ^ a) ^ (b * 0x632be59bd9b4e019ULL)));
}

inline Matrix gaussian_matrix(Eigen::Index rows, Eigen::Index cols, Rng& rng) {
  std::normal_distribution<double> normal(0.0, 1.0);
  Matrix out(rows, cols);
  // row-major fill so a prefix of rows does not depend on the total row count
  for (Eigen::Index i = 0; i < rows; ++i)
    for (Eigen::Index j = 0; j < cols; ++j) out(i, j) = normal(rng);
  return out;
}

inline double uniform01(Rng& rng) {
  return std::uniform_real_distribution<double>(0.0, 1.0)(rng);
}

inline bool all_finite(const Matrix& m) { return m.allFinite(); }

/// Image layout is height x width x channels, flattened channel-fastest.
struct ImageShape {
  int height = 16;
  int width = 16;
  int channels = 3;

  int size() const { return height * width * channels; }
  int index(int y, int x, int c) const { return (y * width + x) * channels + c; }
  bool operator==(const ImageShape&) const = default;
};

}  // namespace d2c
