#pragma once

// Ring construction of a latent distribution q that carries no mass on a set
// S of prior mass delta while staying close to the prior p = N(0, I) in KL
// and W2, plus the same quantities after Gaussian noising.

#include "d2c/core.hpp"

#include <boost/math/quadrature/gauss.hpp>
#include <boost/math/special_functions/erf.hpp>

#include <algorithm>
#include <cmath>
#include <limits>
#include <numbers>
#include <span>
#include <vector>

namespace d2c {

struct QuadratureOptions {
  int min_nodes = 10000;
  double tolerance = 1e-12;
  int max_doublings = 8;
};

/// Composite 20-point Gauss-Legendre over consecutive pieces
/// [breaks[i], breaks[i+1]]; panel counts double until two passes agree.
template <typename F>
double integrate_pieces(F&& f, std::span<const double> breaks, const QuadratureOptions& opt = {}) {
  using Rule = boost::math::quadrature::gauss<double, 20>;
  require(breaks.size() >= 2, Errc::invalid_parameter, "priorhole", "need at least one interval");
  const std::size_t pieces = breaks.size() - 1;
  auto pass = [&](std::size_t panels) {
    double total = 0.0;
    for (std::size_t i = 0; i < pieces; ++i) {
      const double a = breaks[i], b = breaks[i + 1];
      if (!(b > a)) continue;
      const double h = (b - a) / static_cast<double>(panels);
      for (std::size_t j = 0; j < panels; ++j) {
        const double lo = a + h * static_cast<double>(j);
        const double hi = j + 1 == panels ? b : lo + h;
        total += Rule::integrate(f, lo, hi);
      }
    }
    return total;
  };
  std::size_t panels = static_cast<std::size_t>(
      std::ceil(static_cast<double>(opt.min_nodes) / (20.0 * static_cast<double>(pieces))));
  panels = std::max<std::size_t>(panels, 1);
  double prev = pass(panels);
  for (int k = 0; k < opt.max_doublings; ++k) {
    panels *= 2;
    const double next = pass(panels);
    if (!std::isfinite(next)) break;
    if (std::abs(next - prev) <= opt.tolerance * std::max(1.0, std::abs(next))) return next;
    prev = next;
  }
  fail(Errc::quadrature_nonconvergence, "priorhole", "composite quadrature did not settle");
}

inline double std_normal_cdf(double x) { return 0.5 * std::erfc(-x / std::numbers::sqrt2); }

inline double std_normal_pdf(double x) {
  return std::exp(-0.5 * x * x) / std::sqrt(2.0 * std::numbers::pi);
}

inline double std_normal_quantile(double u) {
  require(u > 0.0 && u < 1.0, Errc::invalid_parameter, "priorhole", "quantile level must lie in (0, 1)");
  return -std::numbers::sqrt2 * boost::math::erfc_inv(2.0 * u);
}

/// Mass of N(0, I_d) inside the ball of radius R: erf(R / sqrt 2) for d = 1,
/// 1 - exp(-R^2 / 2) for d = 2.
inline double gaussian_ball_mass(double radius, int d) {
  require(d == 1 || d == 2, Errc::invalid_parameter, "priorhole", "dimension must be 1 or 2");
  require(radius >= 0.0, Errc::invalid_parameter, "priorhole", "radius must be >= 0");
  if (d == 1) return std::erf(radius / std::numbers::sqrt2);
  return -std::expm1(-0.5 * radius * radius);
}

/// Radial density of |z| under N(0, I_d).
inline double radial_density(double r, int d) {
  if (d == 1) return 2.0 * std_normal_pdf(r);
  return r * std::exp(-0.5 * r * r);
}

/// Radius whose ball carries mass m, by bisection.
inline double invert_mass(double mass, int d) {
  require(d == 1 || d == 2, Errc::invalid_parameter, "priorhole", "dimension must be 1 or 2");
  require(mass >= 0.0 && mass < 1.0, Errc::invalid_parameter, "priorhole", "mass must lie in [0, 1)");
  if (mass == 0.0) return 0.0;
  double lo = 0.0, hi = 1.0;
  while (gaussian_ball_mass(hi, d) < mass) hi *= 2.0;
  for (int it = 0; it < 200 && hi - lo > 1e-15 * std::max(1.0, hi); ++it) {
    const double mid = 0.5 * (lo + hi);
    (gaussian_ball_mass(mid, d) < mass ? lo : hi) = mid;
  }
  return 0.5 * (lo + hi);
}

/// Radii r_0 = 0 < r_1 < ... < r_2n with ball masses i delta / n. q is 2p on
/// the shells [r_2k, r_2k+1), 0 on [r_2k+1, r_2k+2) and p beyond r_2n.
struct RingConstruction {
  double delta = 0.0;
  int n = 0;
  int d = 1;
  std::vector<double> radii;
};

inline RingConstruction build_rings(double delta, int n, int d) {
  require(delta > 0.0 && delta < 0.5, Errc::invalid_parameter, "priorhole", "invalid delta: need 0 < delta < 0.5");
  require(n >= 1, Errc::invalid_parameter, "priorhole", "need at least one ring pair");
  require(d == 1 || d == 2, Errc::invalid_parameter, "priorhole", "dimension must be 1 or 2");
  RingConstruction c{delta, n, d, {}};
  c.radii.reserve(static_cast<std::size_t>(2 * n + 1));
  for (int i = 0; i <= 2 * n; ++i) c.radii.push_back(invert_mass(i * delta / n, d));
  return c;
}

/// Radial density of q: twice p on even shells, zero on odd shells, p beyond r_2n.
inline double q_radial_density(const RingConstruction& c, double r) {
  const auto it = std::upper_bound(c.radii.begin(), c.radii.end(), r);
  if (it == c.radii.end()) return radial_density(r, c.d);
  if (it == c.radii.begin()) return 0.0;
  return (it - c.radii.begin() - 1) % 2 == 0 ? 2.0 * radial_density(r, c.d) : 0.0;
}

namespace detail {

/// Sum over the shells [r_i, r_i+1) selected by `pick(i)` of the integral of f.
template <typename Pick, typename F>
double over_shells(const RingConstruction& c, Pick&& pick, F&& f) {
  double total = 0.0;
  for (std::size_t i = 0; i + 1 < c.radii.size(); ++i) {
    if (!pick(i)) continue;
    const double b[2] = {c.radii[i], c.radii[i + 1]};
    total += integrate_pieces(f, b);
  }
  return total;
}

inline bool odd_shell(std::size_t i) { return i % 2 == 1; }
inline bool any_shell(std::size_t) { return true; }

}  // namespace detail

/// p-mass of the hole S = union of [r_2k+1, r_2k+2).
inline double hole_prior_mass(const RingConstruction& c) {
  return detail::over_shells(c, detail::odd_shell, [&](double r) { return radial_density(r, c.d); });
}

inline double hole_q_mass(const RingConstruction& c) {
  return detail::over_shells(c, detail::odd_shell, [&](double r) { return q_radial_density(c, r); });
}

/// Integral of q over the whole space; the tail beyond r_2n is cut where p is negligible.
inline double q_total_mass(const RingConstruction& c) {
  const double tail[2] = {c.radii.back(), c.radii.back() + 40.0};
  auto q = [&](double r) { return q_radial_density(c, r); };
  return detail::over_shells(c, detail::any_shell, q) + integrate_pieces(q, tail);
}

/// KL(q || p) by quadrature of q log(q / p). Beyond r_2n q = p contributes nothing.
inline double kl_divergence(const RingConstruction& c) {
  return detail::over_shells(c, detail::any_shell, [&](double r) {
    const double q = q_radial_density(c, r);
    return q > 0.0 ? q * std::log(q / radial_density(r, c.d)) : 0.0;
  });
}

/// Exact W2 between q and p in one dimension from the quantile integral.
/// By symmetry, and because the CDFs agree beyond r_2n,
///   W2^2 = 2 int_{1/2}^{1/2 + delta} (F_q^-1(u) - Phi^-1(u))^2 du.
/// On the k-th piece g = u - 1/2 in [k delta/n, (k+1) delta/n):
///   F_q^-1(u) = Phi^-1(1/2 + (g + k delta/n) / 2).
inline double wasserstein2_exact_1d(const RingConstruction& c, const QuadratureOptions& opt = {}) {
  require(c.d == 1, Errc::invalid_parameter, "priorhole", "exact W2 is only available for d = 1");
  const double step = c.delta / c.n;
  double w2sq = 0.0;
  for (int k = 0; k < c.n; ++k) {
    const double breaks[2] = {k * step, (k + 1) * step};
    auto integrand = [&](double g) {
      const double zq = std_normal_quantile(0.5 + 0.5 * (g + k * step));
      const double zp = std_normal_quantile(0.5 + g);
      return (zq - zp) * (zq - zp);
    };
    QuadratureOptions piece = opt;
    piece.min_nodes = std::max(20, opt.min_nodes / c.n);
    w2sq += integrate_pieces(integrand, breaks, piece);
  }
  return std::sqrt(std::max(0.0, 2.0 * w2sq));
}

/// Transport within each ring pair moves mass at most r_2k+2 - r_2k, so
/// W2^2 <= max_k (r_2k+2 - r_2k)^2.
inline double w2_bound(const RingConstruction& c) {
  double best = 0.0;
  for (int k = 0; k < c.n; ++k) {
    const double gap = c.radii[static_cast<std::size_t>(2 * k + 2)] - c.radii[static_cast<std::size_t>(2 * k)];
    best = std::max(best, gap * gap);
  }
  return best;
}

/// h(y) = q^(alpha)(y) / phi(y) for the 1-D noised marginal of sqrt(alpha) z + sqrt(1 - alpha) eps:
///   h(y) = 1 + sum_shells sign * P(z in shell | y),  z | y ~ N(sqrt(alpha) y, 1 - alpha),
/// with sign +1 on even shells, -1 on odd shells, on both sides of the origin.
inline double noised_density_ratio(const RingConstruction& c, double alpha, double y) {
  const double mu = std::sqrt(alpha) * y;
  const double s = std::sqrt(1.0 - alpha);
  double h = 1.0;
  for (std::size_t i = 0; i + 1 < c.radii.size(); ++i) {
    const double sign = i % 2 == 0 ? 1.0 : -1.0;
    const double a = c.radii[i], b = c.radii[i + 1];
    const double right = std_normal_cdf((b - mu) / s) - std_normal_cdf((a - mu) / s);
    const double left = std_normal_cdf((-a - mu) / s) - std_normal_cdf((-b - mu) / s);
    h += sign * (right + left);
  }
  return std::max(h, 0.0);
}

namespace detail {

/// Breakpoints for integrating over y: the shell edges mapped through
/// sqrt(alpha), both sides, padded out to +-12.
inline std::vector<double> noised_breaks(const RingConstruction& c, double alpha) {
  std::vector<double> b{-12.0, 12.0};
  for (double r : c.radii) {
    const double y = r / std::sqrt(alpha);
    if (y < 12.0) {
      b.push_back(y);
      b.push_back(-y);
    }
  }
  std::sort(b.begin(), b.end());
  b.erase(std::unique(b.begin(), b.end()), b.end());
  return b;
}

}  // namespace detail

/// KL(q^(alpha) || N(0, 1)) = int phi h log h.
inline double noised_hole_kl(const RingConstruction& c, double alpha, const QuadratureOptions& opt = {}) {
  require(c.d == 1, Errc::invalid_parameter, "priorhole", "noised KL is only available for d = 1");
  require(alpha > 0.0 && alpha <= 1.0, Errc::invalid_range, "priorhole", "alpha must lie in (0, 1]");
  if (alpha == 1.0) return kl_divergence(c);
  auto integrand = [&](double y) {
    const double h = noised_density_ratio(c, alpha, y);
    return h > 0.0 ? std_normal_pdf(y) * h * std::log(h) : 0.0;
  };
  auto breaks = detail::noised_breaks(c, alpha);
  return std::max(0.0, integrate_pieces(integrand, breaks, opt));
}

struct HoleMasses {
  double prior = 0.0;
  double noised = 0.0;
};

/// Prior mass and q^(alpha) mass of the hole set S (both sides of the origin).
inline HoleMasses noised_hole_masses(const RingConstruction& c, double alpha) {
  require(c.d == 1, Errc::invalid_parameter, "priorhole", "noised masses are only available for d = 1");
  require(alpha > 0.0 && alpha <= 1.0, Errc::invalid_range, "priorhole", "alpha must lie in (0, 1]");
  HoleMasses m;
  m.prior = hole_prior_mass(c);
  if (alpha == 1.0) return {m.prior, hole_q_mass(c)};
  for (std::size_t i = 1; i + 1 < c.radii.size(); i += 2) {
    const double b[2] = {c.radii[i], c.radii[i + 1]};
    m.noised += 2.0 * integrate_pieces(
                          [&](double y) { return std_normal_pdf(y) * noised_density_ratio(c, alpha, y); }, b);
  }
  return m;
}

struct HoleReport {
  double delta = 0.0;
  int n = 0;
  int d = 1;
  double p_mass = 0.0;
  double q_mass = 0.0;
  double kl = 0.0;
  double w2 = std::numeric_limits<double>::quiet_NaN();  // exact, d = 1 only
  double w2_bound = 0.0;                                 // bound on W2^2
};

inline HoleReport hole_report(const RingConstruction& c) {
  HoleReport r;
  r.delta = c.delta;
  r.n = c.n;
  r.d = c.d;
  r.p_mass = hole_prior_mass(c);
  r.q_mass = hole_q_mass(c);
  r.kl = kl_divergence(c);
  if (c.d == 1) r.w2 = wasserstein2_exact_1d(c);
  r.w2_bound = w2_bound(c);
  return r;
}

}  // namespace d2c
