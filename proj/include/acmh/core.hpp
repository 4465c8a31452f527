#pragma once

#include <Eigen/Dense>

#include <cmath>
#include <cstdint>
#include <limits>
#include <numbers>
#include <random>
#include <span>
#include <stdexcept>
#include <string>

namespace acmh {

using Vec = Eigen::VectorXd;
using Mat = Eigen::MatrixXd;
using Rng = std::mt19937_64;

inline constexpr double neg_inf = -std::numeric_limits<double>::infinity();
inline constexpr double pos_inf = std::numeric_limits<double>::infinity();

// Thrown when every mixture component underflows at a query point, so
// responsibilities have no well defined normalization.
struct degenerate_point_error : std::runtime_error {
  using std::runtime_error::runtime_error;
};

// Thrown by autocorrelation routines on a constant series.
struct degenerate_series_error : std::runtime_error {
  using std::runtime_error::runtime_error;
};

struct insufficient_data_error : std::runtime_error {
  using std::runtime_error::runtime_error;
};

// Raised when an annealing stage produces an all-zero weight vector.
struct smc_underflow_error : std::runtime_error {
  smc_underflow_error(const std::string& what, int stage_)
      : std::runtime_error(what), stage(stage_) {}
  int stage;
};

inline double log_sum_exp(double a, double b) {
  if (a == neg_inf) return b;
  if (b == neg_inf) return a;
  double m = std::max(a, b);
  return m + std::log1p(std::exp(std::min(a, b) - m));
}

inline double log_sum_exp(std::span<const double> v) {
  double m = neg_inf;
  for (double x : v) m = std::max(m, x);
  if (m == neg_inf || std::isinf(m)) return m;
  double s = 0.0;
  for (double x : v) s += std::exp(x - m);
  return m + std::log(s);
}

inline double log_sum_exp(const Vec& v) {
  return log_sum_exp(std::span<const double>(v.data(), static_cast<size_t>(v.size())));
}

// log(1 + exp(x)) without overflow.
inline double log1pexp(double x) {
  if (x > 33.0) return x;
  if (x < -37.0) return std::exp(x);
  return std::log1p(std::exp(x));
}

// log Phi(z); switches to the asymptotic expansion once erfc underflows.
inline double log_normal_cdf(double z) {
  if (z > -25.0) {
    return std::log(0.5 * std::erfc(-z / std::numbers::sqrt2));
  }
  // Phi(z) ~ phi(z)/|z| * (1 - 1/z^2 + 3/z^4) for z -> -inf
  double z2 = z * z;
  double series = 1.0 - 1.0 / z2 + 3.0 / (z2 * z2);
  return -0.5 * z2 - 0.5 * std::log(2.0 * std::numbers::pi) - std::log(-z) + std::log(series);
}

inline Vec standard_normal_vector(Eigen::Index d, Rng& rng) {
  std::normal_distribution<double> n01;
  Vec u(d);
  for (Eigen::Index i = 0; i < d; ++i) u(i) = n01(rng);
  return u;
}

inline double draw_gamma(double shape, double scale, Rng& rng) {
  std::gamma_distribution<double> g(shape, scale);
  return g(rng);
}

// Independent child seed streams from one master seed (splitmix64 step).
inline std::uint64_t derive_seed(std::uint64_t master, std::uint64_t stream) {
  std::uint64_t x = master + 0x9e3779b97f4a7c15ULL * (stream + 1);
  x ^= x >> 30;
  x *= 0xbf58476d1ce4e5b9ULL;
  x ^= x >> 27;
  x *= 0x94d049bb133111ebULL;
  x ^= x >> 31;
  return x;
}

inline std::uint64_t fnv1a64(const void* data, std::size_t n, std::uint64_t h = 0xcbf29ce484222325ULL) {
  const auto* p = static_cast<const unsigned char*>(data);
  for (std::size_t i = 0; i < n; ++i) {
    h ^= p[i];
    h *= 0x100000001b3ULL;
  }
  return h;
}

}  // namespace acmh
