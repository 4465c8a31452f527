#pragma once

#include <algorithm>
#include <cmath>
#include <vector>

#include "acmh/core.hpp"

namespace acmh {

// Integrated autocorrelation time 1 + 2 sum_{t<=L*} rho_t. Autocovariances
// use the biased 1/M normalization; the sum stops at the first lag where
// |rho_t| drops below 2/sqrt(M - t), capped at lag 1000.
inline double iact(std::span<const double> x) {
  const auto m = static_cast<Eigen::Index>(x.size());
  if (m < 10) throw std::invalid_argument("iact: need at least 10 points");
  double mean = 0.0;
  double lo = x[0], hi = x[0];
  for (double v : x) {
    mean += v;
    lo = std::min(lo, v);
    hi = std::max(hi, v);
  }
  mean /= static_cast<double>(m);
  if (lo == hi) throw degenerate_series_error("iact: constant series");
  double c0 = 0.0;
  for (double v : x) c0 += (v - mean) * (v - mean);
  if (c0 <= 0.0) throw degenerate_series_error("iact: constant series");

  const Eigen::Index max_lag = std::min<Eigen::Index>(1000, m - 1);
  double s = 0.0;
  for (Eigen::Index t = 1; t <= max_lag; ++t) {
    double ct = 0.0;
    for (Eigen::Index i = 0; i + t < m; ++i) ct += (x[static_cast<size_t>(i)] - mean) * (x[static_cast<size_t>(i + t)] - mean);
    double rho = ct / c0;
    s += rho;
    if (std::abs(rho) <= 2.0 / std::sqrt(static_cast<double>(m - t))) break;
  }
  return 1.0 + 2.0 * s;
}

inline double iact(const std::vector<double>& x) { return iact(std::span<const double>(x)); }

// Mean squared successive difference; 2 sigma^2 (1 - rho_1) for a stationary
// series, which makes it a direct mixing speed readout.
inline double sq_jump(std::span<const double> x) {
  if (x.size() < 2) throw std::invalid_argument("sq_jump: need at least 2 points");
  double s = 0.0;
  for (size_t i = 0; i + 1 < x.size(); ++i) {
    double d = x[i + 1] - x[i];
    s += d * d;
  }
  return s / static_cast<double>(x.size() - 1);
}

inline double sq_jump(const std::vector<double>& x) { return sq_jump(std::span<const double>(x)); }

// Mean squared jump averaged over coordinates of a chain, plus the minimum.
struct SqJumpSummary {
  double avg;
  double min;
};

struct Kde {
  Eigen::ArrayXd sample;
  double bandwidth;
};

inline double silverman_bandwidth(const Eigen::ArrayXd& x) {
  const auto n = x.size();
  double mean = x.mean();
  double sd = std::sqrt((x - mean).square().sum() / static_cast<double>(n));
  std::vector<double> sorted(x.data(), x.data() + n);
  std::sort(sorted.begin(), sorted.end());
  auto quantile = [&](double p) {
    double pos = p * static_cast<double>(n - 1);
    auto lo = static_cast<size_t>(pos);
    size_t hi = std::min(lo + 1, sorted.size() - 1);
    double frac = pos - static_cast<double>(lo);
    return sorted[lo] * (1.0 - frac) + sorted[hi] * frac;
  };
  double iqr_scale = (quantile(0.75) - quantile(0.25)) / 1.34;
  double spread = std::min(sd, iqr_scale);
  if (spread <= 0.0) spread = std::max(sd, iqr_scale);
  if (spread <= 0.0) throw degenerate_series_error("silverman_bandwidth: zero spread sample");
  return 1.06 * spread * std::pow(static_cast<double>(n), -0.2);
}

inline Kde make_kde(std::span<const double> sample) {
  if (sample.size() < 2) throw std::invalid_argument("make_kde: need at least 2 points");
  Eigen::ArrayXd s = Eigen::Map<const Eigen::ArrayXd>(sample.data(), static_cast<Eigen::Index>(sample.size()));
  return Kde{s, silverman_bandwidth(s)};
}

inline Kde make_kde(std::span<const double> sample, double bandwidth) {
  if (!(bandwidth > 0.0)) throw std::invalid_argument("make_kde: bandwidth must be positive");
  Eigen::ArrayXd s = Eigen::Map<const Eigen::ArrayXd>(sample.data(), static_cast<Eigen::Index>(sample.size()));
  return Kde{s, bandwidth};
}

inline double kde_logpdf(const Kde& k, double x) {
  Eigen::ArrayXd v = -0.5 * ((k.sample - x) / k.bandwidth).square();
  double m = v.maxCoeff();
  if (m == neg_inf) return neg_inf;
  double s = (v - m).exp().sum();
  return m + std::log(s) - std::log(k.bandwidth * std::sqrt(2.0 * std::numbers::pi)) -
         std::log(static_cast<double>(k.sample.size()));
}

inline constexpr double kde_log_floor = -745.0;

// Average per-marginal predictive log score of test draws under chain KDEs.
// Underflowing evaluations are floored at -745 and counted.
inline double lpds(const Mat& chain, const Mat& test, long* floored = nullptr) {
  if (chain.cols() != test.cols()) throw std::invalid_argument("lpds: dimension mismatch");
  if (chain.rows() < 2 || test.rows() < 1) throw std::invalid_argument("lpds: empty input");
  const auto d = chain.cols();
  long floor_count = 0;
  double total = 0.0;
  for (Eigen::Index j = 0; j < d; ++j) {
    Kde k = make_kde(std::span<const double>(chain.col(j).data(), static_cast<size_t>(chain.rows())));
    double s = 0.0;
    for (Eigen::Index i = 0; i < test.rows(); ++i) {
      double lp = kde_logpdf(k, test(i, j));
      if (!(lp >= kde_log_floor)) {
        lp = kde_log_floor;
        ++floor_count;
      }
      s += lp;
    }
    total += s / static_cast<double>(test.rows());
  }
  if (floored) *floored = floor_count;
  return total / static_cast<double>(d);
}

// Half-open real intervals; +-inf endpoints allowed, assumed disjoint.
struct Interval {
  double lo;
  double hi;
};

inline bool contains(const std::vector<Interval>& region, double x) {
  for (const auto& iv : region)
    if (x >= iv.lo && x <= iv.hi) return true;
  return false;
}

inline double normal_cdf(double z) { return 0.5 * std::erfc(-z / std::numbers::sqrt2); }

inline double kde_interval_mass(const Kde& k, const Interval& iv) {
  double s = 0.0;
  for (Eigen::Index i = 0; i < k.sample.size(); ++i) {
    double xi = k.sample(i);
    double hi = iv.hi == pos_inf ? 1.0 : normal_cdf((iv.hi - xi) / k.bandwidth);
    double lo = iv.lo == neg_inf ? 0.0 : normal_cdf((iv.lo - xi) / k.bandwidth);
    s += hi - lo;
  }
  return s / static_cast<double>(k.sample.size());
}

// Censored likelihood score: exact log density inside the region of interest
// A, the log of the KDE mass of the complement elsewhere.
inline double censored_score(const Kde& k, std::span<const double> data,
                             const std::vector<Interval>& region) {
  if (data.empty()) throw std::invalid_argument("censored_score: empty data");
  double mass_a = 0.0;
  for (const auto& iv : region) mass_a += kde_interval_mass(k, iv);
  mass_a = std::min(mass_a, 1.0);
  double log_comp = mass_a >= 1.0 ? kde_log_floor : std::log1p(-mass_a);
  double s = 0.0;
  for (double x : data) {
    if (contains(region, x)) {
      double lp = kde_logpdf(k, x);
      s += std::max(lp, kde_log_floor);
    } else {
      s += std::max(log_comp, kde_log_floor);
    }
  }
  return s / static_cast<double>(data.size());
}

// CRPS of a Bernoulli predictive with success probability mu against y.
inline double crps_bernoulli(double mu, int y) {
  if (!(mu >= 0.0 && mu <= 1.0)) throw std::invalid_argument("crps_bernoulli: mu out of [0,1]");
  if (y != 0 && y != 1) throw std::invalid_argument("crps_bernoulli: y must be 0 or 1");
  return y == 1 ? (1.0 - mu) * (1.0 - mu) : mu * mu;
}

inline double acc_over_iact(double acc_rate, double iact_avg) {
  return 1000.0 * acc_rate / iact_avg;
}

inline double ii_per_time(double iters, double iact_avg, double cpu_seconds) {
  if (cpu_seconds <= 0.0) return 0.0;
  return iters / (iact_avg * cpu_seconds);
}

}  // namespace acmh
