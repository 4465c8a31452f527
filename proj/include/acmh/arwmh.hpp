#pragma once

#include <functional>

#include "acmh/core.hpp"

namespace acmh {

// Haario-style adaptive random walk Metropolis: Gaussian proposal with
// covariance (2.38^2/d) * (recursively updated empirical covariance) + 1e-10 I
// once d + 2 iterates have been seen, identity covariance before that.
class ArwmhSampler {
 public:
  ArwmhSampler(std::function<double(const Vec&)> log_target, Vec start)
      : log_target_(std::move(log_target)),
        x_(std::move(start)),
        d_(x_.size()),
        mean_(Vec::Zero(d_)),
        m2_(Mat::Zero(d_, d_)) {
    if (d_ < 1) throw std::invalid_argument("ArwmhSampler: empty state");
    if (!x_.allFinite()) throw std::invalid_argument("ArwmhSampler: non-finite start");
    lp_ = log_target_(x_);
    absorb(x_);
  }

  Eigen::Index dim() const { return d_; }
  const Vec& state() const { return x_; }
  double log_target_value() const { return lp_; }
  long steps() const { return steps_; }
  long accepted() const { return accepted_; }
  double accept_rate() const {
    return steps_ > 0 ? static_cast<double>(accepted_) / static_cast<double>(steps_) : 0.0;
  }
  bool adapting() const { return count_ >= d_ + 2; }

  Vec empirical_mean() const { return mean_; }
  Mat empirical_covariance() const {
    if (count_ < 2) return Mat::Zero(d_, d_);
    Mat c = m2_ / static_cast<double>(count_ - 1);
    return 0.5 * (c + c.transpose());
  }

  // Covariance the next proposal will use.
  Mat proposal_covariance() const {
    if (!adapting()) return Mat::Identity(d_, d_);
    double kappa = 2.38 * 2.38 / static_cast<double>(d_);
    Mat c = kappa * empirical_covariance();
    c += 1e-10 * Mat::Identity(d_, d_);
    return c;
  }

  bool step(Rng& rng) {
    Mat c = proposal_covariance();
    Eigen::LLT<Mat> llt(c);
    if (llt.info() != Eigen::Success)
      throw std::runtime_error("ArwmhSampler: proposal covariance not positive definite");
    Vec u = standard_normal_vector(d_, rng);
    Vec z = x_ + Mat(llt.matrixL()) * u;
    double lpz = log_target_(z);
    bool accept = false;
    if (lpz > neg_inf) {
      double log_ratio = lpz - lp_;  // +inf when escaping a zero-density start
      accept = log_ratio >= 0.0 ||
               std::log(std::uniform_real_distribution<double>()(rng)) < log_ratio;
    }
    if (accept) {
      x_ = std::move(z);
      lp_ = lpz;
      ++accepted_;
    }
    ++steps_;
    absorb(x_);
    return accept;
  }

 private:
  void absorb(const Vec& x) {
    ++count_;
    Vec delta = x - mean_;
    mean_ += delta / static_cast<double>(count_);
    m2_ += delta * (x - mean_).transpose();
  }

  std::function<double(const Vec&)> log_target_;
  Vec x_;
  Eigen::Index d_;
  double lp_ = 0.0;
  Vec mean_;
  Mat m2_;
  long count_ = 0;
  long steps_ = 0;
  long accepted_ = 0;
};

}  // namespace acmh
