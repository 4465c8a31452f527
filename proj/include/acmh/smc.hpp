#pragma once

#include <functional>
#include <optional>
#include <vector>

#include "acmh/arwmh.hpp"
#include "acmh/student_t.hpp"

namespace acmh {

struct SmcConfig {
  int n_stages = 10;     // temperature steps traversing psi_t = t/T
  int n_particles = 500;
  int n_moves = 10;      // random-walk sweeps per stage
  std::optional<StudentT> pi0;  // base distribution, default t(0, I, 3)
  bool arwmh_prepass = false;   // estimate the base location/scale from a short run
  long prepass_steps = 1000;

  void validate() const {
    if (n_stages < 1) throw std::invalid_argument("SmcConfig: n_stages must be >= 1");
    if (n_particles < 2) throw std::invalid_argument("SmcConfig: n_particles must be >= 2");
    if (n_moves < 0) throw std::invalid_argument("SmcConfig: n_moves must be >= 0");
    if (prepass_steps < 2) throw std::invalid_argument("SmcConfig: prepass_steps must be >= 2");
  }
};

struct ParticleSet {
  Mat particles;  // Np x d
  int stage = 0;
};

struct SmcTrace {
  std::vector<Vec> stage_weights;     // normalized weights before each resample
  std::vector<double> move_accept;    // acceptance fraction of each move stage
  std::optional<StudentT> pi0_used;   // base distribution after any prepass
};

// One uniform per stratum, inverted against the cumulative weights. Uniform
// weights map every index to itself.
inline std::vector<Eigen::Index> stratified_resample(const Vec& weights, Rng& rng) {
  const auto np = weights.size();
  if (np < 1) throw std::invalid_argument("stratified_resample: empty weights");
  if ((weights.array() < 0.0).any())
    throw std::invalid_argument("stratified_resample: negative weight");
  if (std::abs(weights.sum() - 1.0) > 1e-9)
    throw std::invalid_argument("stratified_resample: weights must sum to one");
  std::uniform_real_distribution<double> u01;
  std::vector<Eigen::Index> idx(static_cast<size_t>(np));
  Eigen::Index j = 0;
  double cum = weights(0);
  for (Eigen::Index i = 0; i < np; ++i) {
    double u = (static_cast<double>(i) + u01(rng)) / static_cast<double>(np);
    while (!(u < cum) && j + 1 < np) {
      ++j;
      cum += weights(j);
    }
    idx[static_cast<size_t>(i)] = j;
  }
  return idx;
}

namespace detail {

// Cholesky factor of the stage proposal covariance (2.38^2/d)(cov + 1e-6 I).
inline Mat stage_proposal_chol(const Mat& x) {
  const auto np = x.rows();
  const auto d = x.cols();
  Vec mean = x.colwise().mean();
  Mat centered = x.rowwise() - mean.transpose();
  Mat cov = centered.transpose() * centered / static_cast<double>(np);
  Mat c = (2.38 * 2.38 / static_cast<double>(d)) *
          (cov + 1e-6 * Mat::Identity(d, d));
  Eigen::LLT<Mat> llt(c);
  if (llt.info() != Eigen::Success)
    throw std::runtime_error("smc: stage proposal covariance not positive definite");
  return llt.matrixL();
}

}  // namespace detail

// M random-walk MH sweeps leaving log_eta invariant; the proposal covariance
// is frozen at the input particle spread. Returns the acceptance fraction.
inline double move_kernel(Mat& particles, const std::function<double(const Vec&)>& log_eta,
                          int m, Rng& rng) {
  if (m < 0) throw std::invalid_argument("move_kernel: negative sweep count");
  if (m == 0) return 0.0;
  const auto np = particles.rows();
  Mat chol = detail::stage_proposal_chol(particles);
  Vec cache(np);
  for (Eigen::Index i = 0; i < np; ++i) cache(i) = log_eta(particles.row(i).transpose());
  std::uniform_real_distribution<double> u01;
  long accepted = 0;
  for (int sweep = 0; sweep < m; ++sweep) {
    for (Eigen::Index i = 0; i < np; ++i) {
      Vec z = particles.row(i).transpose() +
              chol.triangularView<Eigen::Lower>() * standard_normal_vector(particles.cols(), rng);
      double lz = log_eta(z);
      if (lz > neg_inf) {
        double log_ratio = lz - cache(i);
        if (log_ratio >= 0.0 || std::log(u01(rng)) < log_ratio) {
          particles.row(i) = z.transpose();
          cache(i) = lz;
          ++accepted;
        }
      }
    }
  }
  return static_cast<double>(accepted) / static_cast<double>(m * np);
}

namespace detail {

// Stage moves tracking both log densities so the next reweight reuses them.
inline double move_stage(Mat& x, Vec& lpi, Vec& lpi0,
                         const std::function<double(const Vec&)>& log_pi, const StudentT& pi0,
                         double psi, int m, Rng& rng) {
  if (m == 0) return 0.0;
  const auto np = x.rows();
  Mat chol = stage_proposal_chol(x);
  std::uniform_real_distribution<double> u01;
  long accepted = 0;
  for (int sweep = 0; sweep < m; ++sweep) {
    for (Eigen::Index i = 0; i < np; ++i) {
      Vec z = x.row(i).transpose() +
              chol.triangularView<Eigen::Lower>() * standard_normal_vector(x.cols(), rng);
      double lz_pi = log_pi(z);
      double lz_pi0 = pi0.logpdf(z);
      double eta_z = (1.0 - psi) * lz_pi0 + psi * lz_pi;
      double eta_x = (1.0 - psi) * lpi0(i) + psi * lpi(i);
      if (eta_z > neg_inf) {
        double log_ratio = eta_z - eta_x;
        if (log_ratio >= 0.0 || std::log(u01(rng)) < log_ratio) {
          x.row(i) = z.transpose();
          lpi(i) = lz_pi;
          lpi0(i) = lz_pi0;
          ++accepted;
        }
      }
    }
  }
  return static_cast<double>(accepted) / static_cast<double>(m * np);
}

}  // namespace detail

// Annealed SMC along eta_t = pi0^(1-psi_t) pi^(psi_t), psi_t = t/T:
// reweight in log space, stratified resample every stage, then move.
inline ParticleSet smc_anneal(const std::function<double(const Vec&)>& log_pi, Eigen::Index d,
                              const SmcConfig& cfg, Rng& rng, SmcTrace* trace = nullptr) {
  cfg.validate();
  if (d < 1) throw std::invalid_argument("smc_anneal: dimension must be >= 1");
  StudentT pi0 = cfg.pi0 ? *cfg.pi0 : StudentT(Vec::Zero(d), Mat::Identity(d, d), 3.0);
  if (pi0.dim() != d) throw std::invalid_argument("smc_anneal: pi0 dimension mismatch");

  if (cfg.arwmh_prepass) {
    ArwmhSampler pre(log_pi, pi0.mu());
    for (long s = 0; s < cfg.prepass_steps; ++s) pre.step(rng);
    Mat cov = pre.empirical_covariance();
    cov += 1e-8 * (1.0 + cov.trace() / static_cast<double>(d)) * Mat::Identity(d, d);
    pi0 = StudentT(pre.empirical_mean(), cov, 3.0);
  }
  if (trace) trace->pi0_used = pi0;

  const auto np = static_cast<Eigen::Index>(cfg.n_particles);
  Mat x(np, d);
  Vec lpi(np), lpi0(np);
  for (Eigen::Index i = 0; i < np; ++i) {
    Vec p = pi0.sample(rng);
    x.row(i) = p.transpose();
    lpi0(i) = pi0.logpdf(p);
    lpi(i) = log_pi(p);
  }

  const double stages = static_cast<double>(cfg.n_stages);
  for (int t = 1; t <= cfg.n_stages; ++t) {
    const double dpsi = 1.0 / stages;
    const double psi = static_cast<double>(t) / stages;

    Vec logw = dpsi * (lpi - lpi0);
    double mx = logw.maxCoeff();
    if (!(mx > neg_inf))
      throw smc_underflow_error("smc_anneal: all weights underflow at stage " + std::to_string(t),
                                t);
    Vec wu = (logw.array() - mx).exp();
    Vec w = wu / wu.sum();
    if (trace) trace->stage_weights.push_back(w);

    auto idx = stratified_resample(w, rng);
    Mat xr(np, d);
    Vec lpir(np), lpi0r(np);
    for (Eigen::Index i = 0; i < np; ++i) {
      xr.row(i) = x.row(idx[static_cast<size_t>(i)]);
      lpir(i) = lpi(idx[static_cast<size_t>(i)]);
      lpi0r(i) = lpi0(idx[static_cast<size_t>(i)]);
    }
    x = std::move(xr);
    lpi = std::move(lpir);
    lpi0 = std::move(lpi0r);

    double acc = detail::move_stage(x, lpi, lpi0, log_pi, pi0, psi, cfg.n_moves, rng);
    if (trace) trace->move_accept.push_back(acc);
  }

  return {std::move(x), cfg.n_stages};
}

}  // namespace acmh
