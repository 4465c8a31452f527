#pragma once

#include <algorithm>
#include <chrono>
#include <cstdint>
#include <optional>
#include <string>
#include <utility>
#include <vector>

#include "acmh/fit.hpp"
#include "acmh/kernels.hpp"
#include "acmh/smc.hpp"
#include "acmh/targets.hpp"

namespace acmh {

namespace detail {

inline constexpr std::uint64_t stream_smc = 1;
inline constexpr std::uint64_t stream_trial = 2;
inline constexpr std::uint64_t stream_main = 3;
inline constexpr std::uint64_t stream_fit = 4;

// staircase schedule over a phase of the given length: block k of the a_n
// equal blocks uses (k+1)/a_n; a remainder or a short phase rides the top step
inline double staircase(long j, long phase_len, long a_n) {
  long b = phase_len / a_n;
  if (b < 1) return 1.0;
  long k = std::min(a_n - 1, (j - 1) / b);
  return static_cast<double>(k + 1) / static_cast<double>(a_n);
}

}  // namespace detail

struct RunConfig {
  long n_burnin = 0;
  long n_sample = 10000;   // must be divisible by a_n
  long refit_stage1 = 2000;
  long refit_stage2 = 4000;
  long a_n = 10;
  long iota_rw = 10;       // random-walk composition cadence; 0 disables it
  ProposalConfig proposal; // delta is overwritten by the schedule each iteration
  std::uint64_t seed = 0;
  bool record_trial = true;
  bool append_accepted_proposal = false;  // variant: append z' instead of x'_{n-1}
  bool freeze_after_burnin = false;
  bool adapt = true;
  long refit_subsample = 10000;  // cap on points fed to each refit
  std::optional<double> delta_override;
  FitConfig fit;
  SmcConfig smc;
  std::optional<Vec> explicit_start;       // both chains start here when given
  std::optional<TMixture> initial_mixture; // skips SMC; requires explicit_start

  void validate() const {
    if (n_burnin < 0) throw std::invalid_argument("RunConfig: n_burnin must be >= 0");
    if (n_sample < 1) throw std::invalid_argument("RunConfig: n_sample must be >= 1");
    if (a_n < 1) throw std::invalid_argument("RunConfig: a_n must be >= 1");
    if (n_sample % a_n != 0)
      throw std::invalid_argument("RunConfig: n_sample must be divisible by a_n");
    if (refit_stage1 < 1 || refit_stage2 < 1)
      throw std::invalid_argument("RunConfig: refit cadences must be >= 1");
    if (iota_rw < 0) throw std::invalid_argument("RunConfig: iota_rw must be >= 0");
    if (refit_subsample < 1)
      throw std::invalid_argument("RunConfig: refit_subsample must be >= 1");
    if (delta_override && !(*delta_override >= 0.0 && *delta_override <= 1.0))
      throw std::invalid_argument("RunConfig: delta_override out of range");
    if (initial_mixture && !explicit_start)
      throw std::invalid_argument("RunConfig: initial_mixture requires explicit_start");
    proposal.validate();
    fit.validate();
    smc.validate();
  }
};

// independence-weight staircase over the sampling phase
inline double delta_at(long n, const RunConfig& cfg) {
  if (n < 1 || n > cfg.n_sample)
    throw std::invalid_argument("delta_at: iteration index out of range");
  return detail::staircase(n, cfg.n_sample, cfg.a_n);
}

struct ChainOutput {
  Mat iterates;                     // sampling-phase states, n_sample x d
  std::vector<char> accept_flags;   // primary-step acceptance per recorded iteration
  std::vector<Branch> branch_tags;  // primary-step branch per recorded iteration
  std::vector<std::pair<long, TMixture>> mixture_snapshots;  // global iteration -> refit
  double accept_rate = 0.0;         // primary acceptances over the sampling phase
};

struct RunResult {
  ChainOutput main_chain;
  ChainOutput trial_chain;
  std::vector<Vec> history;  // final trial history H^n
  std::vector<std::pair<long, std::uint64_t>> refit_input_hashes;
  std::vector<std::string> warnings;
  long rw_proposals_main = 0;
  long rw_accepts_main = 0;
  long rw_proposals_trial = 0;
  long rw_accepts_trial = 0;
  double burnin_accept_rate = 0.0;  // main chain, primary steps
  double sampling_seconds = 0.0;    // wall clock of the iteration loop, SMC init excluded
  std::optional<ParticleSet> particles;
  SmcTrace smc_trace;
  std::optional<TMixture> final_mixture;
};

// evenly spaced thinning used to cap refit cost; identity when under the cap
inline std::vector<Vec> refit_input(const std::vector<Vec>& history, long cap) {
  const long n = static_cast<long>(history.size());
  if (n <= cap) return history;
  std::vector<Vec> out;
  out.reserve(static_cast<size_t>(cap));
  for (long i = 0; i < cap; ++i)
    out.push_back(history[static_cast<size_t>((i * n) / cap)]);
  return out;
}

// FNV-1a over the raw coefficient bytes; the adaptation audit trail
inline std::uint64_t history_hash(const std::vector<Vec>& states) {
  std::uint64_t h = 14695981039346656037ull;
  auto mix = [&h](const void* data, size_t nbytes) {
    const auto* p = static_cast<const unsigned char*>(data);
    for (size_t i = 0; i < nbytes; ++i) {
      h ^= p[i];
      h *= 1099511628211ull;
    }
  };
  for (const Vec& v : states)
    mix(v.data(), sizeof(double) * static_cast<size_t>(v.size()));
  return h;
}

namespace detail {

struct ChainState {
  Vec x;
  double lpi = 0.0;
  double lg0 = 0.0;
  double lgm = 0.0;
  Rng rng;
};

struct StepOutcome {
  bool accepted = false;
  Branch branch = Branch::Cmh;
};

inline void refresh_state(ChainState& s, const Target& target, const TMixture& m,
                          double beta0) {
  s.lpi = target.log_density(s.x);
  s.lg0 = beta0 > 0.0 ? target.g0.log_density(s.x) : neg_inf;
  s.lgm = m.logpdf(s.x);
}

inline StepOutcome primary_step(ChainState& s, const Target& target, const TMixture& m,
                                const ProposalConfig& pcfg) {
  ProposalDraw pd = draw_acmh_cached(s.x, m, target.g0, pcfg, s.lg0, s.lgm, s.rng);
  double lpi_z = target.log_density(pd.z);
  double lg0_z = pcfg.beta0 > 0.0 ? target.g0.log_density(pd.z) : neg_inf;
  double lgm_z = m.logpdf(pd.z);
  double lr = acmh_log_ratio(s.lpi, lpi_z, log_qstar_from_parts(s.lg0, s.lgm, pcfg.beta0),
                             log_qstar_from_parts(lg0_z, lgm_z, pcfg.beta0));
  std::uniform_real_distribution<double> u01;
  StepOutcome o;
  o.branch = pd.branch;
  if (std::log(u01(s.rng)) < lr) {
    s.x = std::move(pd.z);
    s.lpi = lpi_z;
    s.lg0 = lg0_z;
    s.lgm = lgm_z;
    o.accepted = true;
  }
  return o;
}

inline double rw_logpdf(const Vec& point, const Vec& center, const StudentT& c, double kappa) {
  double infl = c.nu() > 2.0 ? c.nu() / (c.nu() - 2.0) : 1.0;
  const double d = static_cast<double>(c.dim());
  Vec y = c.chol().triangularView<Eigen::Lower>().solve(point - center);
  return -0.5 * d * std::log(2.0 * std::numbers::pi) -
         0.5 * (d * std::log(kappa * infl) + c.log_det_sigma()) -
         0.5 * y.squaredNorm() / (kappa * infl);
}

// Metropolis sub-step with the locally dominant component's moment-matched
// scale. Where the dominant component differs between the two endpoints the
// proposal is not symmetric, so the full Hastings correction is applied.
inline bool rw_substep(ChainState& s, const Target& target, const TMixture& m, double kappa,
                       double beta0) {
  Eigen::Index kx = m.top_component(s.x);
  const StudentT& cx = m.component(kx);
  double infl = cx.nu() > 2.0 ? cx.nu() / (cx.nu() - 2.0) : 1.0;
  Vec u = standard_normal_vector(m.dim(), s.rng);
  Vec lu = cx.chol().triangularView<Eigen::Lower>() * u;
  Vec z = s.x + std::sqrt(kappa * infl) * lu;
  double lpi_z = target.log_density(z);
  std::uniform_real_distribution<double> u01;
  double uval = u01(s.rng);
  if (lpi_z == neg_inf) return false;
  double lr = lpi_z - s.lpi;
  Eigen::Index kz = m.top_component(z);
  if (kz != kx)
    lr += rw_logpdf(s.x, z, m.component(kz), kappa) - rw_logpdf(z, s.x, cx, kappa);
  if (std::log(uval) < lr) {
    s.x = std::move(z);
    s.lpi = lpi_z;
    s.lg0 = beta0 > 0.0 ? target.g0.log_density(s.x) : neg_inf;
    s.lgm = m.logpdf(s.x);
    return true;
  }
  return false;
}

}  // namespace detail

// The two-chain loop: every iteration the trial chain takes an MH step under
// the current proposal (appending x'_{n-1} to the history on acceptance), then
// the main chain takes its step under the same proposal; every iota_rw-th
// iteration both chains compose in a random-walk sub-step; refits read only
// the trial history, on the stage cadence, with G locked after burn-in.
inline RunResult run(const Target& target, const RunConfig& cfg) {
  cfg.validate();
  const Eigen::Index d = target.dim;
  if (d < 1) throw std::invalid_argument("run: target dimension must be >= 1");
  if (!target.log_density) throw std::invalid_argument("run: target has no log density");
  if (cfg.proposal.beta0 > 0.0 && (!target.g0.log_density || !target.g0.draw))
    throw std::invalid_argument("run: beta0 > 0 requires a usable g0 envelope");

  RunResult out;
  Rng fit_rng(derive_seed(cfg.seed, detail::stream_fit));
  std::vector<std::pair<long, TMixture>> snapshots;
  std::optional<TMixture> mixture;

  auto do_fit = [&](long iteration, std::optional<int> lock_g) -> bool {
    std::vector<Vec> input = refit_input(out.history, cfg.refit_subsample);
    std::uint64_t hash = history_hash(input);
    FitConfig fc = cfg.fit;
    if (lock_g) fc.fixed_g = *lock_g;
    try {
      auto [mix, report] = fit_t_mixture(input, fc, fit_rng);
      mixture = std::move(mix);
      out.refit_input_hashes.emplace_back(iteration, hash);
      snapshots.emplace_back(iteration, *mixture);
      return true;
    } catch (const std::exception& e) {
      out.warnings.push_back("refit at iteration " + std::to_string(iteration) +
                             " skipped: " + e.what());
      return false;
    }
  };

  detail::ChainState main_chain, trial_chain;
  main_chain.rng.seed(derive_seed(cfg.seed, detail::stream_main));
  trial_chain.rng.seed(derive_seed(cfg.seed, detail::stream_trial));

  if (cfg.initial_mixture) {
    if (cfg.initial_mixture->dim() != d)
      throw std::invalid_argument("run: initial_mixture dimension mismatch");
    mixture = *cfg.initial_mixture;
  } else {
    Rng smc_rng(derive_seed(cfg.seed, detail::stream_smc));
    ParticleSet ps = smc_anneal(target.log_density, d, cfg.smc, smc_rng, &out.smc_trace);
    const auto np = ps.particles.rows();
    out.history.reserve(static_cast<size_t>(np) +
                        static_cast<size_t>(cfg.n_burnin + cfg.n_sample));
    Vec lpi(np);
    for (Eigen::Index i = 0; i < np; ++i) {
      out.history.push_back(ps.particles.row(i).transpose());
      lpi(i) = target.log_density(out.history.back());
    }
    Eigen::Index best = 0, second = -1;
    for (Eigen::Index i = 1; i < np; ++i)
      if (lpi(i) > lpi(best)) best = i;
    for (Eigen::Index i = 0; i < np; ++i) {
      if (i == best) continue;
      if (second < 0 || lpi(i) > lpi(second)) second = i;
    }
    main_chain.x = ps.particles.row(best).transpose();
    trial_chain.x = ps.particles.row(second).transpose();
    out.particles = std::move(ps);
    // initial proposal: fit over the particle cloud; no fallback exists yet
    std::vector<Vec> input = refit_input(out.history, cfg.refit_subsample);
    std::uint64_t hash = history_hash(input);
    auto [mix, report] = fit_t_mixture(input, cfg.fit, fit_rng);
    mixture = std::move(mix);
    out.refit_input_hashes.emplace_back(0, hash);
    snapshots.emplace_back(0, *mixture);
  }
  if (cfg.explicit_start) {
    if (cfg.explicit_start->size() != d)
      throw std::invalid_argument("run: explicit_start dimension mismatch");
    main_chain.x = *cfg.explicit_start;
    trial_chain.x = *cfg.explicit_start;
  }

  const double beta0 = cfg.proposal.beta0;
  detail::refresh_state(main_chain, target, *mixture, beta0);
  detail::refresh_state(trial_chain, target, *mixture, beta0);
  if (!std::isfinite(main_chain.lpi) || !std::isfinite(trial_chain.lpi))
    throw std::invalid_argument("run: non-finite log density at the start point");

  ChainOutput& mo = out.main_chain;
  ChainOutput& to = out.trial_chain;
  mo.iterates.resize(cfg.n_sample, d);
  mo.accept_flags.reserve(static_cast<size_t>(cfg.n_sample));
  mo.branch_tags.reserve(static_cast<size_t>(cfg.n_sample));
  if (cfg.record_trial) {
    to.iterates.resize(cfg.n_sample, d);
    to.accept_flags.reserve(static_cast<size_t>(cfg.n_sample));
    to.branch_tags.reserve(static_cast<size_t>(cfg.n_sample));
  }

  ProposalConfig pcfg = cfg.proposal;
  const long total = cfg.n_burnin + cfg.n_sample;
  long main_accepts_sampling = 0, main_accepts_burnin = 0, trial_accepts_sampling = 0;
  const auto loop_start = std::chrono::steady_clock::now();

  for (long n = 1; n <= total; ++n) {
    const bool sampling = n > cfg.n_burnin;
    const long j = sampling ? n - cfg.n_burnin : n;  // 1-based within the phase
    pcfg.delta = cfg.delta_override
                     ? *cfg.delta_override
                     : detail::staircase(j, sampling ? cfg.n_sample : cfg.n_burnin, cfg.a_n);

    Vec trial_prev = trial_chain.x;
    detail::StepOutcome ts = detail::primary_step(trial_chain, target, *mixture, pcfg);
    if (ts.accepted)
      out.history.push_back(cfg.append_accepted_proposal ? trial_chain.x : trial_prev);
    detail::StepOutcome ms = detail::primary_step(main_chain, target, *mixture, pcfg);

    if (cfg.iota_rw > 0 && n % cfg.iota_rw == 0) {
      ++out.rw_proposals_trial;
      out.rw_accepts_trial +=
          detail::rw_substep(trial_chain, target, *mixture, pcfg.kappa, beta0) ? 1 : 0;
      ++out.rw_proposals_main;
      out.rw_accepts_main +=
          detail::rw_substep(main_chain, target, *mixture, pcfg.kappa, beta0) ? 1 : 0;
    }

    if (sampling) {
      mo.iterates.row(j - 1) = main_chain.x.transpose();
      mo.accept_flags.push_back(ms.accepted ? 1 : 0);
      mo.branch_tags.push_back(ms.branch);
      main_accepts_sampling += ms.accepted ? 1 : 0;
      trial_accepts_sampling += ts.accepted ? 1 : 0;
      if (cfg.record_trial) {
        to.iterates.row(j - 1) = trial_chain.x.transpose();
        to.accept_flags.push_back(ts.accepted ? 1 : 0);
        to.branch_tags.push_back(ts.branch);
      }
    } else {
      main_accepts_burnin += ms.accepted ? 1 : 0;
    }

    bool refit_due =
        cfg.adapt && (sampling ? !cfg.freeze_after_burnin && j % cfg.refit_stage2 == 0
                               : j % cfg.refit_stage1 == 0);
    if (refit_due && n < total) {
      std::optional<int> lock_g;
      if (sampling) lock_g = static_cast<int>(mixture->size());
      if (do_fit(n, lock_g)) {
        // proposal changed: refresh the mixture caches at the current states
        main_chain.lgm = mixture->logpdf(main_chain.x);
        trial_chain.lgm = mixture->logpdf(trial_chain.x);
      }
    }
  }

  out.sampling_seconds =
      std::chrono::duration<double>(std::chrono::steady_clock::now() - loop_start).count();
  mo.accept_rate = static_cast<double>(main_accepts_sampling) / static_cast<double>(cfg.n_sample);
  to.accept_rate =
      static_cast<double>(trial_accepts_sampling) / static_cast<double>(cfg.n_sample);
  out.burnin_accept_rate =
      cfg.n_burnin > 0
          ? static_cast<double>(main_accepts_burnin) / static_cast<double>(cfg.n_burnin)
          : 0.0;
  mo.mixture_snapshots = snapshots;
  to.mixture_snapshots = std::move(snapshots);
  out.final_mixture = std::move(mixture);
  return out;
}

}  // namespace acmh
