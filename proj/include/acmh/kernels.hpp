#pragma once

#include <optional>
#include <string>

#include "acmh/envelope.hpp"
#include "acmh/student_t.hpp"

namespace acmh {

// Law of the autoregressive coefficient rho in [0, 1). Beta(1, 1) unless
// configured otherwise; a point mass is available for frozen-rho runs.
struct RhoLaw {
  double a = 1.0;
  double b = 1.0;
  std::optional<double> fixed;

  static RhoLaw beta(double a_, double b_) {
    if (!(a_ > 0.0) || !(b_ > 0.0)) throw std::invalid_argument("RhoLaw: beta parameters must be positive");
    return RhoLaw{a_, b_, std::nullopt};
  }
  static RhoLaw point(double rho) {
    if (!(rho >= 0.0) || rho >= 1.0) throw std::invalid_argument("RhoLaw: rho must lie in [0,1)");
    return RhoLaw{1.0, 1.0, rho};
  }

  double sample(Rng& rng) const {
    if (fixed) return *fixed;
    double x = draw_gamma(a, 1.0, rng);
    double y = draw_gamma(b, 1.0, rng);
    double r = x / (x + y);
    return std::min(r, 1.0 - 1e-12);
  }
};

struct ProposalConfig {
  double beta0 = 0.001;  // weight of the g0 floor inside q*
  double gamma = 0.2;    // block-step share of the reversible kernel
  double delta = 0.1;    // independence weight, set per iteration by the runner
  double p_b = 0.0;      // probability a coordinate is held fixed in a block step
  double kappa = 2.8322; // random walk scale, 2.38^2 / d
  RhoLaw rho_law{};

  static ProposalConfig defaults(int d) {
    ProposalConfig c;
    c.p_b = std::max(0.0, 1.0 - 10.0 / static_cast<double>(d));
    c.kappa = 2.38 * 2.38 / static_cast<double>(d);
    return c;
  }

  void validate() const {
    if (!(beta0 >= 0.0 && beta0 <= 1.0)) throw std::invalid_argument("ProposalConfig: beta0 out of range");
    if (!(gamma >= 0.0 && gamma <= 1.0)) throw std::invalid_argument("ProposalConfig: gamma out of range");
    if (!(delta >= 0.0 && delta <= 1.0)) throw std::invalid_argument("ProposalConfig: delta out of range");
    if (!(p_b >= 0.0 && p_b < 1.0)) throw std::invalid_argument("ProposalConfig: p_b out of range");
    if (!(kappa > 0.0)) throw std::invalid_argument("ProposalConfig: kappa must be positive");
  }
};

enum class Branch { IndependentG0, IndependentGM, Cmh, Block, Rw };

inline const char* branch_name(Branch b) {
  switch (b) {
    case Branch::IndependentG0: return "independent-g0";
    case Branch::IndependentGM: return "independent-gM";
    case Branch::Cmh: return "cmh";
    case Branch::Block: return "block";
    case Branch::Rw: return "rw";
  }
  return "?";
}

struct ProposalDraw {
  Vec z;
  Branch branch;
};

// One-step transition of the rho-correlated Student-t kernel. The law is
//   t_d(z; (1-rho) mu + rho x, c(x) Sigma, nu + d)
// with c(x) = nu/(nu+d) * (1-rho^2) * (1 + delta(x)/nu), which keeps the
// component density invariant for every rho.
inline StudentT reversible_step_distribution(const Vec& x, const StudentT& p, double rho) {
  if (!(rho >= 0.0) || rho >= 1.0) throw std::invalid_argument("reversible step: rho must lie in [0,1)");
  const double d = static_cast<double>(p.dim());
  double delta = p.mahalanobis(x);
  if (!std::isfinite(delta)) throw std::invalid_argument("reversible step: non-finite state");
  double c = p.nu() / (p.nu() + d) * (1.0 - rho * rho) * (1.0 + delta / p.nu());
  Vec loc = (1.0 - rho) * p.mu() + rho * x;
  return p.scaled(c, std::move(loc), p.nu() + d);
}

inline Vec draw_reversible_t(const Vec& x, const StudentT& p, double rho, Rng& rng) {
  return reversible_step_distribution(x, p, rho).sample(rng);
}

struct CmhDraw {
  Vec z;
  Eigen::Index k;
  double rho;
};

inline Eigen::Index draw_component_index(const Vec& resp, Rng& rng) {
  std::uniform_real_distribution<double> u01;
  double u = u01(rng);
  double acc = 0.0;
  for (Eigen::Index k = 0; k < resp.size(); ++k) {
    acc += resp(k);
    if (u <= acc) return k;
  }
  return resp.size() - 1;
}

// Correlated mixture step: pick a component by responsibility at x, draw a
// fresh rho, then take one reversible step against that component.
inline CmhDraw draw_cmh(const Vec& x, const TMixture& m, const RhoLaw& law, Rng& rng) {
  Vec resp = m.responsibilities(x);
  Eigen::Index k = draw_component_index(resp, rng);
  double rho = law.sample(rng);
  return CmhDraw{draw_reversible_t(x, m.component(k), rho, rng), k, rho};
}

// Block step: hold the B coordinates, redraw the A block from the exact
// component conditional. Component choice again by responsibility at x.
inline Vec draw_block(const Vec& x, const TMixture& m, const Partition& part, Rng& rng) {
  if (part.dim() != m.dim()) throw std::invalid_argument("draw_block: partition dimension mismatch");
  Vec resp = m.responsibilities(x);
  Eigen::Index k = draw_component_index(resp, rng);
  Vec x_b = part.take_b(x);
  StudentT cond = conditional_student_t(m.component(k), part, x_b);
  return part.assemble(cond.sample(rng), x_b);
}

// Degenerate block step with empty B: conditioning on nothing reduces to a
// full draw from the responsibility-selected component.
inline Vec draw_block_degenerate(const Vec& x, const TMixture& m, Rng& rng) {
  Vec resp = m.responsibilities(x);
  Eigen::Index k = draw_component_index(resp, rng);
  return m.component(k).sample(rng);
}

// Random coordinate split for block steps; resamples if A comes out empty.
inline Partition select_partition(int d, double p_b, Rng& rng) {
  if (d < 2) throw std::invalid_argument("select_partition: need d >= 2");
  if (!(p_b >= 0.0 && p_b < 1.0)) throw std::invalid_argument("select_partition: p_b out of range");
  std::uniform_real_distribution<double> u01;
  for (;;) {
    std::vector<int> a, b;
    for (int i = 0; i < d; ++i) (u01(rng) < p_b ? b : a).push_back(i);
    if (!a.empty()) return Partition(std::move(a), std::move(b), d);
  }
}

inline double log_qstar(const Vec& y, const TMixture& m, const Envelope& g0, double beta0) {
  if (beta0 <= 0.0) return m.logpdf(y);
  if (beta0 >= 1.0) return g0.log_density(y);
  return log_sum_exp(std::log(beta0) + g0.log_density(y), std::log1p(-beta0) + m.logpdf(y));
}

inline double log_qstar_from_parts(double lg0, double lgm, double beta0) {
  if (beta0 <= 0.0) return lgm;
  if (beta0 >= 1.0) return lg0;
  return log_sum_exp(std::log(beta0) + lg0, std::log1p(-beta0) + lgm);
}

// Full composed proposal. With probability delta an independent draw from
// q* = beta0 g0 + (1-beta0) gM; otherwise the dependent kernel, whose g0
// branch fires with probability beta0 g0(x)/q*(x) and whose remainder splits
// gamma/(1-gamma) between block and correlated steps. Cached log densities
// at the current state avoid re-evaluation in the chain loop.
inline ProposalDraw draw_acmh_cached(const Vec& x, const TMixture& m, const Envelope& g0,
                                     const ProposalConfig& cfg, double lg0_x, double lgm_x,
                                     Rng& rng) {
  cfg.validate();
  std::uniform_real_distribution<double> u01;
  if (u01(rng) < cfg.delta) {
    if (cfg.beta0 > 0.0 && u01(rng) < cfg.beta0)
      return ProposalDraw{g0.draw(rng), Branch::IndependentG0};
    return ProposalDraw{m.sample(rng), Branch::IndependentGM};
  }
  double p_g0 = 0.0;
  if (cfg.beta0 > 0.0) {
    double lqs = log_qstar_from_parts(lg0_x, lgm_x, cfg.beta0);
    p_g0 = std::exp(std::log(cfg.beta0) + lg0_x - lqs);
  }
  if (p_g0 > 0.0 && u01(rng) < p_g0) return ProposalDraw{g0.draw(rng), Branch::IndependentG0};
  if (u01(rng) < cfg.gamma) {
    const int d = static_cast<int>(m.dim());
    if (d >= 2) {
      Partition part = select_partition(d, cfg.p_b, rng);
      if (!part.index_b().empty())
        return ProposalDraw{draw_block(x, m, part, rng), Branch::Block};
    }
    return ProposalDraw{draw_block_degenerate(x, m, rng), Branch::Block};
  }
  return ProposalDraw{draw_cmh(x, m, cfg.rho_law, rng).z, Branch::Cmh};
}

inline ProposalDraw draw_acmh(const Vec& x, const TMixture& m, const Envelope& g0,
                              const ProposalConfig& cfg, Rng& rng) {
  double lg0_x = cfg.beta0 > 0.0 ? g0.log_density(x) : neg_inf;
  return draw_acmh_cached(x, m, g0, cfg, lg0_x, m.logpdf(x), rng);
}

// Unclipped log acceptance ratio. Every branch of the composed proposal is
// reversible with respect to q*, so only q* values enter, never the kernel
// density itself. The grouping below makes r(x,z) = -r(z,x) hold exactly.
inline double acmh_log_ratio(double lpi_x, double lpi_z, double lqs_x, double lqs_z) {
  if (lpi_z == neg_inf) return neg_inf;
  return (lpi_z - lpi_x) + (lqs_x - lqs_z);
}

inline double acmh_log_accept(const Vec& x, const Vec& z,
                              const std::function<double(const Vec&)>& log_pi, const TMixture& m,
                              const Envelope& g0, double beta0) {
  double r = acmh_log_ratio(log_pi(x), log_pi(z), log_qstar(x, m, g0, beta0),
                            log_qstar(z, m, g0, beta0));
  return std::min(0.0, r);
}

// Adaptive random walk proposal: Gaussian centered at x with covariance
// kappa * moment-matched scale of the locally dominant component.
inline Vec draw_rw(const Vec& x, const TMixture& m, double kappa, Rng& rng) {
  if (!(kappa > 0.0)) throw std::invalid_argument("draw_rw: kappa must be positive");
  Eigen::Index k = m.top_component(x);
  const StudentT& c = m.component(k);
  double infl = c.nu() > 2.0 ? c.nu() / (c.nu() - 2.0) : 1.0;
  Vec u = standard_normal_vector(m.dim(), rng);
  Vec lu = c.chol().triangularView<Eigen::Lower>() * u;
  return x + std::sqrt(kappa * infl) * lu;
}

}  // namespace acmh
