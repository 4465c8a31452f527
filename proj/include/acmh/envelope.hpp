#pragma once

#include <functional>
#include <memory>
#include <utility>

#include "acmh/student_t.hpp"

namespace acmh {

// A fixed, fully known density that can be evaluated in log space and sampled.
// Used for the heavy-tailed floor component g0 of the proposal mixture.
struct Envelope {
  std::function<double(const Vec&)> log_density;
  std::function<Vec(Rng&)> draw;
};

inline Envelope envelope_from(StudentT p) {
  auto shared = std::make_shared<StudentT>(std::move(p));
  return Envelope{[shared](const Vec& x) { return shared->logpdf(x); },
                  [shared](Rng& rng) { return shared->sample(rng); }};
}

inline Envelope envelope_from(TMixture m) {
  auto shared = std::make_shared<TMixture>(std::move(m));
  return Envelope{[shared](const Vec& x) { return shared->logpdf(x); },
                  [shared](Rng& rng) { return shared->sample(rng); }};
}

struct EnvelopeReport {
  double beta0 = 0.0;
  long n_probes = 0;
  long violations = 0;             // probes with log pi - log g0 > log(1/beta0)
  double max_log_ratio = neg_inf;  // largest observed log pi - log g0
  Vec worst_point;
  bool ok() const { return violations == 0; }
};

// Empirical audit of the minorization beta0 * pi <= g0 at points drawn from g0
// (and an extra sampler when provided). A clean report is evidence, not proof;
// when log_pi is unnormalized the ratio is only meaningful up to its constant.
inline EnvelopeReport check_envelope(const std::function<double(const Vec&)>& log_pi,
                                     const Envelope& g0, double beta0, long n_probes, Rng& rng,
                                     const std::function<Vec(Rng&)>& extra_sampler = {}) {
  if (!(beta0 > 0.0 && beta0 <= 1.0))
    throw std::invalid_argument("check_envelope: beta0 must lie in (0, 1]");
  if (n_probes < 1) throw std::invalid_argument("check_envelope: need at least one probe");
  EnvelopeReport rep;
  rep.beta0 = beta0;
  const double bound = -std::log(beta0);
  auto probe = [&](const Vec& x) {
    double lr = log_pi(x) - g0.log_density(x);
    ++rep.n_probes;
    if (lr > rep.max_log_ratio) {
      rep.max_log_ratio = lr;
      rep.worst_point = x;
    }
    if (lr > bound) ++rep.violations;
  };
  for (long i = 0; i < n_probes; ++i) probe(g0.draw(rng));
  if (extra_sampler)
    for (long i = 0; i < n_probes; ++i) probe(extra_sampler(rng));
  return rep;
}

}  // namespace acmh
