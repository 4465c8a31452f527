#include <catch2/catch_amalgamated.hpp>

#include "acmh/chain.hpp"
#include "acmh/diagnostics.hpp"
#include "support/oracles.hpp"

using namespace acmh;

namespace {

TMixture two_comp_1d() {
  Vec w(2);
  w << 0.5, 0.5;
  std::vector<StudentT> comps;
  comps.emplace_back(Vec::Constant(1, 1.0), Mat::Constant(1, 1, 4.0), 8.0);
  comps.emplace_back(Vec::Constant(1, 5.0), Mat::Constant(1, 1, 9.0), 8.0);
  return TMixture(w, std::move(comps));
}

TMixture broad_mixture(Eigen::Index d) {
  Vec w(1);
  w << 1.0;
  std::vector<StudentT> comps;
  comps.emplace_back(Vec::Zero(d), 25.0 * Mat::Identity(d, d), 6.0);
  return TMixture(w, std::move(comps));
}

RunConfig frozen_config(TMixture m, Vec start) {
  RunConfig cfg;
  cfg.adapt = false;
  cfg.initial_mixture = std::move(m);
  cfg.explicit_start = std::move(start);
  return cfg;
}

}  // namespace

TEST_CASE("independence schedule follows the staircase", "[chain]") {
  RunConfig cfg;
  cfg.n_sample = 50000;
  cfg.a_n = 10;
  CHECK(delta_at(1, cfg) == 0.1);
  CHECK(delta_at(5000, cfg) == 0.1);
  CHECK(delta_at(5001, cfg) == 0.2);
  CHECK(delta_at(10000, cfg) == 0.2);
  CHECK(delta_at(45000, cfg) == 0.9);
  CHECK(delta_at(45001, cfg) == 1.0);
  CHECK(delta_at(50000, cfg) == 1.0);
  CHECK_THROWS_AS(delta_at(0, cfg), std::invalid_argument);
  CHECK_THROWS_AS(delta_at(50001, cfg), std::invalid_argument);
}

TEST_CASE("config validation rejects malformed runs", "[chain]") {
  Target t = msn_target(2);
  RunConfig cfg;
  cfg.n_sample = 1005;  // not divisible by a_n
  CHECK_THROWS_AS(run(t, cfg), std::invalid_argument);
  cfg.n_sample = 1000;
  cfg.refit_stage1 = 0;
  CHECK_THROWS_AS(run(t, cfg), std::invalid_argument);
  cfg.refit_stage1 = 2000;
  cfg.delta_override = 1.5;
  CHECK_THROWS_AS(run(t, cfg), std::invalid_argument);
  cfg.delta_override.reset();
  cfg.initial_mixture = broad_mixture(2);
  CHECK_THROWS_AS(run(t, cfg), std::invalid_argument);  // no explicit_start
}

TEST_CASE("a non-finite start point is refused", "[chain]") {
  Target t;
  t.dim = 1;
  t.name = "halfline";
  t.log_density = [](const Vec& x) { return x(0) > 0.0 ? -x(0) : neg_inf; };
  t.g0 = envelope_from(StudentT(Vec::Zero(1), Mat::Identity(1, 1), 3.0));
  RunConfig cfg = frozen_config(broad_mixture(1), Vec::Constant(1, -1.0));
  cfg.n_sample = 100;
  cfg.a_n = 10;
  CHECK_THROWS_AS(run(t, cfg), std::invalid_argument);
}

TEST_CASE("sampling the proposal's own invariant accepts every step", "[chain]") {
  TMixture m = two_comp_1d();
  Target t;
  t.dim = 1;
  t.name = "self";
  t.log_density = [m](const Vec& x) { return m.logpdf(x); };

  RunConfig cfg = frozen_config(m, Vec::Constant(1, 1.0));
  cfg.n_sample = 10000;
  cfg.delta_override = 1.0;
  cfg.proposal.beta0 = 0.0;
  cfg.iota_rw = 0;
  cfg.seed = 71;

  RunResult res = run(t, cfg);
  CHECK(res.main_chain.accept_rate == 1.0);
  CHECK(res.trial_chain.accept_rate == 1.0);
  for (Branch b : res.main_chain.branch_tags) CHECK(b == Branch::IndependentGM);
}

TEST_CASE("frozen proposal gives a correct MH chain on a gaussian", "[chain]") {
  Target t;
  t.dim = 1;
  t.name = "gauss";
  t.log_density = [](const Vec& x) {
    return -0.5 * std::log(8.0 * std::numbers::pi) - 0.25 * (x(0) - 3.0) * (x(0) - 3.0) / 2.0;
  };
  t.g0 = envelope_from(StudentT(Vec::Zero(1), Mat::Constant(1, 1, 25.0), 3.0));

  RunConfig cfg = frozen_config(two_comp_1d(), Vec::Constant(1, 2.0));
  cfg.n_burnin = 1000;
  cfg.n_sample = 20000;
  cfg.seed = 72;

  RunResult res = run(t, cfg);
  CHECK(res.rw_proposals_main == (cfg.n_burnin + cfg.n_sample) / cfg.iota_rw);
  CHECK(res.rw_accepts_main > 0);
  for (const auto& chain : {res.main_chain, res.trial_chain}) {
    std::vector<double> xs(chain.iterates.col(0).data(),
                           chain.iterates.col(0).data() + chain.iterates.rows());
    double n = static_cast<double>(xs.size());
    double mean = 0.0;
    for (double v : xs) mean += v;
    mean /= n;
    double var = 0.0;
    for (double v : xs) var += (v - mean) * (v - mean);
    var /= n - 1.0;
    double tau = iact(xs);
    double se_mean = std::sqrt(var * tau / n);
    double se_var = std::sqrt(2.0 * var * var * tau / n);
    CHECK(std::abs(mean - 3.0) < 3.0 * se_mean);
    CHECK(std::abs(var - 4.0) < 3.0 * se_var);
  }
  // frozen run: no refits, no snapshots, no warnings
  CHECK(res.main_chain.mixture_snapshots.empty());
  CHECK(res.refit_input_hashes.empty());
  CHECK(res.warnings.empty());
}

TEST_CASE("history grows by the previous trial state on acceptance", "[chain]") {
  Target t = msn_target(2);
  Vec start = Vec::Constant(2, -5.0);

  RunConfig cfg = frozen_config(broad_mixture(2), start);
  cfg.n_sample = 500;
  cfg.a_n = 10;
  cfg.seed = 73;
  cfg.iota_rw = 0;  // keep iterates equal to primary-step outcomes

  RunResult verbatim = run(t, cfg);
  cfg.append_accepted_proposal = true;
  RunResult variant = run(t, cfg);

  // identical randomness, so the chains coincide; only the history shifts
  CHECK(verbatim.trial_chain.iterates == variant.trial_chain.iterates);
  CHECK(verbatim.history.size() == variant.history.size());

  size_t k = 0;
  for (long n = 1; n <= cfg.n_sample; ++n) {
    if (!verbatim.trial_chain.accept_flags[static_cast<size_t>(n - 1)]) continue;
    Vec before = n == 1 ? start : Vec(verbatim.trial_chain.iterates.row(n - 2).transpose());
    Vec after = verbatim.trial_chain.iterates.row(n - 1).transpose();
    REQUIRE(k < verbatim.history.size());
    CHECK(verbatim.history[k] == before);
    CHECK(variant.history[k] == after);
    ++k;
  }
  CHECK(k == verbatim.history.size());
  double laa = static_cast<double>(k) / static_cast<double>(cfg.n_sample);
  CHECK(laa == verbatim.trial_chain.accept_rate);
}

TEST_CASE("a full adaptive run explores the skewed mixture", "[chain]") {
  Target t = msn_target(2);
  RunConfig cfg;
  cfg.n_burnin = 5000;
  cfg.n_sample = 10000;
  cfg.proposal = ProposalConfig::defaults(2);
  cfg.seed = 74;
  cfg.smc.n_particles = 300;
  cfg.smc.n_stages = 8;
  cfg.smc.n_moves = 5;

  RunResult res = run(t, cfg);
  REQUIRE(res.particles);
  CHECK(res.particles->particles.rows() == 300);
  CHECK(res.main_chain.iterates.rows() == 10000);
  CHECK(res.warnings.empty());
  CHECK(res.main_chain.accept_rate > 0.1);
  CHECK(res.main_chain.accept_rate <= 1.0);

  long left = 0;
  for (long i = 0; i < res.main_chain.iterates.rows(); ++i)
    if (res.main_chain.iterates(i, 0) < 0.0) ++left;
  double split = static_cast<double>(left) / 10000.0;
  CHECK(split == Catch::Approx(0.6).margin(0.07));

  // snapshots at initialization and on both cadences
  std::vector<long> at;
  for (const auto& [iter, mix] : res.main_chain.mixture_snapshots) at.push_back(iter);
  CHECK(at == std::vector<long>{0, 2000, 4000, 9000, 13000});
  CHECK(res.refit_input_hashes.size() == at.size());
  CHECK(res.final_mixture->size() ==
        res.main_chain.mixture_snapshots.back().second.size());

  // stage boundary locks G: both stage-2 snapshots keep the last stage-1 count
  auto g_of = [&](size_t i) { return res.main_chain.mixture_snapshots[i].second.size(); };
  CHECK(g_of(3) == g_of(2));
  CHECK(g_of(4) == g_of(2));
}

TEST_CASE("freeze flag stops adaptation after burn-in", "[chain]") {
  Target t = msn_target(2);
  RunConfig cfg;
  cfg.n_burnin = 2000;
  cfg.n_sample = 8000;
  cfg.proposal = ProposalConfig::defaults(2);
  cfg.seed = 75;
  cfg.freeze_after_burnin = true;
  cfg.smc.n_particles = 200;
  cfg.smc.n_stages = 6;
  cfg.smc.n_moves = 4;

  RunResult res = run(t, cfg);
  std::vector<long> at;
  for (const auto& [iter, mix] : res.main_chain.mixture_snapshots) at.push_back(iter);
  CHECK(at == std::vector<long>{0, 2000});
}

TEST_CASE("runs are reproducible byte for byte", "[chain]") {
  Target t = msn_target(2);
  RunConfig cfg;
  cfg.n_burnin = 2000;
  cfg.n_sample = 2000;
  cfg.proposal = ProposalConfig::defaults(2);
  cfg.seed = 76;
  cfg.smc.n_particles = 200;
  cfg.smc.n_stages = 5;
  cfg.smc.n_moves = 3;

  RunResult a = run(t, cfg);
  RunResult b = run(t, cfg);
  CHECK(a.main_chain.iterates == b.main_chain.iterates);
  CHECK(a.trial_chain.iterates == b.trial_chain.iterates);
  CHECK(a.main_chain.accept_flags == b.main_chain.accept_flags);
  CHECK(a.main_chain.branch_tags == b.main_chain.branch_tags);
  CHECK(a.refit_input_hashes == b.refit_input_hashes);
  REQUIRE(a.history.size() == b.history.size());
  for (size_t i = 0; i < a.history.size(); ++i) CHECK(a.history[i] == b.history[i]);
  REQUIRE(a.main_chain.mixture_snapshots.size() == b.main_chain.mixture_snapshots.size());
  for (size_t i = 0; i < a.main_chain.mixture_snapshots.size(); ++i) {
    const TMixture& ma = a.main_chain.mixture_snapshots[i].second;
    const TMixture& mb = b.main_chain.mixture_snapshots[i].second;
    REQUIRE(ma.size() == mb.size());
    CHECK(ma.weights() == mb.weights());
    for (Eigen::Index k = 0; k < ma.size(); ++k) {
      CHECK(ma.component(k).mu() == mb.component(k).mu());
      CHECK(ma.component(k).sigma() == mb.component(k).sigma());
      CHECK(ma.component(k).nu() == mb.component(k).nu());
    }
  }

  // a different seed gives a different path
  cfg.seed = 77;
  RunResult c = run(t, cfg);
  CHECK(a.main_chain.iterates != c.main_chain.iterates);
}

TEST_CASE("refit inputs are a pure function of the trial history", "[chain]") {
  Target t = msn_target(2);
  Vec start = Vec::Constant(2, 5.0);
  RunConfig cfg;
  cfg.n_burnin = 0;
  cfg.n_sample = 5000;
  cfg.refit_stage2 = 2000;
  cfg.proposal = ProposalConfig::defaults(2);
  cfg.seed = 78;
  cfg.explicit_start = start;
  cfg.smc.n_particles = 150;
  cfg.smc.n_stages = 5;
  cfg.smc.n_moves = 3;

  RunResult res = run(t, cfg);
  REQUIRE(res.particles);
  std::vector<long> at;
  for (const auto& [iter, hash] : res.refit_input_hashes) at.push_back(iter);
  REQUIRE(at == std::vector<long>{0, 2000, 4000});

  // rebuild the history prefix at each refit from H0 plus recorded trial moves
  std::vector<Vec> prefix;
  for (Eigen::Index i = 0; i < res.particles->particles.rows(); ++i)
    prefix.push_back(res.particles->particles.row(i).transpose());
  size_t next = 0;
  CHECK(history_hash(refit_input(prefix, cfg.refit_subsample)) ==
        res.refit_input_hashes[next++].second);
  for (long n = 1; n <= cfg.n_sample; ++n) {
    if (res.trial_chain.accept_flags[static_cast<size_t>(n - 1)]) {
      Vec before = n == 1 ? start : Vec(res.trial_chain.iterates.row(n - 2).transpose());
      prefix.push_back(before);
    }
    if (n % cfg.refit_stage2 == 0 && n < cfg.n_sample) {
      REQUIRE(next < res.refit_input_hashes.size());
      CHECK(history_hash(refit_input(prefix, cfg.refit_subsample)) ==
            res.refit_input_hashes[next++].second);
    }
  }
  CHECK(next == res.refit_input_hashes.size());
  CHECK(prefix.size() == res.history.size());
}

TEST_CASE("failed refits leave the proposal in place with a warning", "[chain]") {
  Target t = msn_target(2);
  TMixture m = broad_mixture(2);
  RunConfig cfg = frozen_config(m, Vec::Constant(2, -5.0));
  cfg.adapt = true;  // but the empty history cannot support a refit
  cfg.n_sample = 30;
  cfg.a_n = 10;
  cfg.refit_stage2 = 10;
  cfg.seed = 79;

  RunResult res = run(t, cfg);
  CHECK(res.warnings.size() == 2);  // refits at 10 and 20; the final one is skipped
  CHECK(res.main_chain.mixture_snapshots.empty());
  CHECK(res.refit_input_hashes.empty());
  REQUIRE(res.final_mixture);
  CHECK(res.final_mixture->size() == 1);
  CHECK(res.final_mixture->component(0).mu() == m.component(0).mu());
}

TEST_CASE("envelope audits behave as advertised on known pairs", "[chain]") {
  SECTION("banana with its heavy-tailed floor is clean") {
    Target t = banana_target(5);
    Rng rng(80);
    EnvelopeReport rep = check_envelope(t, 0.001, 10000, rng);
    CHECK(rep.ok());
    CHECK(rep.n_probes == 10000);
  }

  SECTION("g0 equal to the target at beta0 = 1 sits exactly on the bound") {
    Target t = banana_target(3);
    Target self = t;
    self.g0.log_density = t.log_density;
    self.g0.draw = t.g0.draw;  // probe locations are irrelevant here
    Rng rng(81);
    EnvelopeReport rep = check_envelope(self, 1.0, 2000, rng);
    CHECK(rep.ok());
    CHECK(rep.max_log_ratio == 0.0);
  }

  SECTION("a light-tailed envelope on a cauchy target is caught") {
    Target t;
    t.dim = 1;
    t.name = "cauchy";
    t.log_density = [](const Vec& x) {
      return -std::log(std::numbers::pi) - std::log1p(x(0) * x(0));
    };
    t.g0 = Envelope{[](const Vec& x) {
                      return -0.5 * std::log(2.0 * std::numbers::pi) - 0.5 * x(0) * x(0);
                    },
                    [](Rng& rng) {
                      return Vec::Constant(1, std::normal_distribution<double>()(rng));
                    }};
    t.exact_sampler = [](Rng& rng) {
      return Vec::Constant(1, std::cauchy_distribution<double>()(rng));
    };
    Rng rng(82);
    EnvelopeReport rep = check_envelope(t, 0.001, 10000, rng, true);
    CHECK_FALSE(rep.ok());
    CHECK(rep.violations > 0);
    CHECK(rep.max_log_ratio > std::log(1000.0));
  }
}
