#include <catch2/catch_amalgamated.hpp>

#include <cmath>
#include <random>
#include <vector>

#include "acmh/diagnostics.hpp"
#include "support/oracles.hpp"

using namespace acmh;

namespace {

std::vector<double> iid_normal(int n, double sd, Rng& rng) {
  std::normal_distribution<double> d(0.0, sd);
  std::vector<double> x(static_cast<size_t>(n));
  for (auto& v : x) v = d(rng);
  return x;
}

std::vector<double> ar1(int n, double phi, Rng& rng) {
  std::normal_distribution<double> d(0.0, std::sqrt(1.0 - phi * phi));
  std::vector<double> x(static_cast<size_t>(n));
  double v = 0.0;
  for (auto& o : x) {
    v = phi * v + d(rng);
    o = v;
  }
  return x;
}

}  // namespace

TEST_CASE("iact calibration", "[diagnostics]") {
  Rng rng(201);
  SECTION("iid series") {
    CHECK(iact(iid_normal(100000, 1.0, rng)) == Catch::Approx(1.0).margin(0.1));
  }
  SECTION("AR(1) with phi = 0.5 integrates to 3") {
    CHECK(iact(ar1(1000000, 0.5, rng)) == Catch::Approx(3.0).margin(0.15));
  }
  SECTION("antithetic series beats independence") {
    std::normal_distribution<double> d(0.0, 0.1);
    std::vector<double> x(50000);
    for (size_t i = 0; i < x.size(); ++i) x[i] = (i % 2 == 0 ? 1.0 : -1.0) + d(rng);
    CHECK(iact(x) < 1.0);
  }
  SECTION("invariance under reversal and affine maps") {
    std::vector<double> x = ar1(20000, 0.3, rng);
    std::vector<double> rev(x.rbegin(), x.rend());
    CHECK(iact(rev) == Catch::Approx(iact(x)).epsilon(1e-12));
    std::vector<double> affine(x);
    for (auto& v : affine) v = -4.0 * v + 7.0;
    CHECK(iact(affine) == Catch::Approx(iact(x)).epsilon(1e-9));
  }
  SECTION("constant series is degenerate") {
    std::vector<double> c(100, 3.14);
    CHECK_THROWS_AS(iact(c), degenerate_series_error);
  }
  SECTION("short series rejected") {
    std::vector<double> s(5, 1.0);
    CHECK_THROWS_AS(iact(s), std::invalid_argument);
  }
}

TEST_CASE("squared jumping distance", "[diagnostics]") {
  Rng rng(202);
  SECTION("iid: twice the variance") {
    CHECK(sq_jump(iid_normal(200000, 2.0, rng)) == Catch::Approx(8.0).epsilon(0.05));
  }
  SECTION("AR(1): 2(1 - phi)") {
    CHECK(sq_jump(ar1(200000, 0.5, rng)) == Catch::Approx(1.0).epsilon(0.05));
  }
  SECTION("constant chain never moves") {
    std::vector<double> c(100, 1.0);
    CHECK(sq_jump(c) == 0.0);
  }
  SECTION("quadratic scaling") {
    std::vector<double> x = iid_normal(1000, 1.0, rng);
    std::vector<double> y(x);
    for (auto& v : y) v *= 3.0;
    CHECK(sq_jump(y) == Catch::Approx(9.0 * sq_jump(x)).epsilon(1e-12));
  }
}

TEST_CASE("kernel density estimate", "[diagnostics]") {
  Rng rng(203);
  SECTION("single point with unit bandwidth is a standard normal") {
    std::vector<double> pt{0.0};
    Kde k = make_kde(pt, 1.0);
    for (double x : {-2.0, -0.5, 0.0, 1.0, 3.0}) {
      double expected = -0.5 * x * x - 0.5 * std::log(2.0 * std::numbers::pi);
      CHECK(kde_logpdf(k, x) == Catch::Approx(expected).epsilon(1e-12));
    }
  }
  SECTION("silverman bandwidth formula") {
    std::vector<double> x{0.1, 0.5, -0.3, 1.4, -1.1, 0.7, 0.2, -0.6};
    Kde k = make_kde(x);
    // independent computation
    double n = 8.0, mean = 0.0;
    for (double v : x) mean += v;
    mean /= n;
    double sd = 0.0;
    for (double v : x) sd += (v - mean) * (v - mean);
    sd = std::sqrt(sd / n);
    std::vector<double> s(x);
    std::sort(s.begin(), s.end());
    auto q = [&](double p) {
      double pos = p * (n - 1.0);
      auto lo = static_cast<size_t>(pos);
      return s[lo] + (pos - static_cast<double>(lo)) * (s[lo + 1] - s[lo]);
    };
    double expected = 1.06 * std::min(sd, (q(0.75) - q(0.25)) / 1.34) * std::pow(n, -0.2);
    CHECK(k.bandwidth == Catch::Approx(expected).epsilon(1e-12));
  }
  SECTION("density is consistent at the center") {
    std::vector<double> x = iid_normal(20000, 1.0, rng);
    Kde k = make_kde(x);
    double phi0 = -0.5 * std::log(2.0 * std::numbers::pi);
    CHECK(kde_logpdf(k, 0.0) == Catch::Approx(phi0).margin(0.05));
  }
  SECTION("degenerate sample rejected") {
    std::vector<double> c(50, 2.0);
    CHECK_THROWS_AS(make_kde(c), degenerate_series_error);
  }
}

TEST_CASE("log predictive density score", "[diagnostics]") {
  Rng rng(204);
  SECTION("exact sampler scores the differential entropy") {
    const int n = 100000, s_test = 5000;
    Mat chain(n, 1), test(s_test, 1);
    std::normal_distribution<double> d01;
    for (int i = 0; i < n; ++i) chain(i, 0) = d01(rng);
    for (int i = 0; i < s_test; ++i) test(i, 0) = d01(rng);
    CHECK(lpds(chain, test) == Catch::Approx(-1.4189385332046727).margin(0.02));
  }
  SECTION("a chain stuck in one mode scores badly") {
    const int n = 20000, s_test = 2000;
    Mat chain(n, 1), test(s_test, 1);
    std::normal_distribution<double> mode1(-5.0, 2.2);
    std::normal_distribution<double> mode2(5.0, 2.2);
    std::uniform_real_distribution<double> u01;
    for (int i = 0; i < n; ++i) chain(i, 0) = mode1(rng);
    for (int i = 0; i < s_test; ++i) test(i, 0) = u01(rng) < 0.6 ? mode1(rng) : mode2(rng);
    CHECK(lpds(chain, test) < -10.0);
  }
  SECTION("underflow is floored and counted") {
    Mat chain(100, 1), test(1, 1);
    std::normal_distribution<double> tight(0.0, 0.01);
    for (int i = 0; i < 100; ++i) chain(i, 0) = tight(rng);
    test(0, 0) = 10.0;
    long floored = 0;
    double v = lpds(chain, test, &floored);
    CHECK(floored == 1);
    CHECK(v == Catch::Approx(-745.0));
  }
}

TEST_CASE("censored likelihood score", "[diagnostics]") {
  Rng rng(205);
  std::vector<double> sample = iid_normal(5000, 1.0, rng);
  Kde k = make_kde(sample);
  std::vector<double> data = iid_normal(1000, 1.0, rng);

  SECTION("whole-line region reduces to the mean log density") {
    std::vector<Interval> all{{neg_inf, pos_inf}};
    double direct = 0.0;
    for (double x : data) direct += kde_logpdf(k, x);
    direct /= static_cast<double>(data.size());
    CHECK(censored_score(k, data, all) == Catch::Approx(direct).epsilon(1e-12));
  }
  SECTION("empty region scores zero") {
    CHECK(censored_score(k, data, {}) == 0.0);
  }
  SECTION("hand-checked half-line censoring") {
    std::vector<double> pt{0.0};
    Kde single = make_kde(pt, 1.0);
    std::vector<Interval> left{{neg_inf, 0.0}};
    std::vector<double> inside{-1.0};
    CHECK(censored_score(single, inside, left) ==
          Catch::Approx(kde_logpdf(single, -1.0)).epsilon(1e-12));
    std::vector<double> outside{1.0};
    CHECK(censored_score(single, outside, left) == Catch::Approx(std::log(0.5)).epsilon(1e-9));
  }
  SECTION("tail-aware estimates win in the tails") {
    // one sample reaches the censoring region, the other does not
    std::vector<double> spread = iid_normal(4000, 1.0, rng);
    std::vector<double> narrow;
    for (double v : spread) narrow.push_back(0.2 * v);
    Kde k_spread = make_kde(spread), k_narrow = make_kde(narrow);
    std::vector<Interval> tails{{neg_inf, -2.5}, {2.5, pos_inf}};
    std::vector<double> eval = iid_normal(2000, 1.0, rng);
    CHECK(censored_score(k_spread, eval, tails) > censored_score(k_narrow, eval, tails));
  }
}

TEST_CASE("bernoulli crps", "[diagnostics]") {
  CHECK(crps_bernoulli(0.7, 1) == Catch::Approx(0.09).epsilon(1e-12));
  CHECK(crps_bernoulli(0.7, 0) == Catch::Approx(0.49).epsilon(1e-12));
  CHECK(crps_bernoulli(1.0, 1) == 0.0);
  CHECK(crps_bernoulli(1.0, 0) == 1.0);
  CHECK_THROWS_AS(crps_bernoulli(1.2, 1), std::invalid_argument);
  CHECK_THROWS_AS(crps_bernoulli(0.5, 2), std::invalid_argument);
}

TEST_CASE("throughput ratios", "[diagnostics]") {
  CHECK(acc_over_iact(0.5, 10.0) == Catch::Approx(50.0));
  CHECK(ii_per_time(50000.0, 5.0, 10.0) == Catch::Approx(1000.0));
  CHECK(ii_per_time(50000.0, 5.0, 0.0) == 0.0);
}
