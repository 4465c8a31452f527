#include <catch2/catch_amalgamated.hpp>

#include <cmath>
#include <random>
#include <vector>

#include "acmh/serialize.hpp"
#include "acmh/student_t.hpp"
#include "support/oracles.hpp"

using namespace acmh;

namespace {

Mat random_spd(int d, Rng& rng, double base = 0.5) {
  std::normal_distribution<double> n01;
  Mat a(d, d);
  for (int i = 0; i < d; ++i)
    for (int j = 0; j < d; ++j) a(i, j) = n01(rng);
  return a * a.transpose() + base * Mat::Identity(d, d);
}

Vec random_vec(int d, Rng& rng, double scale = 2.0) {
  std::normal_distribution<double> n01;
  Vec v(d);
  for (int i = 0; i < d; ++i) v(i) = scale * n01(rng);
  return v;
}

// independent long-double evaluation of a d<=2 Student-t log density
long double t_logpdf_ld(const Vec& x, const Vec& mu, const Mat& s, double nu) {
  const int d = static_cast<int>(x.size());
  long double det, delta;
  if (d == 1) {
    det = s(0, 0);
    long double r = x(0) - mu(0);
    delta = r * r / det;
  } else {
    det = static_cast<long double>(s(0, 0)) * s(1, 1) - static_cast<long double>(s(0, 1)) * s(1, 0);
    long double r0 = x(0) - mu(0), r1 = x(1) - mu(1);
    delta = (r0 * (s(1, 1) * r0 - s(0, 1) * r1) + r1 * (s(0, 0) * r1 - s(1, 0) * r0)) / det;
  }
  long double nud = nu, dd = d;
  return lgammal((nud + dd) / 2) - lgammal(nud / 2) - dd / 2 * logl(nud * 3.14159265358979323846L) -
         0.5L * logl(det) - (nud + dd) / 2 * log1pl(delta / nud);
}

}  // namespace

TEST_CASE("standard Cauchy mode value", "[student_t]") {
  StudentT p(Vec::Zero(1), Mat::Identity(1, 1), 1.0);
  // t_1(0; 0, 1, 1) = 1/pi
  CHECK(p.logpdf(Vec::Zero(1)) == Catch::Approx(-std::log(std::numbers::pi)).epsilon(1e-14));
}

TEST_CASE("density symmetric about the location", "[student_t]") {
  Rng rng(71);
  for (int rep = 0; rep < 20; ++rep) {
    int d = 1 + static_cast<int>(rng() % 4);
    StudentT p(random_vec(d, rng), random_spd(d, rng), 1.0 + 20.0 * std::generate_canonical<double, 53>(rng));
    Vec a = random_vec(d, rng);
    CHECK(p.logpdf(p.mu() + a) == Catch::Approx(p.logpdf(p.mu() - a)).epsilon(1e-12));
  }
}

TEST_CASE("2-d density integrates to one", "[student_t]") {
  Rng rng(12);
  for (int rep = 0; rep < 3; ++rep) {
    Vec mu = random_vec(2, rng);
    Mat s = random_spd(2, rng);
    double nu = 5.0 + 3.0 * rep;
    StudentT p(mu, s, nu);
    double sd = std::sqrt(s.diagonal().maxCoeff() * (nu > 2 ? nu / (nu - 2) : 3.0));
    double r = 60.0 * sd;
    double mass = oracle::simpson2d(
        [&](double x, double y) {
          Vec v(2);
          v << x, y;
          return std::exp(p.logpdf(v));
        },
        mu(0) - r, mu(0) + r, mu(1) - r, mu(1) + r, 700, 700);
    CHECK(mass == Catch::Approx(1.0).margin(1e-3));
  }
}

TEST_CASE("sampling matches known moments", "[student_t]") {
  SECTION("large nu approaches the normal") {
    Rng rng(5);
    Mat s(2, 2);
    s << 2.0, 0.6, 0.6, 1.0;
    Vec mu(2);
    mu << -1.0, 3.0;
    StudentT p(mu, s, 1e6);
    const int n = 200000;
    Vec mean = Vec::Zero(2);
    Mat m2 = Mat::Zero(2, 2);
    for (int i = 0; i < n; ++i) {
      Vec z = p.sample(rng);
      mean += z;
      m2 += z * z.transpose();
    }
    mean /= n;
    Mat cov = m2 / n - mean * mean.transpose();
    for (int j = 0; j < 2; ++j)
      CHECK(mean(j) == Catch::Approx(mu(j)).margin(4.0 * std::sqrt(s(j, j) / n)));
    CHECK(cov(0, 0) == Catch::Approx(s(0, 0)).epsilon(0.05));
    CHECK(cov(1, 1) == Catch::Approx(s(1, 1)).epsilon(0.05));
    CHECK(cov(0, 1) == Catch::Approx(s(0, 1)).epsilon(0.10));
  }
  SECTION("nu=5 variance is nu/(nu-2)") {
    Rng rng(6);
    StudentT p(Vec::Zero(1), Mat::Identity(1, 1), 5.0);
    const int n = 100000;
    double s1 = 0.0, s2 = 0.0;
    for (int i = 0; i < n; ++i) {
      double z = p.sample(rng)(0);
      s1 += z;
      s2 += z * z;
    }
    double var = s2 / n - (s1 / n) * (s1 / n);
    CHECK(var == Catch::Approx(5.0 / 3.0).epsilon(0.05));
  }
  SECTION("same seed reproduces draws") {
    Rng srng(9);
    StudentT p(Vec::Zero(3), random_spd(3, srng), 4.0);
    Rng r1(1234), r2(1234);
    for (int i = 0; i < 50; ++i) {
      Vec a = p.sample(r1), b = p.sample(r2);
      CHECK((a - b).cwiseAbs().maxCoeff() == 0.0);
    }
  }
}

TEST_CASE("mixture density against direct summation", "[student_t]") {
  SECTION("single component equals the component") {
    Rng rng(21);
    StudentT c(random_vec(2, rng), random_spd(2, rng), 7.0);
    TMixture m(Vec::Ones(1), {c});
    for (int i = 0; i < 10; ++i) {
      Vec x = random_vec(2, rng, 4.0);
      CHECK(m.logpdf(x) == Catch::Approx(c.logpdf(x)).epsilon(1e-14));
    }
  }
  SECTION("identical components collapse") {
    Rng rng(22);
    StudentT c(random_vec(2, rng), random_spd(2, rng), 5.0);
    Vec w(2);
    w << 0.3, 0.7;
    TMixture m(w, {c, c});
    Vec x = random_vec(2, rng);
    CHECK(m.logpdf(x) == Catch::Approx(c.logpdf(x)).epsilon(1e-13));
  }
  SECTION("two separated components, long-double oracle") {
    Rng rng(23);
    Vec mu1(2), mu2(2);
    mu1 << -8.0, 0.0;
    mu2 << 8.0, 1.0;
    Mat s1 = random_spd(2, rng), s2 = random_spd(2, rng);
    double nu1 = 4.0, nu2 = 9.0;
    Vec w(2);
    w << 0.35, 0.65;
    TMixture m(w, {StudentT(mu1, s1, nu1), StudentT(mu2, s2, nu2)});
    for (int i = 0; i < 50; ++i) {
      Vec x = random_vec(2, rng, 12.0);
      long double direct =
          logl(0.35L * expl(t_logpdf_ld(x, mu1, s1, nu1)) + 0.65L * expl(t_logpdf_ld(x, mu2, s2, nu2)));
      CHECK(m.logpdf(x) ==
            Catch::Approx(static_cast<double>(direct)).epsilon(1e-12));
    }
  }
}

TEST_CASE("responsibilities", "[student_t]") {
  Rng rng(31);
  SECTION("single component is certain") {
    TMixture m(Vec::Ones(1), {StudentT(Vec::Zero(2), Mat::Identity(2, 2), 5.0)});
    CHECK(m.responsibilities(random_vec(2, rng))(0) == Catch::Approx(1.0).epsilon(1e-15));
  }
  SECTION("mirror symmetry gives an even split") {
    Vec mu(1);
    mu << 3.0;
    Vec w(2);
    w << 0.5, 0.5;
    TMixture m(w, {StudentT(mu, Mat::Identity(1, 1), 6.0), StudentT(-mu, Mat::Identity(1, 1), 6.0)});
    Vec r = m.responsibilities(Vec::Zero(1));
    CHECK(r(0) == Catch::Approx(0.5).epsilon(1e-12));
    CHECK(r(1) == Catch::Approx(0.5).epsilon(1e-12));
  }
  SECTION("far separated components decide cleanly") {
    Vec mu1(1), mu2(1);
    mu1 << -40.0;
    mu2 << 40.0;
    Vec w(2);
    w << 0.5, 0.5;
    TMixture m(w, {StudentT(mu1, Mat::Identity(1, 1), 30.0), StudentT(mu2, Mat::Identity(1, 1), 30.0)});
    CHECK(m.responsibilities(mu1)(0) > 1.0 - 1e-10);
  }
  SECTION("always a probability vector") {
    Vec w(3);
    w << 0.2, 0.5, 0.3;
    std::vector<StudentT> comps;
    for (int k = 0; k < 3; ++k) comps.emplace_back(random_vec(3, rng, 5.0), random_spd(3, rng), 3.0 + k);
    TMixture m(w, comps);
    for (int i = 0; i < 100; ++i) {
      Vec r = m.responsibilities(random_vec(3, rng, 8.0));
      CHECK(std::abs(r.sum() - 1.0) <= 1e-12);
      CHECK(r.minCoeff() >= 0.0);
    }
  }
  SECTION("all components underflowing is an error") {
    TMixture m(Vec::Ones(1), {StudentT(Vec::Zero(1), Mat::Identity(1, 1), 5.0)});
    Vec far(1);
    far << 1e200;  // Mahalanobis form overflows
    CHECK_THROWS_AS(m.responsibilities(far), degenerate_point_error);
  }
}

TEST_CASE("top component selection", "[student_t]") {
  Rng rng(41);
  Vec mu1(2), mu2(2);
  mu1 << -5.0, -5.0;
  mu2 << 5.0, 5.0;
  Vec w(2);
  w << 0.6, 0.4;
  TMixture m(w, {StudentT(mu1, Mat::Identity(2, 2), 8.0), StudentT(mu2, Mat::Identity(2, 2), 8.0)});
  CHECK(m.top_component(mu1) == 0);
  CHECK(m.top_component(mu2) == 1);
  SECTION("matches argmax of responsibilities") {
    for (int i = 0; i < 200; ++i) {
      Vec x = random_vec(2, rng, 7.0);
      Vec r = m.responsibilities(x);
      Eigen::Index argmax = r(0) >= r(1) ? 0 : 1;
      CHECK(m.top_component(x) == argmax);
    }
  }
  SECTION("exact tie goes to the lowest index") {
    Vec wt(2);
    wt << 0.5, 0.5;
    StudentT c(Vec::Zero(1), Mat::Identity(1, 1), 5.0);
    TMixture tie(wt, {c, c});
    CHECK(tie.top_component(Vec::Ones(1)) == 0);
  }
}

TEST_CASE("conditional law", "[student_t]") {
  Rng rng(51);
  SECTION("scale at the conditioning center") {
    // delta_B = 0 there, so the factor is exactly nu/(nu+d_B)
    Vec mu = random_vec(3, rng);
    Mat s = random_spd(3, rng);
    double nu = 6.0;
    StudentT p(mu, s, nu);
    Partition part({0, 2}, {1}, 3);
    StudentT cond = conditional_student_t(p, part, part.take_b(mu));
    Mat s_bb = part.block(s, part.index_b(), part.index_b());
    Mat s_ab = part.block(s, part.index_a(), part.index_b());
    Mat s_aa = part.block(s, part.index_a(), part.index_a());
    Mat schur = s_aa - s_ab * s_bb.inverse() * s_ab.transpose();
    Mat expected = (nu / (nu + 1.0)) * schur;
    CHECK((cond.sigma() - expected).cwiseAbs().maxCoeff() < 1e-12);
    CHECK(cond.nu() == Catch::Approx(nu + 1.0));
    CHECK((cond.mu() - part.take_a(mu)).cwiseAbs().maxCoeff() < 1e-12);
  }
  SECTION("joint factorizes into marginal times conditional") {
    for (int rep = 0; rep < 50; ++rep) {
      int d = 2 + static_cast<int>(rng() % 4);
      Vec mu = random_vec(d, rng);
      Mat s = random_spd(d, rng);
      double nu = 3.0 + 10.0 * std::generate_canonical<double, 53>(rng);
      StudentT p(mu, s, nu);
      std::vector<int> ia, ib;
      for (int i = 0; i < d; ++i) (i % 2 == 0 ? ia : ib).push_back(i);
      if (ib.empty()) continue;
      Partition part(ia, ib, d);
      Vec x = mu + random_vec(d, rng, 3.0);
      StudentT cond = conditional_student_t(p, part, part.take_b(x));
      StudentT marg(part.take_b(mu), part.block(s, part.index_b(), part.index_b()), nu);
      double lhs = p.logpdf(x);
      double rhs = cond.logpdf(part.take_a(x)) + marg.logpdf(part.take_b(x));
      CHECK(std::abs(lhs - rhs) <= 1e-10 * std::max(1.0, std::abs(lhs)));
    }
  }
  SECTION("agrees with quadrature marginal in 2-d") {
    Vec mu(2);
    mu << 1.0, -2.0;
    Mat s(2, 2);
    s << 3.0, 1.2, 1.2, 2.0;
    double nu = 5.0;
    StudentT p(mu, s, nu);
    Partition part({0}, {1}, 2);
    for (int i = 0; i < 5; ++i) {
      double xb = -2.0 + 1.3 * i;
      double marg = oracle::simpson(
          [&](double a) {
            Vec v(2);
            v << a, xb;
            return std::exp(p.logpdf(v));
          },
          mu(0) - 250.0, mu(0) + 250.0, 40000);
      StudentT cond = conditional_student_t(p, part, Vec::Constant(1, xb));
      for (double a : {0.4, 2.5}) {
        Vec v(2);
        v << a, xb;
        double joint = std::exp(p.logpdf(v));
        CHECK(std::exp(cond.logpdf(Vec::Constant(1, a))) ==
              Catch::Approx(joint / marg).epsilon(1e-6));
      }
    }
  }
  SECTION("rejects bad inputs") {
    StudentT p(Vec::Zero(2), Mat::Identity(2, 2), 5.0);
    CHECK_THROWS_AS(conditional_student_t(p, Partition({0, 1}, {}, 2), Vec(0)),
                    std::invalid_argument);
    StudentT p3(Vec::Zero(3), Mat::Identity(3, 3), 5.0);
    CHECK_THROWS_AS(conditional_student_t(p3, Partition({0, 1}, {2}, 3), Vec::Zero(2)),
                    std::invalid_argument);
  }
}

TEST_CASE("partition validation", "[student_t]") {
  CHECK_THROWS_AS(Partition({}, {0, 1}, 2), std::invalid_argument);
  CHECK_THROWS_AS(Partition({0}, {0, 1}, 2), std::invalid_argument);
  CHECK_THROWS_AS(Partition({0, 1}, {1}, 2), std::invalid_argument);
  CHECK_THROWS_AS(Partition({0, 2}, {1}, 2), std::invalid_argument);
  Partition ok({1}, {0}, 2);
  CHECK(ok.index_a() == std::vector<int>{1});
  Partition full({0, 1}, {}, 2);  // empty B is representable
  CHECK(full.index_b().empty());
}

TEST_CASE("scale matrix guards", "[student_t]") {
  Mat bad(2, 2);
  bad << 1.0, 0.0, 0.0, -1.0;
  CHECK_THROWS_AS(StudentT(Vec::Zero(2), bad, 5.0), std::invalid_argument);

  // exactly singular: one jitter pass rescues it and is flagged
  Mat sing(2, 2);
  sing << 1.0, 1.0, 1.0, 1.0;
  StudentT p(Vec::Zero(2), sing, 5.0);
  CHECK(p.jitter_applied());
  CHECK(std::isfinite(p.logpdf(Vec::Ones(2))));

  CHECK_THROWS_AS(StudentT(Vec::Zero(2), Mat::Identity(2, 2), 0.0), std::invalid_argument);
}

TEST_CASE("mixture json round trip", "[student_t]") {
  Rng rng(61);
  Vec w(2);
  w << 0.25, 0.75;
  TMixture m(w, {StudentT(random_vec(3, rng), random_spd(3, rng), 4.0),
                 StudentT(random_vec(3, rng), random_spd(3, rng), 16.0)});
  json j = mixture_to_json(m);
  TMixture back = mixture_from_json(j);
  REQUIRE(back.size() == m.size());
  CHECK((back.weights() - m.weights()).cwiseAbs().maxCoeff() == 0.0);
  for (Eigen::Index k = 0; k < m.size(); ++k) {
    CHECK((back.component(k).mu() - m.component(k).mu()).cwiseAbs().maxCoeff() == 0.0);
    CHECK((back.component(k).sigma() - m.component(k).sigma()).cwiseAbs().maxCoeff() == 0.0);
    CHECK(back.component(k).nu() == m.component(k).nu());
  }
  SECTION("malformed payload is rejected") {
    json empty;
    CHECK_THROWS_AS(mixture_from_json(empty), std::invalid_argument);
  }
}

TEST_CASE("mixture construction guards", "[student_t]") {
  StudentT c(Vec::Zero(1), Mat::Identity(1, 1), 5.0);
  Vec w(2);
  w << 0.6, 0.6;
  CHECK_THROWS_AS(TMixture(w, {c, c}), std::invalid_argument);
  Vec wn(2);
  wn << 1.2, -0.2;
  CHECK_THROWS_AS(TMixture(wn, {c, c}), std::invalid_argument);
}
