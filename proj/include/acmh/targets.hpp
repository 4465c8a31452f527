#pragma once

#include <functional>
#include <memory>
#include <string>
#include <vector>

#include "acmh/envelope.hpp"
#include "acmh/student_t.hpp"

namespace acmh {

// A benchmark target: log density (possibly unnormalized), its heavy-tail
// envelope g0, and an exact sampler where one exists.
struct Target {
  Eigen::Index dim = 0;
  std::string name;
  std::function<double(const Vec&)> log_density;
  Envelope g0;
  std::function<Vec(Rng&)> exact_sampler;  // empty when unavailable
};

inline EnvelopeReport check_envelope(const Target& target, double beta0, long n_probes,
                                     Rng& rng, bool probe_exact_sampler = false) {
  return check_envelope(target.log_density, target.g0, beta0, n_probes, rng,
                        probe_exact_sampler ? target.exact_sampler
                                            : std::function<Vec(Rng&)>{});
}

// ---------------------------------------------------------------------------
// skew normal machinery
// ---------------------------------------------------------------------------

struct SkewNormalParams {
  Vec mu;
  Mat sigma;
  Vec lambda;
};

namespace detail {

// Precomputed pieces for SN(x) = 2 phi(x; mu, Sigma) Phi(lambda' omega^{-1}(x - mu))
// and its hidden-truncation sampler.
struct SkewNormalMachine {
  explicit SkewNormalMachine(SkewNormalParams params) : p(std::move(params)) {
    const auto d = p.mu.size();
    if (p.sigma.rows() != d || p.sigma.cols() != d || p.lambda.size() != d)
      throw std::invalid_argument("SkewNormalMachine: inconsistent dimensions");
    Eigen::LLT<Mat> llt(p.sigma);
    if (llt.info() != Eigen::Success)
      throw std::invalid_argument("SkewNormalMachine: sigma must be positive definite");
    chol = llt.matrixL();
    double log_det = 2.0 * chol.diagonal().array().log().sum();
    log_norm = -0.5 * (static_cast<double>(d) * std::log(2.0 * std::numbers::pi) + log_det);
    omega = p.sigma.diagonal().array().sqrt();
    shape = p.lambda.array() / omega;  // omega^{-1} lambda

    // augmented covariance [[1, delta'], [delta, Omega_bar]] for sampling
    Vec ominv = omega.inverse().matrix();
    Mat omega_bar = ominv.asDiagonal() * p.sigma * ominv.asDiagonal();
    Vec ol = omega_bar * p.lambda;
    Vec delta = ol / std::sqrt(1.0 + p.lambda.dot(ol));
    Mat aug(d + 1, d + 1);
    aug(0, 0) = 1.0;
    aug.block(0, 1, 1, d) = delta.transpose();
    aug.block(1, 0, d, 1) = delta;
    aug.block(1, 1, d, d) = omega_bar;
    Eigen::LLT<Mat> laug(aug);
    if (laug.info() != Eigen::Success)
      throw std::invalid_argument("SkewNormalMachine: augmented covariance not positive definite");
    chol_aug = laug.matrixL();
  }

  double logpdf(const Vec& x) const {
    Vec y = chol.triangularView<Eigen::Lower>().solve(x - p.mu);
    return std::numbers::ln2 + log_norm - 0.5 * y.squaredNorm() +
           log_normal_cdf(shape.matrix().dot(x - p.mu));
  }

  Vec sample(Rng& rng) const {
    Vec u = standard_normal_vector(p.mu.size() + 1, rng);
    Vec w = chol_aug.triangularView<Eigen::Lower>() * u;
    Vec z = w.tail(p.mu.size());
    if (w(0) <= 0.0) z = -z;
    return p.mu + (omega * z.array()).matrix();
  }

  SkewNormalParams p;
  Mat chol;
  double log_norm = 0.0;
  Eigen::ArrayXd omega;
  Eigen::ArrayXd shape;
  Mat chol_aug;
};

// Gaussian with cached factorization, used for g0 pieces.
struct GaussianMachine {
  GaussianMachine(Vec mu_, const Mat& sigma) : mu(std::move(mu_)) {
    Eigen::LLT<Mat> llt(sigma);
    if (llt.info() != Eigen::Success)
      throw std::invalid_argument("GaussianMachine: sigma must be positive definite");
    chol = llt.matrixL();
    double log_det = 2.0 * chol.diagonal().array().log().sum();
    log_norm =
        -0.5 * (static_cast<double>(mu.size()) * std::log(2.0 * std::numbers::pi) + log_det);
  }

  double logpdf(const Vec& x) const {
    Vec y = chol.triangularView<Eigen::Lower>().solve(x - mu);
    return log_norm - 0.5 * y.squaredNorm();
  }

  Vec sample(Rng& rng) const {
    Vec u = standard_normal_vector(mu.size(), rng);
    Vec lu = chol.triangularView<Eigen::Lower>() * u;
    return mu + lu;
  }

  Vec mu;
  Mat chol;
  double log_norm = 0.0;
};

}  // namespace detail

inline double skew_normal_logpdf(const SkewNormalParams& p, const Vec& x) {
  return detail::SkewNormalMachine(p).logpdf(x);
}

inline Vec skew_normal_sample(const SkewNormalParams& p, Rng& rng) {
  return detail::SkewNormalMachine(p).sample(rng);
}

// ---------------------------------------------------------------------------
// mixture of two skewed normals
// ---------------------------------------------------------------------------

// Two skew-normal components at -5 and +5 with shared banded scale, shapes
// -10/+10, and weights 0.6/0.4. The envelope drops the skew factors, so
// pi <= 2 g0 pointwise.
inline Target msn_target(Eigen::Index d) {
  if (d < 1) throw std::invalid_argument("msn_target: dimension must be >= 1");
  Mat sigma(d, d);
  for (Eigen::Index i = 0; i < d; ++i)
    for (Eigen::Index j = 0; j < d; ++j)
      sigma(i, j) = 5.0 * std::pow(-0.5, std::abs(static_cast<int>(i - j)));
  const double w1 = 0.6, w2 = 0.4;
  auto sn1 = std::make_shared<detail::SkewNormalMachine>(
      SkewNormalParams{Vec::Constant(d, -5.0), sigma, Vec::Constant(d, -10.0)});
  auto sn2 = std::make_shared<detail::SkewNormalMachine>(
      SkewNormalParams{Vec::Constant(d, 5.0), sigma, Vec::Constant(d, 10.0)});
  auto g1 = std::make_shared<detail::GaussianMachine>(Vec::Constant(d, -5.0), sigma);
  auto g2 = std::make_shared<detail::GaussianMachine>(Vec::Constant(d, 5.0), sigma);

  Target t;
  t.dim = d;
  t.name = "msn";
  t.log_density = [sn1, sn2, w1, w2](const Vec& x) {
    return log_sum_exp(std::log(w1) + sn1->logpdf(x), std::log(w2) + sn2->logpdf(x));
  };
  t.g0.log_density = [g1, g2, w1, w2](const Vec& x) {
    return log_sum_exp(std::log(w1) + g1->logpdf(x), std::log(w2) + g2->logpdf(x));
  };
  t.g0.draw = [g1, g2, w1](Rng& rng) {
    std::uniform_real_distribution<double> u01;
    return u01(rng) < w1 ? g1->sample(rng) : g2->sample(rng);
  };
  t.exact_sampler = [sn1, sn2, w1](Rng& rng) {
    std::uniform_real_distribution<double> u01;
    return u01(rng) < w1 ? sn1->sample(rng) : sn2->sample(rng);
  };
  return t;
}

// ---------------------------------------------------------------------------
// banana
// ---------------------------------------------------------------------------

// Twisted Gaussian: N_d(phi_b(x); 0, diag(100, 1, ..., 1)) with
// phi_b(x) = (x1, x2 + b x1^2 - 100 b, x3, ..., xd), b = 0.03. The warp has
// unit Jacobian, so the density is normalized; first marginal is N(0, 100) and
// marginals 3..d are N(0, 1). No exact sampler is exposed.
inline Target banana_target(Eigen::Index d, double b = 0.03) {
  if (d < 2) throw std::invalid_argument("banana_target: dimension must be >= 2");
  const double log_norm =
      -0.5 * (static_cast<double>(d) * std::log(2.0 * std::numbers::pi) + std::log(100.0));

  Target t;
  t.dim = d;
  t.name = "banana";
  t.log_density = [d, b, log_norm](const Vec& x) {
    if (x.size() != d) throw std::invalid_argument("banana: dimension mismatch");
    double y2 = x(1) + b * x(0) * x(0) - 100.0 * b;
    double quad = x(0) * x(0) / 100.0 + y2 * y2;
    for (Eigen::Index i = 2; i < d; ++i) quad += x(i) * x(i);
    return log_norm - 0.5 * quad;
  };
  Vec g0_diag = Vec::Ones(d);
  g0_diag(0) = 100.0;
  g0_diag(1) = 100.0;
  t.g0 = envelope_from(StudentT(Vec::Zero(d), Mat(g0_diag.asDiagonal()), 5.0));
  return t;
}

// ---------------------------------------------------------------------------
// Bayesian logistic regression
// ---------------------------------------------------------------------------

struct LogisticTarget {
  Target target;
  Vec center;  // predictor means on the training data
  Vec scale;   // divisor per predictor (2 * sample sd), so columns get sd 0.5
  Mat x_std;   // standardized design
  Eigen::VectorXi y;

  Vec standardize(const Vec& raw) const {
    return ((raw - center).array() / scale.array()).matrix();
  }

  // posterior-mean success probability at a raw covariate point
  double predictive_mu(const std::vector<Vec>& draws, const Vec& raw) const {
    if (draws.empty()) throw std::invalid_argument("predictive_mu: no draws");
    Vec z = standardize(raw);
    double acc = 0.0;
    for (const auto& theta : draws) {
      double eta = theta(0) + z.dot(theta.tail(z.size()));
      acc += eta >= 0.0 ? 1.0 / (1.0 + std::exp(-eta)) : std::exp(eta) / (1.0 + std::exp(eta));
    }
    return acc / static_cast<double>(draws.size());
  }
};

namespace detail {

inline double cauchy_logpdf(double x, double scale) {
  return -std::log(std::numbers::pi * scale) - std::log1p((x / scale) * (x / scale));
}

}  // namespace detail

// Bernoulli-logit likelihood on predictors standardized to mean 0, sd 0.5,
// with central Cauchy priors: scale 10 on the intercept, 2.5 on coefficients.
// g0 is the prior itself. The empty-data case reduces to the prior.
inline LogisticTarget logistic_target(const Mat& design, const Eigen::VectorXi& labels) {
  const auto n = design.rows();
  const auto p = design.cols();
  if (p < 1) throw std::invalid_argument("logistic_target: need at least one predictor");
  if (labels.size() != n) throw std::invalid_argument("logistic_target: label count mismatch");
  for (Eigen::Index i = 0; i < n; ++i)
    if (labels(i) != 0 && labels(i) != 1)
      throw std::invalid_argument("logistic_target: labels must be 0 or 1");
  if (n != 0 && n < p) throw std::invalid_argument("logistic_target: need n >= p observations");

  LogisticTarget lt;
  lt.y = labels;
  lt.center = Vec::Zero(p);
  lt.scale = Vec::Ones(p);
  if (n >= 2) {
    lt.center = design.colwise().mean();
    for (Eigen::Index j = 0; j < p; ++j) {
      double sd = std::sqrt((design.col(j).array() - lt.center(j)).square().sum() /
                            static_cast<double>(n - 1));
      if (!(sd > 1e-12 * (1.0 + std::abs(lt.center(j)))))
        throw std::invalid_argument("logistic_target: constant predictor column " +
                                    std::to_string(j));
      lt.scale(j) = 2.0 * sd;
    }
  } else if (n == 1) {
    throw std::invalid_argument("logistic_target: a single observation cannot be standardized");
  }
  lt.x_std.resize(n, p);
  for (Eigen::Index i = 0; i < n; ++i)
    lt.x_std.row(i) = ((design.row(i).transpose() - lt.center).array() / lt.scale.array())
                          .matrix()
                          .transpose();

  const Eigen::Index d = p + 1;
  auto x_std = std::make_shared<Mat>(lt.x_std);
  auto y = std::make_shared<Eigen::VectorXi>(labels);

  auto log_prior = [d](const Vec& theta) {
    double lp = detail::cauchy_logpdf(theta(0), 10.0);
    for (Eigen::Index j = 1; j < d; ++j) lp += detail::cauchy_logpdf(theta(j), 2.5);
    return lp;
  };

  lt.target.dim = d;
  lt.target.name = "logistic";
  lt.target.log_density = [x_std, y, log_prior, d](const Vec& theta) {
    if (theta.size() != d) throw std::invalid_argument("logistic: dimension mismatch");
    double ll = 0.0;
    for (Eigen::Index i = 0; i < x_std->rows(); ++i) {
      double eta = theta(0) + x_std->row(i).dot(theta.tail(theta.size() - 1).transpose());
      ll += static_cast<double>((*y)(i)) * eta - log1pexp(eta);
    }
    return ll + log_prior(theta);
  };
  lt.target.g0.log_density = log_prior;
  lt.target.g0.draw = [d](Rng& rng) {
    Vec theta(d);
    theta(0) = std::cauchy_distribution<double>(0.0, 10.0)(rng);
    for (Eigen::Index j = 1; j < d; ++j)
      theta(j) = std::cauchy_distribution<double>(0.0, 2.5)(rng);
    return theta;
  };
  return lt;
}

// ---------------------------------------------------------------------------
// covariance estimation on the log-matrix space
// ---------------------------------------------------------------------------

inline Mat sym_from_lower(const Vec& x, Eigen::Index p) {
  if (x.size() != p * (p + 1) / 2)
    throw std::invalid_argument("sym_from_lower: length must be p(p+1)/2");
  Mat s(p, p);
  Eigen::Index k = 0;
  for (Eigen::Index i = 0; i < p; ++i)
    for (Eigen::Index j = 0; j <= i; ++j) {
      s(i, j) = x(k);
      s(j, i) = x(k);
      ++k;
    }
  return s;
}

inline Vec lower_from_sym(const Mat& s) {
  const auto p = s.rows();
  if (s.cols() != p) throw std::invalid_argument("lower_from_sym: matrix must be square");
  Vec x(p * (p + 1) / 2);
  Eigen::Index k = 0;
  for (Eigen::Index i = 0; i < p; ++i)
    for (Eigen::Index j = 0; j <= i; ++j) x(k++) = s(i, j);
  return x;
}

inline Mat mat_exp_sym(const Mat& s) {
  Eigen::SelfAdjointEigenSolver<Mat> es(s);
  return es.eigenvectors() * es.eigenvalues().array().exp().matrix().asDiagonal() *
         es.eigenvectors().transpose();
}

inline Mat mat_log_spd(const Mat& s) {
  Eigen::SelfAdjointEigenSolver<Mat> es(s);
  if ((es.eigenvalues().array() <= 0.0).any())
    throw std::invalid_argument("mat_log_spd: matrix must be positive definite");
  return es.eigenvectors() * es.eigenvalues().array().log().matrix().asDiagonal() *
         es.eigenvectors().transpose();
}

namespace detail {

inline double log_expm1(double x) {  // log(e^x - 1), x >= 0
  return x > 33.0 ? x : std::log(std::expm1(x));
}

inline double log_expm1_over(double x) {  // log((e^x - 1)/x), smooth through 0
  if (x < 1e-4) return std::log1p(0.5 * x + x * x / 6.0);
  return x > 33.0 ? x - std::log(x) : std::log(std::expm1(x)) - std::log(x);
}

inline double log_mvgamma(Eigen::Index p, double a) {
  double out = 0.25 * static_cast<double>(p * (p - 1)) * std::log(std::numbers::pi);
  for (Eigen::Index j = 1; j <= p; ++j)
    out += std::lgamma(a + 0.5 * (1.0 - static_cast<double>(j)));
  return out;
}

}  // namespace detail

struct CovarianceTarget {
  Target target;
  Eigen::Index p = 0;
  long n_obs = 0;
  double eps = 1e-6;
  bool include_jacobian = true;
  Mat scatter;  // S = X'X
};

// Zero-mean Gaussian likelihood for Sigma with the reference prior
// 1/(|Sigma| prod_{i<j}(r_i - r_j)) truncated to eigenvalue gaps > eps,
// written on x = lower triangle of Sigma* = log(Sigma). With the exp-map
// Jacobian included everything collapses onto the log eigenvalues r*:
// log pi = -(N/2) sum r*_i - tr(Sigma^-1 S)/2 - sum_{i<j} log(r*_j - r*_i).
// g0 is an inverse Wishart with scale S and N - p + 1 degrees of freedom,
// pushed to the same space.
inline CovarianceTarget covariance_target(const Mat& data, double eps = 1e-6,
                                          bool include_jacobian = true) {
  const auto n = data.rows();
  const auto p = data.cols();
  if (p < 2) throw std::invalid_argument("covariance_target: need p >= 2");
  if (n <= p) throw std::invalid_argument("covariance_target: need N > p observations");
  if (!(eps > 0.0)) throw std::invalid_argument("covariance_target: eps must be positive");
  if (!data.allFinite()) throw std::invalid_argument("covariance_target: non-finite data");

  CovarianceTarget ct;
  ct.p = p;
  ct.n_obs = n;
  ct.eps = eps;
  ct.include_jacobian = include_jacobian;
  ct.scatter = data.transpose() * data;

  Eigen::LLT<Mat> llt(ct.scatter);
  if (llt.info() != Eigen::Success)
    throw std::invalid_argument("covariance_target: data must have full column rank");
  const double df = static_cast<double>(n - p + 1);
  if (!(df > static_cast<double>(p - 1)))
    throw std::invalid_argument("covariance_target: too few observations for a proper envelope");

  auto s = std::make_shared<Mat>(ct.scatter);
  auto chol_s = std::make_shared<Mat>(Mat(llt.matrixL()));
  const double log_det_s = 2.0 * chol_s->diagonal().array().log().sum();
  const double nn = static_cast<double>(n);
  const double log_eps = std::log(eps);
  const Eigen::Index d = p * (p + 1) / 2;

  ct.target.dim = d;
  ct.target.name = "covariance";
  ct.target.log_density = [s, p, nn, log_eps, include_jacobian](const Vec& x) {
    Mat sst = sym_from_lower(x, p);
    Eigen::SelfAdjointEigenSolver<Mat> es(sst);
    const Vec& rs = es.eigenvalues();  // ascending log eigenvalues r*
    for (Eigen::Index i = 0; i + 1 < p; ++i) {
      // gap in Sigma space: e^{r*_{i+1}} - e^{r*_i}
      double log_gap = rs(i) + detail::log_expm1(rs(i + 1) - rs(i));
      if (!(log_gap > log_eps)) return neg_inf;
    }
    Mat m = es.eigenvectors().transpose() * (*s) * es.eigenvectors();
    double trace = 0.0;
    for (Eigen::Index i = 0; i < p; ++i) trace += std::exp(-rs(i)) * m(i, i);
    if (std::isinf(trace)) return neg_inf;
    double out;
    if (include_jacobian) {
      out = -0.5 * nn * rs.sum() - 0.5 * trace;
      for (Eigen::Index i = 0; i < p; ++i)
        for (Eigen::Index j = i + 1; j < p; ++j) out -= std::log(rs(j) - rs(i));
    } else {
      out = -(0.5 * nn + 1.0) * rs.sum() - 0.5 * trace;
      for (Eigen::Index i = 0; i < p; ++i)
        for (Eigen::Index j = i + 1; j < p; ++j)
          out -= rs(i) + detail::log_expm1(rs(j) - rs(i));
    }
    return out;
  };

  // inverse Wishart on Sigma pushed to x-space (exp-map Jacobian included so
  // this is a proper density there)
  ct.target.g0.log_density = [s, p, df, log_det_s](const Vec& x) {
    Mat sst = sym_from_lower(x, p);
    Eigen::SelfAdjointEigenSolver<Mat> es(sst);
    const Vec& rs = es.eigenvalues();
    Mat m = es.eigenvectors().transpose() * (*s) * es.eigenvectors();
    double trace = 0.0;
    for (Eigen::Index i = 0; i < p; ++i) trace += std::exp(-rs(i)) * m(i, i);
    if (std::isinf(trace)) return neg_inf;
    const double pp = static_cast<double>(p);
    double out = 0.5 * df * log_det_s - 0.5 * df * pp * std::numbers::ln2 -
                 detail::log_mvgamma(p, 0.5 * df) - 0.5 * (df + pp + 1.0) * rs.sum() -
                 0.5 * trace;
    out += rs.sum();  // d Sigma / d Sigma* eigenvalue part
    for (Eigen::Index i = 0; i < p; ++i)
      for (Eigen::Index j = i + 1; j < p; ++j)
        out += rs(i) + detail::log_expm1_over(rs(j) - rs(i));
    return out;
  };
  ct.target.g0.draw = [chol_s, p, df](Rng& rng) {
    // Bartlett: Sigma = L_S A^{-T} A^{-1} L_S' is inverse Wishart(S, df)
    Mat a = Mat::Zero(p, p);
    std::normal_distribution<double> n01;
    for (Eigen::Index i = 0; i < p; ++i) {
      a(i, i) = std::sqrt(2.0 * draw_gamma(0.5 * (df - static_cast<double>(i)), 1.0, rng));
      for (Eigen::Index j = 0; j < i; ++j) a(i, j) = n01(rng);
    }
    Mat mt = a.triangularView<Eigen::Lower>().solve(chol_s->transpose());
    Mat sigma = mt.transpose() * mt;
    return lower_from_sym(mat_log_spd(sigma));
  };
  return ct;
}

}  // namespace acmh
