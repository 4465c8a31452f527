#pragma once

#include <algorithm>
#include <cmath>
#include <utility>
#include <vector>

#include "acmh/core.hpp"

namespace acmh {

// Multivariate Student-t with density
//   t_d(x; mu, Sigma, nu) propto |Sigma|^{-1/2} (1 + delta(x)/nu)^{-(nu+d)/2},
// delta(x) the Mahalanobis form. The Cholesky factor and normalizing constant
// are cached at construction; instances are immutable.
class StudentT {
 public:
  StudentT(Vec mu, Mat sigma, double nu) : mu_(std::move(mu)), sigma_(std::move(sigma)), nu_(nu) {
    const auto d = mu_.size();
    if (d < 1) throw std::invalid_argument("StudentT: dimension must be >= 1");
    if (!(nu_ > 0.0)) throw std::invalid_argument("StudentT: nu must be positive");
    if (sigma_.rows() != d || sigma_.cols() != d)
      throw std::invalid_argument("StudentT: scale matrix shape mismatch");
    double scale = sigma_.cwiseAbs().maxCoeff();
    if ((sigma_ - sigma_.transpose()).cwiseAbs().maxCoeff() > 1e-8 * std::max(scale, 1.0))
      throw std::invalid_argument("StudentT: scale matrix not symmetric");

    Eigen::LLT<Mat> llt(sigma_);
    if (llt.info() != Eigen::Success) {
      // one jitter attempt, then reject
      double jitter = 1e-10 * sigma_.trace() / static_cast<double>(d);
      sigma_ += jitter * Mat::Identity(d, d);
      llt.compute(sigma_);
      if (llt.info() != Eigen::Success)
        throw std::invalid_argument("StudentT: scale matrix not positive definite");
      jitter_applied_ = true;
    }
    chol_ = llt.matrixL();
    log_det_ = 2.0 * chol_.diagonal().array().log().sum();
    finish_norm_const();
  }

  Eigen::Index dim() const { return mu_.size(); }
  const Vec& mu() const { return mu_; }
  const Mat& sigma() const { return sigma_; }
  double nu() const { return nu_; }
  const Mat& chol() const { return chol_; }
  double log_det_sigma() const { return log_det_; }
  bool jitter_applied() const { return jitter_applied_; }

  double mahalanobis(const Vec& x) const {
    Vec y = chol_.triangularView<Eigen::Lower>().solve(x - mu_);
    return y.squaredNorm();
  }

  double logpdf(const Vec& x) const {
    if (x.size() != dim()) throw std::invalid_argument("StudentT::logpdf: dimension mismatch");
    double delta = mahalanobis(x);
    if (std::isinf(delta)) return neg_inf;
    return norm_const_ - 0.5 * (nu_ + static_cast<double>(dim())) * std::log1p(delta / nu_);
  }

  Vec sample(Rng& rng) const {
    // g ~ Gamma(nu/2, rate nu/2) is chi^2_nu / nu, so z = mu + L u / sqrt(g)
    double g = draw_gamma(0.5 * nu_, 2.0 / nu_, rng);
    Vec u = standard_normal_vector(dim(), rng);
    Vec lu = chol_.triangularView<Eigen::Lower>() * u;
    return mu_ + lu / std::sqrt(g);
  }

  // Same shape scaled by c > 0, reusing the cached factorization.
  StudentT scaled(double c, Vec new_mu, double new_nu) const {
    StudentT out(*this);
    out.mu_ = std::move(new_mu);
    out.nu_ = new_nu;
    out.sigma_ = c * sigma_;
    out.chol_ = std::sqrt(c) * chol_;
    out.log_det_ = log_det_ + static_cast<double>(dim()) * std::log(c);
    out.finish_norm_const();
    return out;
  }

  // nu/(nu-2) * Sigma when second moments exist, Sigma otherwise.
  Mat moment_cov() const {
    if (nu_ > 2.0) return (nu_ / (nu_ - 2.0)) * sigma_;
    return sigma_;
  }

 private:
  void finish_norm_const() {
    const double d = static_cast<double>(dim());
    norm_const_ = std::lgamma(0.5 * (nu_ + d)) - std::lgamma(0.5 * nu_) -
                  0.5 * d * std::log(nu_ * std::numbers::pi) - 0.5 * log_det_;
  }

  Vec mu_;
  Mat sigma_;
  double nu_;
  Mat chol_;
  double log_det_ = 0.0;
  double norm_const_ = 0.0;
  bool jitter_applied_ = false;
};

class TMixture {
 public:
  TMixture(Vec weights, std::vector<StudentT> components)
      : weights_(std::move(weights)), components_(std::move(components)) {
    const auto g = static_cast<Eigen::Index>(components_.size());
    if (g < 1) throw std::invalid_argument("TMixture: need at least one component");
    if (weights_.size() != g) throw std::invalid_argument("TMixture: weight count mismatch");
    if ((weights_.array() < 0.0).any()) throw std::invalid_argument("TMixture: negative weight");
    if (std::abs(weights_.sum() - 1.0) > 1e-12)
      throw std::invalid_argument("TMixture: weights must sum to 1");
    for (const auto& c : components_)
      if (c.dim() != components_[0].dim())
        throw std::invalid_argument("TMixture: component dimension mismatch");
    log_weights_ = weights_.array().max(0.0).log();
  }

  Eigen::Index dim() const { return components_[0].dim(); }
  Eigen::Index size() const { return static_cast<Eigen::Index>(components_.size()); }
  const Vec& weights() const { return weights_; }
  const std::vector<StudentT>& components() const { return components_; }
  const StudentT& component(Eigen::Index k) const { return components_[static_cast<size_t>(k)]; }

  // log sum_k w_k zeta_k(x), evaluated in log space throughout
  double logpdf(const Vec& x) const {
    Vec terms = weighted_log_terms(x);
    return log_sum_exp(terms);
  }

  Vec responsibilities(const Vec& x) const {
    Vec terms = weighted_log_terms(x);
    double total = log_sum_exp(terms);
    if (total == neg_inf)
      throw degenerate_point_error("TMixture::responsibilities: all components underflow");
    return (terms.array() - total).exp();
  }

  // argmax_k w_k zeta_k(x), ties resolved to the lowest index
  Eigen::Index top_component(const Vec& x) const {
    Vec terms = weighted_log_terms(x);
    Eigen::Index best = 0;
    for (Eigen::Index k = 1; k < terms.size(); ++k)
      if (terms(k) > terms(best)) best = k;
    return best;
  }

  Vec sample(Rng& rng) const {
    std::uniform_real_distribution<double> u01;
    double u = u01(rng);
    double acc = 0.0;
    Eigen::Index k = size() - 1;
    for (Eigen::Index j = 0; j < size(); ++j) {
      acc += weights_(j);
      if (u <= acc) {
        k = j;
        break;
      }
    }
    return components_[static_cast<size_t>(k)].sample(rng);
  }

 private:
  Vec weighted_log_terms(const Vec& x) const {
    Vec terms(size());
    for (Eigen::Index k = 0; k < size(); ++k)
      terms(k) = log_weights_(k) + components_[static_cast<size_t>(k)].logpdf(x);
    return terms;
  }

  Vec weights_;
  std::vector<StudentT> components_;
  Eigen::ArrayXd log_weights_;
};

// Ordered split of coordinate indices into a sampled block A and a held block
// B. A must be nonempty; B may be empty (the degenerate full-vector case).
class Partition {
 public:
  Partition(std::vector<int> index_a, std::vector<int> index_b, int d)
      : a_(std::move(index_a)), b_(std::move(index_b)), d_(d) {
    if (d_ < 1) throw std::invalid_argument("Partition: dimension must be >= 1");
    if (a_.empty()) throw std::invalid_argument("Partition: block A must be nonempty");
    if (a_.size() + b_.size() != static_cast<size_t>(d_))
      throw std::invalid_argument("Partition: blocks must cover all coordinates");
    std::vector<char> seen(static_cast<size_t>(d_), 0);
    auto mark = [&](const std::vector<int>& idx) {
      for (int i : idx) {
        if (i < 0 || i >= d_) throw std::invalid_argument("Partition: index out of range");
        if (seen[static_cast<size_t>(i)]) throw std::invalid_argument("Partition: duplicate index");
        seen[static_cast<size_t>(i)] = 1;
      }
    };
    mark(a_);
    mark(b_);
  }

  int dim() const { return d_; }
  const std::vector<int>& index_a() const { return a_; }
  const std::vector<int>& index_b() const { return b_; }

  Vec take_a(const Vec& x) const { return take(x, a_); }
  Vec take_b(const Vec& x) const { return take(x, b_); }

  Vec assemble(const Vec& za, const Vec& xb) const {
    Vec out(d_);
    for (size_t i = 0; i < a_.size(); ++i) out(a_[i]) = za(static_cast<Eigen::Index>(i));
    for (size_t i = 0; i < b_.size(); ++i) out(b_[i]) = xb(static_cast<Eigen::Index>(i));
    return out;
  }

  Mat block(const Mat& s, const std::vector<int>& rows, const std::vector<int>& cols) const {
    Mat out(rows.size(), cols.size());
    for (size_t i = 0; i < rows.size(); ++i)
      for (size_t j = 0; j < cols.size(); ++j)
        out(static_cast<Eigen::Index>(i), static_cast<Eigen::Index>(j)) = s(rows[i], cols[j]);
    return out;
  }

 private:
  static Vec take(const Vec& x, const std::vector<int>& idx) {
    Vec out(static_cast<Eigen::Index>(idx.size()));
    for (size_t i = 0; i < idx.size(); ++i) out(static_cast<Eigen::Index>(i)) = x(idx[i]);
    return out;
  }

  std::vector<int> a_;
  std::vector<int> b_;
  int d_;
};

// Exact conditional law of the A block given x_B under a joint Student-t:
// location mu_A + S_AB S_BB^{-1}(x_B - mu_B), degrees of freedom nu + d_B,
// scale ((nu + delta_B)/(nu + d_B)) * (S_AA - S_AB S_BB^{-1} S_BA).
inline StudentT conditional_student_t(const StudentT& p, const Partition& part, const Vec& x_b) {
  if (part.dim() != p.dim())
    throw std::invalid_argument("conditional_student_t: partition dimension mismatch");
  if (part.index_b().empty())
    throw std::invalid_argument("conditional_student_t: block B must be nonempty");
  if (x_b.size() != static_cast<Eigen::Index>(part.index_b().size()))
    throw std::invalid_argument("conditional_student_t: x_B size mismatch");

  const auto& ia = part.index_a();
  const auto& ib = part.index_b();
  const double d_b = static_cast<double>(ib.size());

  Mat s_bb = part.block(p.sigma(), ib, ib);
  Mat s_ab = part.block(p.sigma(), ia, ib);
  Mat s_aa = part.block(p.sigma(), ia, ia);

  Eigen::LLT<Mat> llt(s_bb);
  if (llt.info() != Eigen::Success)
    throw std::runtime_error("conditional_student_t: Sigma_BB is singular");

  Vec mu_b = part.take_b(p.mu());
  Vec mu_a = part.take_a(p.mu());
  Vec r = x_b - mu_b;
  Vec w = llt.matrixL().solve(r);
  double delta_b = w.squaredNorm();
  if (!std::isfinite(delta_b))
    throw std::invalid_argument("conditional_student_t: non-finite conditioning point");

  // W = L^{-1} S_BA so that S_AB S_BB^{-1} S_BA = W' W
  Mat w_mat = llt.matrixL().solve(s_ab.transpose());
  Vec loc = mu_a + w_mat.transpose() * w;
  Mat schur = s_aa - w_mat.transpose() * w_mat;
  double factor = (p.nu() + delta_b) / (p.nu() + d_b);
  return StudentT(std::move(loc), factor * schur, p.nu() + d_b);
}

}  // namespace acmh
