#pragma once

#include <algorithm>
#include <optional>
#include <string>
#include <vector>

#include "acmh/student_t.hpp"

namespace acmh {

struct FitConfig {
  int max_components = 10;
  std::vector<double> nu_grid{1.0, 2.0, 4.0, 8.0, 16.0, 32.0};
  double weight_floor = 0.02;
  int max_iters = 200;
  double tol = 1e-6;
  std::optional<int> fixed_g;

  void validate() const {
    if (max_components < 1) throw std::invalid_argument("FitConfig: max_components must be >= 1");
    if (nu_grid.empty()) throw std::invalid_argument("FitConfig: nu_grid must be nonempty");
    for (double nu : nu_grid)
      if (!(nu > 0.0)) throw std::invalid_argument("FitConfig: nu_grid entries must be positive");
    if (!(weight_floor >= 0.0 && weight_floor < 1.0 / static_cast<double>(max_components)))
      throw std::invalid_argument("FitConfig: weight_floor must be below 1/max_components");
    if (max_iters < 1) throw std::invalid_argument("FitConfig: max_iters must be >= 1");
    if (!(tol > 0.0)) throw std::invalid_argument("FitConfig: tol must be positive");
    if (fixed_g && (*fixed_g < 1 || *fixed_g > max_components))
      throw std::invalid_argument("FitConfig: fixed_g out of range");
  }
};

struct FitReport {
  std::vector<double> objective_trace;  // penalized objective after each sweep
  std::vector<double> loglik_trace;
  std::vector<int> structural_sweeps;   // trace indices where a split/merge/kill took effect
  std::vector<std::string> structural_log;
  int g_selected = 0;
  bool fallback_used = false;
  bool jitter_applied = false;
};

inline double fit_penalty(int g, int d, long n) {
  double per_comp = d + 0.5 * d * (d + 1) + 2.0;
  return 0.5 * static_cast<double>(g) * per_comp * std::log(static_cast<double>(n));
}

// Penalized objective: data log likelihood minus 0.5 G (d + d(d+1)/2 + 2) log n.
inline double fit_objective(const TMixture& m, const std::vector<Vec>& data) {
  double ll = 0.0;
  for (const auto& x : data) ll += m.logpdf(x);
  return ll - fit_penalty(static_cast<int>(m.size()), static_cast<int>(m.dim()),
                          static_cast<long>(data.size()));
}

namespace detail {

struct FitComp {
  double w;
  Vec mu;
  Mat sigma;
  double nu;
};

struct FitWork {
  Mat x;          // n x d data
  Mat delta;      // n x G Mahalanobis forms
  Mat logdens;    // n x G component log densities
  Mat resp;       // n x G responsibilities
  double ridge = 0.0;
};

inline double t_log_norm(double nu, double d, double log_det) {
  return std::lgamma(0.5 * (nu + d)) - std::lgamma(0.5 * nu) -
         0.5 * d * std::log(nu * std::numbers::pi) - 0.5 * log_det;
}

// Fill the delta and logdens columns for one component.
inline void component_pass(FitWork& work, const std::vector<FitComp>& comps, size_t k) {
  const auto& c = comps[k];
  const double d = static_cast<double>(work.x.cols());
  Eigen::LLT<Mat> llt(c.sigma);
  if (llt.info() != Eigen::Success)
    throw std::runtime_error("fit: component scale lost positive definiteness");
  Mat l = llt.matrixL();
  double log_det = 2.0 * l.diagonal().array().log().sum();
  double norm = t_log_norm(c.nu, d, log_det);
  Mat centered = (work.x.rowwise() - c.mu.transpose()).transpose();  // d x n
  l.triangularView<Eigen::Lower>().solveInPlace(centered);
  auto kk = static_cast<Eigen::Index>(k);
  work.delta.col(kk) = centered.colwise().squaredNorm().transpose();
  work.logdens.col(kk) =
      (norm - 0.5 * (c.nu + d) * (work.delta.col(kk).array() / c.nu).log1p()).matrix();
}

inline Vec log_weights(const std::vector<FitComp>& comps) {
  Vec logw(static_cast<Eigen::Index>(comps.size()));
  for (Eigen::Index k = 0; k < logw.size(); ++k)
    logw(k) = std::log(std::max(comps[static_cast<size_t>(k)].w, 1e-300));
  return logw;
}

// Responsibilities and the data log likelihood for the current parameters.
inline double estep(FitWork& work, const std::vector<FitComp>& comps) {
  Vec logw = log_weights(comps);
  Eigen::ArrayXXd a = (work.logdens.rowwise() + logw.transpose()).array();
  Eigen::ArrayXd mx = a.rowwise().maxCoeff();
  Eigen::ArrayXXd e = (a.colwise() - mx).exp();
  Eigen::ArrayXd rs = e.rowwise().sum();
  work.resp = (e.colwise() / rs).matrix();
  return (mx + rs.log()).sum();
}

inline void refresh_all(FitWork& work, const std::vector<FitComp>& comps) {
  const auto n = work.x.rows();
  const auto g = static_cast<Eigen::Index>(comps.size());
  work.delta.resize(n, g);
  work.logdens.resize(n, g);
  work.resp.resize(n, g);
  for (size_t k = 0; k < comps.size(); ++k) component_pass(work, comps, k);
}

// Gamma-augmented M step for weights, locations, and scales.
inline void mstep(FitWork& work, std::vector<FitComp>& comps) {
  const auto n = work.x.rows();
  const double d = static_cast<double>(work.x.cols());
  for (size_t k = 0; k < comps.size(); ++k) {
    auto kk = static_cast<Eigen::Index>(k);
    auto& c = comps[k];
    Eigen::ArrayXd tau = work.resp.col(kk).array();
    Eigen::ArrayXd tu = tau * (c.nu + d) / (c.nu + work.delta.col(kk).array());
    double tau_sum = tau.sum();
    double tu_sum = tu.sum();
    if (!(tau_sum > 1e-10) || !(tu_sum > 1e-10)) {
      c.w = 0.0;  // dead component, swept up by the kill rule
      continue;
    }
    c.w = tau_sum / static_cast<double>(n);
    Vec mu = (work.x.transpose() * tu.matrix()) / tu_sum;
    Mat centered = work.x.rowwise() - mu.transpose();
    Mat weighted = (centered.array().colwise() * tu).matrix();
    Mat s = (weighted.transpose() * centered) / tau_sum;
    s = 0.5 * (s + s.transpose());
    s += work.ridge * Mat::Identity(s.rows(), s.cols());
    c.mu = std::move(mu);
    c.sigma = std::move(s);
  }
  double w_total = 0.0;
  for (const auto& c : comps) w_total += c.w;
  for (auto& c : comps) c.w /= w_total;
}

// Profile each component's nu over the grid against the actual mixture
// likelihood, holding everything else fixed. The current nu is always on the
// grid, so the scan can only improve the likelihood.
inline void nustep(FitWork& work, std::vector<FitComp>& comps, const std::vector<double>& grid) {
  const auto n = work.x.rows();
  const double d = static_cast<double>(work.x.cols());
  const auto g = static_cast<Eigen::Index>(comps.size());
  Vec logw = log_weights(comps);
  for (Eigen::Index k = 0; k < g; ++k) {
    Eigen::ArrayXd rest;  // log sum over the other components, fixed during k's scan
    if (g == 1) {
      rest = Eigen::ArrayXd::Constant(n, neg_inf);
    } else {
      Eigen::ArrayXXd a = (work.logdens.rowwise() + logw.transpose()).array();
      a.col(k) = neg_inf;
      Eigen::ArrayXd mx = a.rowwise().maxCoeff();
      rest = mx + (a.colwise() - mx).exp().rowwise().sum().log();
    }
    Eigen::ArrayXd delta = work.delta.col(k).array();
    Eigen::LLT<Mat> llt(comps[static_cast<size_t>(k)].sigma);
    double log_det = 2.0 * Mat(llt.matrixL()).diagonal().array().log().sum();
    double best_ll = neg_inf;
    double best_nu = comps[static_cast<size_t>(k)].nu;
    Eigen::ArrayXd best_col;
    for (double nu : grid) {
      Eigen::ArrayXd col =
          t_log_norm(nu, d, log_det) - 0.5 * (nu + d) * (delta / nu).log1p() + logw(k);
      Eigen::ArrayXd mx = rest.max(col);
      double ll = (mx + ((rest - mx).exp() + (col - mx).exp()).log()).sum();
      if (ll > best_ll) {
        best_ll = ll;
        best_nu = nu;
        best_col = col - logw(k);
      }
    }
    comps[static_cast<size_t>(k)].nu = best_nu;
    work.logdens.col(k) = best_col.matrix();
  }
}

inline double penalized(double loglik, size_t g, Eigen::Index d, Eigen::Index n) {
  return loglik - fit_penalty(static_cast<int>(g), static_cast<int>(d), static_cast<long>(n));
}

// Run EM sweeps until the penalized objective settles; append to the traces.
// Leaves the workspace consistent with the returned parameters.
inline double inner_em(FitWork& work, std::vector<FitComp>& comps, const FitConfig& cfg,
                       int max_sweeps, FitReport* report) {
  const auto n = work.x.rows();
  const auto d = work.x.cols();
  refresh_all(work, comps);
  double loglik = estep(work, comps);
  double prev_obj = penalized(loglik, comps.size(), d, n);
  for (int sweep = 0; sweep < max_sweeps; ++sweep) {
    mstep(work, comps);
    bool dead = false;
    for (const auto& c : comps) dead |= (c.w <= 0.0);
    if (dead) break;  // structural layer removes it
    refresh_all(work, comps);
    nustep(work, comps, cfg.nu_grid);
    loglik = estep(work, comps);
    double obj = penalized(loglik, comps.size(), d, n);
    if (report) {
      report->loglik_trace.push_back(loglik);
      report->objective_trace.push_back(obj);
    }
    if (std::abs(obj - prev_obj) <= cfg.tol * std::max(1.0, std::abs(obj))) break;
    prev_obj = obj;
  }
  return loglik;
}

inline double bhattacharyya_overlap(const FitComp& a, const FitComp& b) {
  auto moment = [](const FitComp& c) {
    return c.nu > 2.0 ? Mat((c.nu / (c.nu - 2.0)) * c.sigma) : c.sigma;
  };
  Mat sa = moment(a), sb = moment(b);
  Mat avg = 0.5 * (sa + sb);
  Eigen::LLT<Mat> llt(avg);
  if (llt.info() != Eigen::Success) return 0.0;
  Vec diff = a.mu - b.mu;
  Vec w = llt.matrixL().solve(diff);
  auto log_det = [](const Mat& s) {
    Eigen::LLT<Mat> f(s);
    return 2.0 * Mat(f.matrixL()).diagonal().array().log().sum();
  };
  double dist = 0.125 * w.squaredNorm() +
                0.5 * (log_det(avg) - 0.5 * (log_det(sa) + log_det(sb)));
  return std::exp(-dist);
}

inline TMixture to_mixture(const std::vector<FitComp>& comps, bool* jitter_flag) {
  Vec w(static_cast<Eigen::Index>(comps.size()));
  std::vector<StudentT> parts;
  double total = 0.0;
  for (const auto& c : comps) total += c.w;
  for (size_t k = 0; k < comps.size(); ++k) {
    w(static_cast<Eigen::Index>(k)) = comps[k].w / total;
    parts.emplace_back(comps[k].mu, comps[k].sigma, comps[k].nu);
    if (jitter_flag && parts.back().jitter_applied()) *jitter_flag = true;
  }
  // remove accumulated rounding so the sum is exactly one
  w(w.size() - 1) = 1.0 - (w.sum() - w(w.size() - 1));
  return TMixture(std::move(w), std::move(parts));
}

// kmeans++ seeding followed by a few Lloyd rounds
inline std::vector<FitComp> seed_components(const Mat& x, int k, double ridge, Rng& rng) {
  const auto n = x.rows();
  const auto d = x.cols();
  std::uniform_int_distribution<Eigen::Index> pick(0, n - 1);
  std::vector<Eigen::Index> centers{pick(rng)};
  Vec dist2 = (x.rowwise() - x.row(centers[0])).rowwise().squaredNorm();
  std::uniform_real_distribution<double> u01;
  while (static_cast<int>(centers.size()) < k) {
    double total = dist2.sum();
    Eigen::Index chosen = 0;
    if (total > 0.0) {
      double target = u01(rng) * total;
      double acc = 0.0;
      for (Eigen::Index i = 0; i < n; ++i) {
        acc += dist2(i);
        if (target <= acc) {
          chosen = i;
          break;
        }
      }
    } else {
      chosen = pick(rng);
    }
    centers.push_back(chosen);
    dist2 = dist2.cwiseMin(Vec((x.rowwise() - x.row(chosen)).rowwise().squaredNorm()));
  }

  Mat mu(k, d);
  for (int c = 0; c < k; ++c) mu.row(c) = x.row(centers[static_cast<size_t>(c)]);
  std::vector<int> assign(static_cast<size_t>(n), 0);
  for (int round = 0; round < 5; ++round) {
    for (Eigen::Index i = 0; i < n; ++i) {
      double best = pos_inf;
      for (int c = 0; c < k; ++c) {
        double d2 = (x.row(i) - mu.row(c)).squaredNorm();
        if (d2 < best) {
          best = d2;
          assign[static_cast<size_t>(i)] = c;
        }
      }
    }
    Mat sums = Mat::Zero(k, d);
    std::vector<long> counts(static_cast<size_t>(k), 0);
    for (Eigen::Index i = 0; i < n; ++i) {
      sums.row(assign[static_cast<size_t>(i)]) += x.row(i);
      ++counts[static_cast<size_t>(assign[static_cast<size_t>(i)])];
    }
    for (int c = 0; c < k; ++c)
      if (counts[static_cast<size_t>(c)] > 0)
        mu.row(c) = sums.row(c) / static_cast<double>(counts[static_cast<size_t>(c)]);
  }

  Vec global_mu = x.colwise().mean();
  Mat global_centered = x.rowwise() - global_mu.transpose();
  Mat global_cov = global_centered.transpose() * global_centered / static_cast<double>(n) +
                   ridge * Mat::Identity(d, d);

  std::vector<FitComp> comps;
  for (int c = 0; c < k; ++c) {
    std::vector<Eigen::Index> members;
    for (Eigen::Index i = 0; i < n; ++i)
      if (assign[static_cast<size_t>(i)] == c) members.push_back(i);
    FitComp comp;
    comp.w = std::max(static_cast<double>(members.size()) / static_cast<double>(n), 1e-3);
    comp.nu = 8.0;
    comp.mu = mu.row(c).transpose();
    if (members.size() > static_cast<size_t>(d) + 2) {
      Mat centered(static_cast<Eigen::Index>(members.size()), d);
      for (size_t i = 0; i < members.size(); ++i)
        centered.row(static_cast<Eigen::Index>(i)) = x.row(members[i]) - mu.row(c);
      comp.sigma = centered.transpose() * centered / static_cast<double>(members.size()) +
                   ridge * Mat::Identity(d, d);
    } else {
      comp.sigma = global_cov;
    }
    comps.push_back(std::move(comp));
  }
  double total = 0.0;
  for (const auto& c : comps) total += c.w;
  for (auto& c : comps) c.w /= total;
  return comps;
}

}  // namespace detail

// Fit a Student-t mixture by gamma-augmented EM with grid-profiled degrees of
// freedom and greedy split/merge moves judged on the penalized objective.
inline std::pair<TMixture, FitReport> fit_t_mixture(const std::vector<Vec>& history,
                                                    const FitConfig& cfg, Rng& rng) {
  cfg.validate();
  if (history.empty()) throw insufficient_data_error("fit_t_mixture: empty history");
  const auto d = history[0].size();
  const auto n = static_cast<Eigen::Index>(history.size());
  if (n < 10 * d)
    throw insufficient_data_error("fit_t_mixture: need at least 10 d points, have " +
                                  std::to_string(n));

  detail::FitWork work;
  work.x.resize(n, d);
  for (Eigen::Index i = 0; i < n; ++i) {
    const Vec& xi = history[static_cast<size_t>(i)];
    if (xi.size() != d) throw std::invalid_argument("fit_t_mixture: inconsistent dimensions");
    if (!xi.allFinite()) throw std::invalid_argument("fit_t_mixture: non-finite history entry");
    work.x.row(i) = xi.transpose();
  }

  FitReport report;

  bool all_same = true;
  for (Eigen::Index i = 1; i < n && all_same; ++i) all_same = (work.x.row(i) == work.x.row(0));
  if (all_same) {
    report.fallback_used = true;
    report.g_selected = 1;
    double scale = 1e-6 * (1.0 + work.x.row(0).squaredNorm());
    StudentT only(work.x.row(0).transpose(), scale * Mat::Identity(d, d), cfg.nu_grid.back());
    report.jitter_applied = only.jitter_applied();
    return {TMixture(Vec::Ones(1), {only}), std::move(report)};
  }

  // ridge scale from a median pairwise squared distance over a fixed subset
  {
    const Eigen::Index sub = std::min<Eigen::Index>(n, 400);
    std::vector<double> d2;
    for (Eigen::Index i = 0; i < sub; ++i)
      for (Eigen::Index j = i + 1; j < sub; ++j)
        d2.push_back((work.x.row(i) - work.x.row(j)).squaredNorm());
    auto mid = d2.begin() + static_cast<long>(d2.size() / 2);
    std::nth_element(d2.begin(), mid, d2.end());
    work.ridge = 1e-6 * std::max(*mid / static_cast<double>(d), 1e-12);
  }

  const int g_init = cfg.fixed_g ? *cfg.fixed_g : std::min(cfg.max_components, 5);
  std::vector<detail::FitComp> comps = detail::seed_components(work.x, g_init, work.ridge, rng);

  const bool structural_allowed = !cfg.fixed_g.has_value();
  double loglik = detail::inner_em(work, comps, cfg, cfg.max_iters, &report);
  double obj = detail::penalized(loglik, comps.size(), d, n);

  for (int round = 0; structural_allowed && round < 4 * cfg.max_components; ++round) {
    bool changed = false;

    // kill rule
    if (comps.size() > 1) {
      size_t worst = 0;
      for (size_t k = 1; k < comps.size(); ++k)
        if (comps[k].w < comps[worst].w) worst = k;
      if (comps[worst].w < cfg.weight_floor) {
        report.structural_log.push_back("kill component " + std::to_string(worst) + " (weight " +
                                        std::to_string(comps[worst].w) + ")");
        comps.erase(comps.begin() + static_cast<long>(worst));
        double total = 0.0;
        for (const auto& c : comps) total += c.w;
        for (auto& c : comps) c.w /= total;
        report.structural_sweeps.push_back(static_cast<int>(report.objective_trace.size()));
        loglik = detail::inner_em(work, comps, cfg, cfg.max_iters, &report);
        obj = detail::penalized(loglik, comps.size(), d, n);
        continue;
      }
    }

    // merge the most overlapping pair when that helps the objective
    if (comps.size() >= 2) {
      size_t bi = 0, bj = 1;
      double best = -1.0;
      for (size_t i = 0; i < comps.size(); ++i)
        for (size_t j = i + 1; j < comps.size(); ++j) {
          double o = detail::bhattacharyya_overlap(comps[i], comps[j]);
          if (o > best) {
            best = o;
            bi = i;
            bj = j;
          }
        }
      std::vector<detail::FitComp> trial = comps;
      {
        const auto &a = trial[bi], &b = trial[bj];
        detail::FitComp merged;
        merged.w = a.w + b.w;
        merged.mu = (a.w * a.mu + b.w * b.mu) / merged.w;
        merged.sigma = (a.w * (a.sigma + a.mu * a.mu.transpose()) +
                        b.w * (b.sigma + b.mu * b.mu.transpose())) /
                           merged.w -
                       merged.mu * merged.mu.transpose() +
                       work.ridge * Mat::Identity(d, d);
        merged.nu = a.w >= b.w ? a.nu : b.nu;
        trial.erase(trial.begin() + static_cast<long>(bj));
        trial[bi] = std::move(merged);
      }
      detail::FitWork trial_work = work;
      FitReport scratch;
      double trial_ll = detail::inner_em(trial_work, trial, cfg, 20, &scratch);
      if (detail::penalized(trial_ll, trial.size(), d, n) > obj + 1e-9) {
        report.structural_log.push_back("merge components " + std::to_string(bi) + "," +
                                        std::to_string(bj));
        report.structural_sweeps.push_back(static_cast<int>(report.objective_trace.size()));
        comps = std::move(trial);
        work = std::move(trial_work);
        for (size_t t = 0; t < scratch.loglik_trace.size(); ++t) {
          report.loglik_trace.push_back(scratch.loglik_trace[t]);
          report.objective_trace.push_back(scratch.objective_trace[t]);
        }
        loglik = detail::inner_em(work, comps, cfg, cfg.max_iters, &report);
        obj = detail::penalized(loglik, comps.size(), d, n);
        changed = true;
      }
    }

    // split the worst-fitting component along its principal axis
    if (!changed && static_cast<int>(comps.size()) < cfg.max_components) {
      size_t target = 0;
      double worst_dev = neg_inf;
      for (size_t k = 0; k < comps.size(); ++k) {
        auto kk = static_cast<Eigen::Index>(k);
        double tau_sum = work.resp.col(kk).sum();
        if (tau_sum <= 1e-8) continue;
        double dev =
            -2.0 * (work.resp.col(kk).array() * work.logdens.col(kk).array()).sum() / tau_sum;
        if (dev > worst_dev) {
          worst_dev = dev;
          target = k;
        }
      }
      std::vector<detail::FitComp> trial = comps;
      {
        const detail::FitComp& parent = trial[target];
        Eigen::SelfAdjointEigenSolver<Mat> eig(parent.sigma);
        Vec axis = eig.eigenvectors().col(d - 1);
        double lambda = eig.eigenvalues()(d - 1);
        Vec offset = 0.7 * std::sqrt(std::max(lambda, 0.0)) * axis;
        Mat child_sigma = parent.sigma - 0.5 * lambda * axis * axis.transpose() +
                          work.ridge * Mat::Identity(d, d);
        detail::FitComp left{parent.w / 2.0, parent.mu - offset, child_sigma, parent.nu};
        detail::FitComp right{parent.w / 2.0, parent.mu + offset, child_sigma, parent.nu};
        trial[target] = std::move(left);
        trial.push_back(std::move(right));
      }
      detail::FitWork trial_work = work;
      FitReport scratch;
      double trial_ll = detail::inner_em(trial_work, trial, cfg, 20, &scratch);
      if (detail::penalized(trial_ll, trial.size(), d, n) > obj + 1e-9) {
        report.structural_log.push_back("split component " + std::to_string(target));
        report.structural_sweeps.push_back(static_cast<int>(report.objective_trace.size()));
        comps = std::move(trial);
        work = std::move(trial_work);
        for (size_t t = 0; t < scratch.loglik_trace.size(); ++t) {
          report.loglik_trace.push_back(scratch.loglik_trace[t]);
          report.objective_trace.push_back(scratch.objective_trace[t]);
        }
        loglik = detail::inner_em(work, comps, cfg, cfg.max_iters, &report);
        obj = detail::penalized(loglik, comps.size(), d, n);
        changed = true;
      }
    }

    if (!changed) break;
  }

  report.g_selected = static_cast<int>(comps.size());
  TMixture m = detail::to_mixture(comps, &report.jitter_applied);
  return {std::move(m), std::move(report)};
}

}  // namespace acmh
