#pragma once

#include <cstdio>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <sstream>
#include <string>
#include <vector>

#include "acmh/arwmh.hpp"
#include "acmh/chain.hpp"
#include "acmh/diagnostics.hpp"
#include "acmh/serialize.hpp"

namespace acmh {

enum class Variant { Acmh, Arwmh, AcmhIndep, AcmhNoRw, AcmhNoBlock };

inline const char* variant_name(Variant v) {
  switch (v) {
    case Variant::Acmh: return "acmh";
    case Variant::Arwmh: return "arwmh";
    case Variant::AcmhIndep: return "acmh-indep";
    case Variant::AcmhNoRw: return "acmh-no-rw";
    case Variant::AcmhNoBlock: return "acmh-no-block";
  }
  return "?";
}

inline Variant variant_from_string(const std::string& s) {
  if (s == "acmh") return Variant::Acmh;
  if (s == "arwmh") return Variant::Arwmh;
  if (s == "acmh-indep") return Variant::AcmhIndep;
  if (s == "acmh-no-rw") return Variant::AcmhNoRw;
  if (s == "acmh-no-block") return Variant::AcmhNoBlock;
  throw std::invalid_argument("unknown variant: " + s);
}

struct ExperimentConfig {
  std::string target_name = "msn";  // msn | banana | logistic | covariance
  Eigen::Index dim = 2;             // for msn/banana; data-driven otherwise
  Variant variant = Variant::Acmh;
  RunConfig run;
  long replications = 1;
  std::string out_dir;
  std::string data_csv;       // input for logistic/covariance
  long lpds_test_size = 5000; // exact-sampler draws scored against chain KDEs
  bool no_timing = false;     // report zero cpu_seconds for byte-stable outputs

  void validate() const {
    if (replications < 1)
      throw std::invalid_argument("ExperimentConfig: replications must be >= 1");
    if (out_dir.empty()) throw std::invalid_argument("ExperimentConfig: out_dir is empty");
    if (lpds_test_size < 2)
      throw std::invalid_argument("ExperimentConfig: lpds_test_size must be >= 2");
    run.validate();
  }
};

// ---------------------------------------------------------------------------
// CSV plumbing
// ---------------------------------------------------------------------------

inline std::string fmt17(double v) {
  char buf[40];
  std::snprintf(buf, sizeof(buf), "%.17g", v);
  return buf;
}

struct CsvTable {
  std::vector<std::string> header;
  Mat values;
};

inline CsvTable read_csv(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw std::invalid_argument("read_csv: cannot open " + path);
  CsvTable out;
  std::string line;
  auto split = [](const std::string& s) {
    std::vector<std::string> cells;
    std::stringstream ss(s);
    std::string cell;
    while (std::getline(ss, cell, ',')) {
      size_t a = cell.find_first_not_of(" \t\r");
      size_t b = cell.find_last_not_of(" \t\r");
      cells.push_back(a == std::string::npos ? "" : cell.substr(a, b - a + 1));
    }
    if (!s.empty() && s.back() == ',') cells.push_back("");
    return cells;
  };
  if (!std::getline(in, line)) throw std::invalid_argument("read_csv: empty file " + path);
  out.header = split(line);
  if (out.header.empty()) throw std::invalid_argument("read_csv: empty header in " + path);
  std::vector<std::vector<double>> rows;
  long line_no = 1;
  while (std::getline(in, line)) {
    ++line_no;
    if (line.find_first_not_of(" \t\r") == std::string::npos) continue;
    auto cells = split(line);
    if (cells.size() != out.header.size())
      throw std::invalid_argument("read_csv: row " + std::to_string(line_no) + " has " +
                                  std::to_string(cells.size()) + " cells, expected " +
                                  std::to_string(out.header.size()));
    std::vector<double> row;
    for (const auto& c : cells) {
      try {
        size_t used = 0;
        row.push_back(std::stod(c, &used));
        if (used != c.size()) throw std::invalid_argument("trailing characters");
      } catch (const std::exception&) {
        throw std::invalid_argument("read_csv: bad number '" + c + "' on line " +
                                    std::to_string(line_no));
      }
    }
    rows.push_back(std::move(row));
  }
  out.values.resize(static_cast<Eigen::Index>(rows.size()),
                    static_cast<Eigen::Index>(out.header.size()));
  for (size_t i = 0; i < rows.size(); ++i)
    for (size_t j = 0; j < rows[i].size(); ++j)
      out.values(static_cast<Eigen::Index>(i), static_cast<Eigen::Index>(j)) = rows[i][j];
  return out;
}

namespace detail {

inline std::ofstream open_out(const std::filesystem::path& path) {
  std::ofstream out(path);
  if (!out) throw std::runtime_error("cannot write " + path.string());
  return out;
}

}  // namespace detail

inline void write_chain_csv(const std::filesystem::path& path, const Mat& iterates,
                            const std::vector<char>& accept_flags,
                            const std::vector<std::string>& branches) {
  auto out = detail::open_out(path);
  out << "iter,accepted,branch";
  for (Eigen::Index j = 0; j < iterates.cols(); ++j) out << ",x" << (j + 1);
  out << "\n";
  for (Eigen::Index i = 0; i < iterates.rows(); ++i) {
    out << (i + 1) << ',' << (accept_flags[static_cast<size_t>(i)] ? 1 : 0) << ','
        << branches[static_cast<size_t>(i)];
    for (Eigen::Index j = 0; j < iterates.cols(); ++j) out << ',' << fmt17(iterates(i, j));
    out << "\n";
  }
}

inline void write_chain_csv(const std::filesystem::path& path, const ChainOutput& chain) {
  std::vector<std::string> branches;
  branches.reserve(chain.branch_tags.size());
  for (Branch b : chain.branch_tags) branches.emplace_back(branch_name(b));
  write_chain_csv(path, chain.iterates, chain.accept_flags, branches);
}

inline void write_particles_csv(const std::filesystem::path& path, const Mat& particles) {
  auto out = detail::open_out(path);
  for (Eigen::Index j = 0; j < particles.cols(); ++j)
    out << (j == 0 ? "" : ",") << 'x' << (j + 1);
  out << "\n";
  for (Eigen::Index i = 0; i < particles.rows(); ++i) {
    for (Eigen::Index j = 0; j < particles.cols(); ++j)
      out << (j == 0 ? "" : ",") << fmt17(particles(i, j));
    out << "\n";
  }
}

// tidy long-format tables for external plotting
inline void write_trace_csv(const std::filesystem::path& path, const Mat& iterates,
                            long max_points = 2000) {
  auto out = detail::open_out(path);
  out << "iter,coord,value\n";
  const long n = iterates.rows();
  const long stride = std::max(1L, n / max_points);
  for (long i = 0; i < n; i += stride)
    for (Eigen::Index j = 0; j < iterates.cols(); ++j)
      out << (i + 1) << ',' << (j + 1) << ',' << fmt17(iterates(i, j)) << "\n";
}

inline void write_acf_csv(const std::filesystem::path& path, const Mat& iterates,
                          long max_lag = 100) {
  auto out = detail::open_out(path);
  out << "lag,coord,acf\n";
  const long n = iterates.rows();
  max_lag = std::min(max_lag, n - 1);
  for (Eigen::Index j = 0; j < iterates.cols(); ++j) {
    double mean = iterates.col(j).mean();
    Eigen::ArrayXd centered = iterates.col(j).array() - mean;
    double c0 = centered.square().sum();
    for (long t = 0; t <= max_lag; ++t) {
      double rho;
      if (c0 <= 0.0)
        rho = t == 0 ? 1.0 : 0.0;
      else
        rho = (centered.head(n - t) * centered.tail(n - t)).sum() / c0;
      out << t << ',' << (j + 1) << ',' << fmt17(rho) << "\n";
    }
  }
}

// ---------------------------------------------------------------------------
// target registry
// ---------------------------------------------------------------------------

struct BuiltTarget {
  Target target;
  std::optional<LogisticTarget> logistic;
  std::optional<CovarianceTarget> covariance;
};

inline BuiltTarget make_target(const std::string& name, Eigen::Index dim,
                               const std::string& data_csv) {
  BuiltTarget out;
  if (name == "msn") {
    out.target = msn_target(dim);
    return out;
  }
  if (name == "banana") {
    out.target = banana_target(dim);
    return out;
  }
  if (name == "logistic") {
    if (data_csv.empty())
      throw std::invalid_argument("logistic target needs --data with a label column 'y'");
    CsvTable csv = read_csv(data_csv);
    Eigen::Index y_col = -1;
    for (size_t j = 0; j < csv.header.size(); ++j)
      if (csv.header[j] == "y") y_col = static_cast<Eigen::Index>(j);
    if (y_col < 0)
      throw std::invalid_argument("logistic target: no column named 'y' in " + data_csv);
    const auto n = csv.values.rows();
    const auto p = csv.values.cols() - 1;
    Mat design(n, p);
    Eigen::VectorXi labels(n);
    for (Eigen::Index i = 0; i < n; ++i) {
      double y = csv.values(i, y_col);
      if (y != 0.0 && y != 1.0)
        throw std::invalid_argument("logistic target: labels must be 0 or 1");
      labels(i) = static_cast<int>(y);
      Eigen::Index k = 0;
      for (Eigen::Index j = 0; j < csv.values.cols(); ++j)
        if (j != y_col) design(i, k++) = csv.values(i, j);
    }
    out.logistic = logistic_target(design, labels);
    out.target = out.logistic->target;
    return out;
  }
  if (name == "covariance") {
    if (data_csv.empty())
      throw std::invalid_argument("covariance target needs --data with numeric columns");
    CsvTable csv = read_csv(data_csv);
    Mat centered = csv.values.rowwise() - csv.values.colwise().mean();
    out.covariance = covariance_target(centered);
    out.target = out.covariance->target;
    return out;
  }
  throw std::invalid_argument("unknown target: " + name);
}

// ---------------------------------------------------------------------------
// config JSON
// ---------------------------------------------------------------------------

inline json proposal_to_json(const ProposalConfig& p) {
  json j{{"beta0", p.beta0}, {"gamma", p.gamma}, {"delta", p.delta},
         {"p_b", p.p_b},     {"kappa", p.kappa}};
  if (p.rho_law.fixed)
    j["rho"] = json{{"fixed", *p.rho_law.fixed}};
  else
    j["rho"] = json{{"beta_a", p.rho_law.a}, {"beta_b", p.rho_law.b}};
  return j;
}

inline json fit_to_json(const FitConfig& f) {
  json j{{"max_components", f.max_components}, {"nu_grid", f.nu_grid},
         {"weight_floor", f.weight_floor},     {"max_iters", f.max_iters},
         {"tol", f.tol}};
  j["fixed_g"] = f.fixed_g ? json(*f.fixed_g) : json(nullptr);
  return j;
}

inline json smc_to_json(const SmcConfig& s) {
  json j{{"n_stages", s.n_stages},
         {"n_particles", s.n_particles},
         {"n_moves", s.n_moves},
         {"arwmh_prepass", s.arwmh_prepass},
         {"prepass_steps", s.prepass_steps}};
  if (s.pi0)
    j["pi0"] = json{{"mu", to_json(s.pi0->mu())}, {"sigma", to_json(s.pi0->sigma())},
                    {"nu", s.pi0->nu()}};
  return j;
}

inline json run_config_to_json(const RunConfig& r) {
  json j{{"n_burnin", r.n_burnin},
         {"n_sample", r.n_sample},
         {"refit_stage1", r.refit_stage1},
         {"refit_stage2", r.refit_stage2},
         {"a_n", r.a_n},
         {"iota_rw", r.iota_rw},
         {"seed", r.seed},
         {"record_trial", r.record_trial},
         {"append_accepted_proposal", r.append_accepted_proposal},
         {"freeze_after_burnin", r.freeze_after_burnin},
         {"adapt", r.adapt},
         {"refit_subsample", r.refit_subsample},
         {"proposal", proposal_to_json(r.proposal)},
         {"fit", fit_to_json(r.fit)},
         {"smc", smc_to_json(r.smc)}};
  j["delta_override"] = r.delta_override ? json(*r.delta_override) : json(nullptr);
  if (r.explicit_start) j["explicit_start"] = to_json(*r.explicit_start);
  if (r.initial_mixture) j["initial_mixture"] = mixture_to_json(*r.initial_mixture);
  return j;
}

inline json experiment_to_json(const ExperimentConfig& cfg) {
  return json{{"target", cfg.target_name},
              {"dim", cfg.dim},
              {"variant", variant_name(cfg.variant)},
              {"replications", cfg.replications},
              {"out", cfg.out_dir},
              {"data", cfg.data_csv},
              {"lpds_test_size", cfg.lpds_test_size},
              {"no_timing", cfg.no_timing},
              {"run", run_config_to_json(cfg.run)}};
}

inline void apply_proposal_overrides(ProposalConfig& p, const json& j) {
  if (j.contains("beta0")) p.beta0 = j.at("beta0").get<double>();
  if (j.contains("gamma")) p.gamma = j.at("gamma").get<double>();
  if (j.contains("delta")) p.delta = j.at("delta").get<double>();
  if (j.contains("p_b")) p.p_b = j.at("p_b").get<double>();
  if (j.contains("kappa")) p.kappa = j.at("kappa").get<double>();
  if (j.contains("rho")) {
    const json& r = j.at("rho");
    if (r.contains("fixed"))
      p.rho_law = RhoLaw::point(r.at("fixed").get<double>());
    else
      p.rho_law = RhoLaw::beta(r.value("beta_a", 1.0), r.value("beta_b", 1.0));
  }
}

inline void apply_run_overrides(RunConfig& r, const json& j) {
  if (j.contains("n_burnin")) r.n_burnin = j.at("n_burnin").get<long>();
  if (j.contains("n_sample")) r.n_sample = j.at("n_sample").get<long>();
  if (j.contains("refit_stage1")) r.refit_stage1 = j.at("refit_stage1").get<long>();
  if (j.contains("refit_stage2")) r.refit_stage2 = j.at("refit_stage2").get<long>();
  if (j.contains("a_n")) r.a_n = j.at("a_n").get<long>();
  if (j.contains("iota_rw")) r.iota_rw = j.at("iota_rw").get<long>();
  if (j.contains("seed")) r.seed = j.at("seed").get<std::uint64_t>();
  if (j.contains("record_trial")) r.record_trial = j.at("record_trial").get<bool>();
  if (j.contains("append_accepted_proposal"))
    r.append_accepted_proposal = j.at("append_accepted_proposal").get<bool>();
  if (j.contains("freeze_after_burnin"))
    r.freeze_after_burnin = j.at("freeze_after_burnin").get<bool>();
  if (j.contains("adapt")) r.adapt = j.at("adapt").get<bool>();
  if (j.contains("refit_subsample")) r.refit_subsample = j.at("refit_subsample").get<long>();
  if (j.contains("delta_override")) {
    if (j.at("delta_override").is_null())
      r.delta_override.reset();
    else
      r.delta_override = j.at("delta_override").get<double>();
  }
  if (j.contains("proposal")) apply_proposal_overrides(r.proposal, j.at("proposal"));
  if (j.contains("fit")) {
    const json& f = j.at("fit");
    if (f.contains("max_components")) r.fit.max_components = f.at("max_components").get<int>();
    if (f.contains("nu_grid")) r.fit.nu_grid = f.at("nu_grid").get<std::vector<double>>();
    if (f.contains("weight_floor")) r.fit.weight_floor = f.at("weight_floor").get<double>();
    if (f.contains("max_iters")) r.fit.max_iters = f.at("max_iters").get<int>();
    if (f.contains("tol")) r.fit.tol = f.at("tol").get<double>();
    if (f.contains("fixed_g") && !f.at("fixed_g").is_null())
      r.fit.fixed_g = f.at("fixed_g").get<int>();
  }
  if (j.contains("smc")) {
    const json& s = j.at("smc");
    if (s.contains("n_stages")) r.smc.n_stages = s.at("n_stages").get<int>();
    if (s.contains("n_particles")) r.smc.n_particles = s.at("n_particles").get<int>();
    if (s.contains("n_moves")) r.smc.n_moves = s.at("n_moves").get<int>();
    if (s.contains("arwmh_prepass")) r.smc.arwmh_prepass = s.at("arwmh_prepass").get<bool>();
    if (s.contains("prepass_steps")) r.smc.prepass_steps = s.at("prepass_steps").get<long>();
    if (s.contains("pi0")) {
      const json& p0 = s.at("pi0");
      r.smc.pi0 = StudentT(vec_from_json(p0.at("mu")), mat_from_json(p0.at("sigma")),
                           p0.at("nu").get<double>());
    }
  }
}

// ---------------------------------------------------------------------------
// per-replication execution
// ---------------------------------------------------------------------------

struct RepSummary {
  std::string variant_label;
  Eigen::Index d = 0;
  double acc_rate = 0.0;
  double iact_avg = 0.0;
  double iact_max = 0.0;
  double sqdist_avg = 0.0;
  double sqdist_min = 0.0;
  double lpds_val = std::numeric_limits<double>::quiet_NaN();
  double cpu_seconds = 0.0;
  double ii = 0.0;
  double aoi = 0.0;
};

inline void write_summary_csv(const std::filesystem::path& path,
                              const std::vector<RepSummary>& rows) {
  auto out = detail::open_out(path);
  out << "variant,d,acc_rate,iact_avg,iact_max,sqdist_avg,sqdist_min,lpds,cpu_seconds,"
         "ii_per_time,acc_over_iact\n";
  for (const auto& r : rows) {
    out << r.variant_label << ',' << r.d << ',' << fmt17(r.acc_rate) << ','
        << fmt17(r.iact_avg) << ',' << fmt17(r.iact_max) << ',' << fmt17(r.sqdist_avg) << ','
        << fmt17(r.sqdist_min) << ',' << fmt17(r.lpds_val) << ',' << fmt17(r.cpu_seconds)
        << ',' << fmt17(r.ii) << ',' << fmt17(r.aoi) << "\n";
  }
}

inline RepSummary average_summary(const std::vector<RepSummary>& rows, std::string label) {
  RepSummary avg;
  avg.variant_label = std::move(label);
  avg.d = rows.front().d;
  avg.lpds_val = 0.0;
  const double n = static_cast<double>(rows.size());
  for (const auto& r : rows) {
    avg.acc_rate += r.acc_rate / n;
    avg.iact_avg += r.iact_avg / n;
    avg.iact_max += r.iact_max / n;
    avg.sqdist_avg += r.sqdist_avg / n;
    avg.sqdist_min += r.sqdist_min / n;
    avg.lpds_val += r.lpds_val / n;
    avg.cpu_seconds += r.cpu_seconds / n;
    avg.ii += r.ii / n;
    avg.aoi += r.aoi / n;
  }
  return avg;
}

namespace detail {

// IACT with a conservative fallback: a coordinate frozen for the whole
// recorded phase counts as fully correlated rather than killing the report
inline double iact_or_length(const Mat& iterates, Eigen::Index j) {
  std::vector<double> xs(iterates.col(j).data(), iterates.col(j).data() + iterates.rows());
  try {
    return iact(xs);
  } catch (const degenerate_series_error&) {
    return static_cast<double>(iterates.rows());
  }
}

}  // namespace detail

inline RepSummary summarize_chain(const std::string& label, const Mat& iterates,
                                  double acc_rate, double cpu_seconds,
                                  const Mat* lpds_test, long* lpds_floored = nullptr) {
  RepSummary s;
  s.variant_label = label;
  s.d = iterates.cols();
  s.acc_rate = acc_rate;
  s.iact_max = 0.0;
  for (Eigen::Index j = 0; j < iterates.cols(); ++j) {
    double t = detail::iact_or_length(iterates, j);
    s.iact_avg += t / static_cast<double>(iterates.cols());
    s.iact_max = std::max(s.iact_max, t);
    std::vector<double> xs(iterates.col(j).data(), iterates.col(j).data() + iterates.rows());
    double q = sq_jump(xs);
    s.sqdist_avg += q / static_cast<double>(iterates.cols());
    s.sqdist_min = j == 0 ? q : std::min(s.sqdist_min, q);
  }
  if (lpds_test) s.lpds_val = lpds(iterates, *lpds_test, lpds_floored);
  s.cpu_seconds = cpu_seconds;
  s.ii = ii_per_time(static_cast<double>(iterates.rows()), s.iact_avg, cpu_seconds);
  s.aoi = acc_over_iact(acc_rate, s.iact_avg);
  return s;
}

inline RunConfig variant_run_config(const ExperimentConfig& cfg, long rep) {
  RunConfig rc = cfg.run;
  rc.seed = cfg.run.seed + static_cast<std::uint64_t>(rep);
  switch (cfg.variant) {
    case Variant::Acmh:
    case Variant::Arwmh: break;
    case Variant::AcmhIndep: rc.delta_override = 1.0; break;
    case Variant::AcmhNoRw: rc.iota_rw = 0; break;
    case Variant::AcmhNoBlock: rc.proposal.gamma = 0.0; break;
  }
  return rc;
}

inline std::optional<Mat> make_lpds_test_set(const Target& target, long size,
                                             std::uint64_t rep_seed) {
  if (!target.exact_sampler) return std::nullopt;
  Rng rng(derive_seed(rep_seed, 7));
  Mat test(size, target.dim);
  for (long i = 0; i < size; ++i) test.row(i) = target.exact_sampler(rng).transpose();
  return test;
}

inline RepSummary run_replication(const ExperimentConfig& cfg, const BuiltTarget& built,
                                  long rep, const std::filesystem::path& dir) {
  std::filesystem::create_directories(dir);
  RunConfig rc = variant_run_config(cfg, rep);
  const std::string label = variant_name(cfg.variant);
  std::optional<Mat> test = make_lpds_test_set(built.target, cfg.lpds_test_size, rc.seed);

  ExperimentConfig resolved = cfg;
  resolved.run = rc;
  {
    auto out = detail::open_out(dir / "config.json");
    out << experiment_to_json(resolved).dump(2) << "\n";
  }

  json report;
  report["variant"] = label;
  report["target"] = cfg.target_name;
  report["replication"] = rep;
  report["seed"] = rc.seed;

  RepSummary summary;
  long floored = 0;
  if (cfg.variant == Variant::Arwmh) {
    Rng rng(derive_seed(rc.seed, 3));
    ArwmhSampler sampler(built.target.log_density, Vec::Zero(built.target.dim));
    for (long i = 0; i < rc.n_burnin; ++i) sampler.step(rng);
    long acc_before = sampler.accepted();
    Mat iterates(rc.n_sample, built.target.dim);
    std::vector<char> flags(static_cast<size_t>(rc.n_sample));
    const auto t0 = std::chrono::steady_clock::now();
    for (long i = 0; i < rc.n_sample; ++i) {
      flags[static_cast<size_t>(i)] = sampler.step(rng) ? 1 : 0;
      iterates.row(i) = sampler.state().transpose();
    }
    double seconds =
        std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
    if (cfg.no_timing) seconds = 0.0;
    double acc = static_cast<double>(sampler.accepted() - acc_before) /
                 static_cast<double>(rc.n_sample);
    write_chain_csv(dir / "chain_main.csv", iterates, flags,
                    std::vector<std::string>(static_cast<size_t>(rc.n_sample), "rw"));
    write_trace_csv(dir / "trace.csv", iterates);
    write_acf_csv(dir / "acf.csv", iterates);
    summary = summarize_chain(label, iterates, acc, seconds,
                              test ? &*test : nullptr, &floored);
    report["accept_rate"] = acc;
  } else {
    RunResult res = run(built.target, rc);
    double seconds = cfg.no_timing ? 0.0 : res.sampling_seconds;
    write_chain_csv(dir / "chain_main.csv", res.main_chain);
    if (rc.record_trial) write_chain_csv(dir / "chain_trial.csv", res.trial_chain);
    if (res.particles) write_particles_csv(dir / "particles.csv", res.particles->particles);
    for (const auto& [iter, mix] : res.main_chain.mixture_snapshots) {
      auto out = detail::open_out(dir / ("mixture_" + std::to_string(iter) + ".json"));
      out << mixture_to_json(mix).dump(2) << "\n";
    }
    write_trace_csv(dir / "trace.csv", res.main_chain.iterates);
    write_acf_csv(dir / "acf.csv", res.main_chain.iterates);
    summary = summarize_chain(label, res.main_chain.iterates, res.main_chain.accept_rate,
                              seconds, test ? &*test : nullptr, &floored);
    report["accept_rate"] = res.main_chain.accept_rate;
    report["trial_accept_rate"] = res.trial_chain.accept_rate;
    report["burnin_accept_rate"] = res.burnin_accept_rate;
    report["rw"] = json{{"proposals_main", res.rw_proposals_main},
                        {"accepts_main", res.rw_accepts_main},
                        {"proposals_trial", res.rw_proposals_trial},
                        {"accepts_trial", res.rw_accepts_trial}};
    report["warnings"] = res.warnings;
    json refits = json::array();
    for (const auto& [iter, mix] : res.main_chain.mixture_snapshots)
      refits.push_back(json{{"iteration", iter}, {"g", mix.size()}});
    report["refits"] = std::move(refits);
    report["history_size"] = res.history.size();
    json branch_counts;
    for (Branch b :
         {Branch::IndependentG0, Branch::IndependentGM, Branch::Cmh, Branch::Block})
      branch_counts[branch_name(b)] = 0;
    for (Branch b : res.main_chain.branch_tags) {
      auto& slot = branch_counts[branch_name(b)];
      slot = slot.get<long>() + 1;
    }
    report["branch_counts"] = std::move(branch_counts);
  }

  report["d"] = summary.d;
  report["n_burnin"] = rc.n_burnin;
  report["n_sample"] = rc.n_sample;
  report["iact_avg"] = summary.iact_avg;
  report["iact_max"] = summary.iact_max;
  report["sqdist_avg"] = summary.sqdist_avg;
  report["sqdist_min"] = summary.sqdist_min;
  if (test) {
    report["lpds"] = summary.lpds_val;
    report["lpds_floored"] = floored;
    report["lpds_test_size"] = cfg.lpds_test_size;
  } else {
    report["lpds"] = nullptr;
  }
  report["cpu_seconds"] = summary.cpu_seconds;
  report["ii_per_time"] = summary.ii;
  report["acc_over_iact"] = summary.aoi;
  auto out = detail::open_out(dir / "report.json");
  out << report.dump(2) << "\n";
  return summary;
}

// Sequential replications with per-replication seeds; failures are logged to
// the replication directory and surface as a nonzero exit status.
inline int run_experiment(const ExperimentConfig& cfg, std::ostream& log = std::cerr) {
  cfg.validate();
  BuiltTarget built = make_target(cfg.target_name, cfg.dim, cfg.data_csv);
  std::filesystem::path root(cfg.out_dir);
  std::error_code ec;
  std::filesystem::create_directories(root, ec);
  if (ec) throw std::runtime_error("cannot create output directory " + root.string());
  {
    ExperimentConfig resolved = cfg;
    resolved.dim = built.target.dim;
    auto out = detail::open_out(root / "config.json");
    out << experiment_to_json(resolved).dump(2) << "\n";
  }

  std::vector<RepSummary> rows;
  bool failed = false;
  for (long rep = 0; rep < cfg.replications; ++rep) {
    std::filesystem::path dir = root / ("rep_" + std::to_string(rep));
    try {
      rows.push_back(run_replication(cfg, built, rep, dir));
      log << variant_name(cfg.variant) << " rep " << rep << ": acc "
          << rows.back().acc_rate << ", iact " << rows.back().iact_avg << "\n";
    } catch (const std::exception& e) {
      failed = true;
      log << variant_name(cfg.variant) << " rep " << rep << " failed: " << e.what() << "\n";
      std::filesystem::create_directories(dir, ec);
      std::ofstream err(dir / "error.txt");
      err << e.what() << "\n";
    }
  }
  if (!rows.empty()) {
    std::vector<RepSummary> all = rows;
    all.push_back(average_summary(rows, std::string(variant_name(cfg.variant)) + "-avg"));
    write_summary_csv(root / "summary.csv", all);
  }
  return failed ? 1 : 0;
}

}  // namespace acmh
