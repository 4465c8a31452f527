#pragma once

#include <json.hpp>

#include <string>
#include <vector>

#include "acmh/student_t.hpp"

namespace acmh {

using json = nlohmann::json;

inline json to_json(const Vec& v) {
  json a = json::array();
  for (Eigen::Index i = 0; i < v.size(); ++i) a.push_back(v(i));
  return a;
}

// row-major nested arrays
inline json to_json(const Mat& m) {
  json rows = json::array();
  for (Eigen::Index i = 0; i < m.rows(); ++i) {
    json r = json::array();
    for (Eigen::Index j = 0; j < m.cols(); ++j) r.push_back(m(i, j));
    rows.push_back(std::move(r));
  }
  return rows;
}

inline Vec vec_from_json(const json& a) {
  Vec v(static_cast<Eigen::Index>(a.size()));
  for (size_t i = 0; i < a.size(); ++i) v(static_cast<Eigen::Index>(i)) = a[i].get<double>();
  return v;
}

inline Mat mat_from_json(const json& a) {
  const auto rows = static_cast<Eigen::Index>(a.size());
  if (rows == 0) throw std::invalid_argument("mat_from_json: empty matrix");
  const auto cols = static_cast<Eigen::Index>(a[0].size());
  Mat m(rows, cols);
  for (Eigen::Index i = 0; i < rows; ++i) {
    if (static_cast<Eigen::Index>(a[static_cast<size_t>(i)].size()) != cols)
      throw std::invalid_argument("mat_from_json: ragged rows");
    for (Eigen::Index j = 0; j < cols; ++j)
      m(i, j) = a[static_cast<size_t>(i)][static_cast<size_t>(j)].get<double>();
  }
  return m;
}

inline json mixture_to_json(const TMixture& m) {
  json out;
  out["weights"] = to_json(m.weights());
  json comps = json::array();
  for (Eigen::Index k = 0; k < m.size(); ++k) {
    const auto& c = m.component(k);
    comps.push_back({{"mu", to_json(c.mu())}, {"sigma", to_json(c.sigma())}, {"nu", c.nu()}});
  }
  out["components"] = std::move(comps);
  return out;
}

inline TMixture mixture_from_json(const json& j) {
  if (!j.contains("weights") || !j.contains("components"))
    throw std::invalid_argument("mixture_from_json: missing weights or components");
  Vec w = vec_from_json(j.at("weights"));
  std::vector<StudentT> comps;
  for (const auto& c : j.at("components")) {
    comps.emplace_back(vec_from_json(c.at("mu")), mat_from_json(c.at("sigma")),
                       c.at("nu").get<double>());
  }
  return TMixture(std::move(w), std::move(comps));
}

}  // namespace acmh
