#pragma once

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <filesystem>
#include <string>
#include <utility>
#include <vector>

#include "carreg/data_model.hpp"
#include "carreg/graph.hpp"
#include "carreg/rng.hpp"

namespace carreg::testing {

/// Temporary directory removed on destruction.
struct TempDir {
  std::filesystem::path path;
  explicit TempDir(const std::string& tag) {
    path = std::filesystem::temp_directory_path() /
           ("carreg_" + tag + "_" + std::to_string(reinterpret_cast<std::uintptr_t>(this)));
    std::filesystem::remove_all(path);
    std::filesystem::create_directories(path);
  }
  ~TempDir() {
    std::error_code ec;
    std::filesystem::remove_all(path, ec);
  }
  TempDir(const TempDir&) = delete;
  TempDir& operator=(const TempDir&) = delete;
};

struct ToySpec {
  std::vector<std::size_t> students;    // per municipality
  std::vector<int> department;          // per municipality
  std::size_t p_student = 2;
  std::size_t p_municipal = 1;
  std::size_t p_departmental = 1;
  std::uint64_t seed = 11;
};

/// Random dataset: 0/1 student indicators, normal area covariates, scores
/// around 250.
inline HierarchicalDataset make_toy(const ToySpec& spec) {
  SeededRng rng(spec.seed);
  DatasetParts p;
  const std::size_t m = spec.students.size();
  int d = 0;
  for (int k : spec.department) d = std::max(d, k + 1);
  std::size_t n = 0;
  for (std::size_t s : spec.students) n += s;
  p.scores.resize(static_cast<Eigen::Index>(n));
  p.student_covariates.resize(static_cast<Eigen::Index>(n), static_cast<Eigen::Index>(spec.p_student));
  std::size_t i = 0;
  for (std::size_t j = 0; j < m; ++j) {
    for (std::size_t s = 0; s < spec.students[j]; ++s, ++i) {
      p.student_municipality.push_back(static_cast<int>(j));
      p.student_ids.push_back("s" + std::to_string(i));
      for (std::size_t c = 0; c < spec.p_student; ++c) {
        p.student_covariates(static_cast<Eigen::Index>(i), static_cast<Eigen::Index>(c)) = rng.uniform() < 0.4 ? 1.0 : 0.0;
      }
      p.scores[static_cast<Eigen::Index>(i)] = 250.0 + 30.0 * rng.standard_normal();
    }
  }
  p.municipal_covariates.resize(static_cast<Eigen::Index>(m), static_cast<Eigen::Index>(spec.p_municipal));
  for (Eigen::Index r = 0; r < p.municipal_covariates.rows(); ++r)
    for (Eigen::Index c = 0; c < p.municipal_covariates.cols(); ++c) p.municipal_covariates(r, c) = rng.standard_normal();
  p.departmental_covariates.resize(d, static_cast<Eigen::Index>(spec.p_departmental));
  for (Eigen::Index r = 0; r < p.departmental_covariates.rows(); ++r)
    for (Eigen::Index c = 0; c < p.departmental_covariates.cols(); ++c) p.departmental_covariates(r, c) = rng.standard_normal();
  p.municipality_department = spec.department;
  for (std::size_t j = 0; j < m; ++j) p.municipality_ids.push_back("m" + std::to_string(j));
  for (int k = 0; k < d; ++k) p.department_ids.push_back("d" + std::to_string(k));
  for (std::size_t c = 0; c < spec.p_student; ++c) p.covariate_names[0].push_back("x" + std::to_string(c));
  for (std::size_t c = 0; c < spec.p_municipal; ++c) p.covariate_names[1].push_back("z" + std::to_string(c));
  for (std::size_t c = 0; c < spec.p_departmental; ++c) p.covariate_names[2].push_back("w" + std::to_string(c));
  return HierarchicalDataset::build(std::move(p));
}

/// Path graph inside every department (municipalities in index order).
inline AdjacencyGraph path_graph(const HierarchicalDataset& ds) {
  std::vector<std::pair<int, int>> edges;
  for (const auto& members : ds.municipalities_in_department()) {
    for (std::size_t a = 1; a < members.size(); ++a) edges.emplace_back(members[a - 1], members[a]);
  }
  return AdjacencyGraph::from_edges(ds.municipality_department(), edges);
}

/// The fixed 40-student, 4-municipality, 2-department toy.
inline ToySpec toy40() {
  ToySpec s;
  s.students = {12, 8, 9, 11};
  s.department = {0, 0, 1, 1};
  s.p_student = 3;
  s.p_municipal = 2;
  s.p_departmental = 1;
  s.seed = 40;
  return s;
}

/// Two-sample Kolmogorov-Smirnov statistic.
inline double ks_two_sample(std::vector<double> a, std::vector<double> b) {
  std::sort(a.begin(), a.end());
  std::sort(b.begin(), b.end());
  std::size_t i = 0, j = 0;
  double d = 0.0;
  while (i < a.size() && j < b.size()) {
    const double x = std::min(a[i], b[j]);
    while (i < a.size() && a[i] <= x) ++i;
    while (j < b.size() && b[j] <= x) ++j;
    d = std::max(d, std::abs(static_cast<double>(i) / a.size() - static_cast<double>(j) / b.size()));
  }
  return d;
}

/// One-sample KS statistic against a CDF.
template <class Cdf>
double ks_one_sample(std::vector<double> x, Cdf cdf) {
  std::sort(x.begin(), x.end());
  const double n = static_cast<double>(x.size());
  double d = 0.0;
  for (std::size_t i = 0; i < x.size(); ++i) {
    const double f = cdf(x[i]);
    d = std::max({d, std::abs(f - static_cast<double>(i) / n), std::abs(static_cast<double>(i + 1) / n - f)});
  }
  return d;
}

inline double mean_of(const std::vector<double>& v) {
  double s = 0.0;
  for (double x : v) s += x;
  return s / static_cast<double>(v.size());
}

inline double var_of(const std::vector<double>& v) {
  const double m = mean_of(v);
  double s = 0.0;
  for (double x : v) s += (x - m) * (x - m);
  return s / static_cast<double>(v.size() - 1);
}

}  // namespace carreg::testing
