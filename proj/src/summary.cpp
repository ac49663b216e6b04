#include "carreg/summary.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>
#include <stdexcept>

#include "carreg/segment.hpp"

namespace carreg {

double quantile_sorted(std::span<const double> sorted, double p) {
  if (sorted.empty()) throw std::invalid_argument("quantile of an empty sample");
  if (!(p >= 0.0 && p <= 1.0)) throw std::invalid_argument("quantile probability outside [0, 1]");
  const double h = p * static_cast<double>(sorted.size() - 1);
  const auto lo = static_cast<std::size_t>(std::floor(h));
  const std::size_t hi = std::min(lo + 1, sorted.size() - 1);
  return sorted[lo] + (h - static_cast<double>(lo)) * (sorted[hi] - sorted[lo]);
}

Interval credible_interval(std::span<const double> draws, double level) {
  std::vector<double> s(draws.begin(), draws.end());
  std::sort(s.begin(), s.end());
  const double tail = (1.0 - level) / 2.0;
  Interval iv;
  iv.mean = std::accumulate(s.begin(), s.end(), 0.0) / static_cast<double>(s.size());
  iv.lower = quantile_sorted(s, tail);
  iv.upper = quantile_sorted(s, 1.0 - tail);
  return iv;
}

std::vector<CoefficientRow> coefficient_table(const ChainOutput& chain, Level level) {
  std::vector<CoefficientRow> rows;
  auto add = [&](const std::string& name, const std::vector<double>& draws) {
    const Interval iv = credible_interval(draws);
    rows.push_back({name, iv.mean, iv.lower, iv.upper, !(iv.lower <= 0.0 && 0.0 <= iv.upper)});
  };
  if (level == Level::student) add("intercept", chain.block("intercept").column(0));
  const DrawMatrix& b = chain.block("beta_" + std::string(to_string(level)));
  for (std::size_t c = 0; c < b.cols(); ++c) add(b.columns[c], b.column(c));
  return rows;
}

std::string_view to_string(Band b) {
  switch (b) {
    case Band::above: return "above";
    case Band::contains: return "contains";
    case Band::below: return "below";
  }
  return "?";
}

Band classify_band(double lower, double upper, double reference) {
  if (lower > reference) return Band::above;
  if (upper < reference) return Band::below;
  return Band::contains;
}

std::vector<RankingRow> unit_ranking(const ChainOutput& chain, const HierarchicalDataset& ds, RankingLevel level,
                                     double reference) {
  const SegmentLevel sl = level == RankingLevel::department ? SegmentLevel::department : SegmentLevel::municipality;
  const Eigen::MatrixXd draws = unit_mean_draws(chain, ds, sl);
  const std::vector<std::string> labels = unit_labels(ds, sl);
  std::vector<RankingRow> rows;
  std::vector<double> col(static_cast<std::size_t>(draws.rows()));
  for (Eigen::Index u = 0; u < draws.cols(); ++u) {
    for (Eigen::Index b = 0; b < draws.rows(); ++b) col[static_cast<std::size_t>(b)] = draws(b, u);
    const Interval iv = credible_interval(col);
    rows.push_back({labels[static_cast<std::size_t>(u)], iv.mean, iv.lower, iv.upper, classify_band(iv.lower, iv.upper, reference)});
  }
  std::sort(rows.begin(), rows.end(), [](const RankingRow& a, const RankingRow& b) {
    if (a.mean != b.mean) return a.mean > b.mean;
    return a.unit < b.unit;
  });
  return rows;
}

std::vector<SpatialEffectRow> spatial_effect_summary(const ChainOutput& chain, const HierarchicalDataset& ds) {
  const DrawMatrix& phi = chain.block("phi");
  if (phi.cols() != ds.num_municipalities()) throw std::invalid_argument("spatial_effect_summary: phi does not match the dataset");
  if (phi.rows == 0) throw std::invalid_argument("spatial_effect_summary: no stored draws");
  std::vector<double> sums(phi.cols(), 0.0);
  for (std::size_t r = 0; r < phi.rows; ++r) {
    const auto row = phi.row(r);
    for (std::size_t j = 0; j < sums.size(); ++j) sums[j] += row[j];
  }
  std::vector<SpatialEffectRow> out;
  for (std::size_t j = 0; j < sums.size(); ++j) {
    out.push_back({ds.municipality_ids()[j], ds.department_ids()[static_cast<std::size_t>(ds.department_of(j))],
                   sums[j] / static_cast<double>(phi.rows)});
  }
  return out;
}

}  // namespace carreg
