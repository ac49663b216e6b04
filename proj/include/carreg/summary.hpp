#pragma once

#include <span>
#include <string>
#include <string_view>
#include <vector>

#include "carreg/data_model.hpp"
#include "carreg/gibbs.hpp"

namespace carreg {

/// Linear-interpolation quantile of sorted data (the usual "type 7").
double quantile_sorted(std::span<const double> sorted, double p);

struct Interval {
  double mean = 0.0;
  double lower = 0.0;
  double upper = 0.0;
};

/// Posterior mean and 2.5% / 97.5% quantiles of a sample.
Interval credible_interval(std::span<const double> draws, double level = 0.95);

struct CoefficientRow {
  std::string name;
  double mean = 0.0;
  double lower = 0.0;
  double upper = 0.0;
  bool significant = false;  // zero lies outside [lower, upper]
};

/// One row per coefficient of the level; the student table starts with the
/// intercept.
std::vector<CoefficientRow> coefficient_table(const ChainOutput& chain, Level level);

enum class Band { above, contains, below };
std::string_view to_string(Band b);
Band classify_band(double lower, double upper, double reference);

struct RankingRow {
  std::string unit;
  double mean = 0.0;
  double lower = 0.0;
  double upper = 0.0;
  Band band = Band::contains;
};

enum class RankingLevel { department, municipality };

/// Units by posterior mean of their average zeta, descending; ties broken
/// by unit label.
std::vector<RankingRow> unit_ranking(const ChainOutput& chain, const HierarchicalDataset& ds, RankingLevel level,
                                     double reference = 250.0);

struct SpatialEffectRow {
  std::string municipality;
  std::string department;
  double mean = 0.0;
};

std::vector<SpatialEffectRow> spatial_effect_summary(const ChainOutput& chain, const HierarchicalDataset& ds);

}  // namespace carreg
