#pragma once

#include <array>
#include <cstdint>
#include <filesystem>
#include <optional>
#include <string>
#include <string_view>
#include <vector>

#include <Eigen/Dense>
#include <json.hpp>

#include "carreg/data_model.hpp"
#include "carreg/gibbs.hpp"
#include "carreg/graph.hpp"
#include "carreg/rng.hpp"

namespace carreg {

class SimulationError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

/// Coefficients and variance components of one synthetic scenario.
struct ScenarioConfig {
  std::string id = "custom";
  double intercept = 250.0;
  std::array<Eigen::VectorXd, 3> coefficients;
  std::array<std::vector<std::string>, 3> names;
  /// Bernoulli prevalence of each student indicator.
  Eigen::VectorXd prevalence;
  /// Residual variance of every municipality (default 2500, i.e. sd 50;
  /// not taken from any fitted model).
  double kappa2 = 2500.0;
  /// Optional per-municipality override of kappa2.
  std::optional<Eigen::VectorXd> kappa2_municipal;
  /// CAR variance for the spatial effect (default 100; not from a fit).
  double tau2_phi = 100.0;
  std::uint64_t seed = 1;

  Eigen::VectorXd& beta(Level l) { return coefficients[static_cast<int>(l)]; }
  const Eigen::VectorXd& beta(Level l) const { return coefficients[static_cast<int>(l)]; }
};

/// Scenarios 1-3: student effects for 21 indicator columns, 8 municipal
/// and 4 departmental effects, with built-in indicator prevalences.
ScenarioConfig builtin_scenario(int id);

/// Applies overrides from JSON (keys: intercept, student, municipal,
/// departmental (arrays), prevalence, kappa2, tau2_phi, seed).
void apply_scenario_overrides(ScenarioConfig& cfg, const nlohmann::json& j);

/// Structure of a synthetic dataset: students per municipality and the
/// department of each municipality, plus the adjacency.
struct Skeleton {
  std::vector<std::string> municipality_ids;
  std::vector<std::string> department_ids;
  std::vector<int> municipality_department;
  std::vector<std::size_t> students_per_municipality;
  std::vector<std::pair<int, int>> edges;
};

/// m municipalities split evenly across d departments (in order), each
/// department a rook grid of width ceil(sqrt(m_k)), npm students each.
Skeleton synthetic_skeleton(std::size_t m, std::size_t d, std::size_t npm);

/// CSV with `municipality_id, department_id, n_students`; optional adjacency
/// CSV with `municipality_id_a, municipality_id_b`.
Skeleton load_skeleton(const std::filesystem::path& path, const std::optional<std::filesystem::path>& adjacency);

/// Parses "synthetic:m,d,npm" or treats the text as a skeleton file path.
Skeleton parse_skeleton(std::string_view spec, const std::optional<std::filesystem::path>& adjacency);

AdjacencyGraph skeleton_graph(const Skeleton& s);

/// Ground truth of a simulated dataset.
struct TruthRecord {
  std::string scenario;
  double intercept = 0.0;
  std::array<Eigen::VectorXd, 3> coefficients;
  std::array<std::vector<std::string>, 3> names;
  Eigen::VectorXd phi;
  Eigen::VectorXd kappa2_municipal;
  double tau2_phi = 0.0;
  std::uint64_t seed = 0;
};

nlohmann::json to_json(const TruthRecord& t);
TruthRecord truth_from_json(const nlohmann::json& j);

struct SimulatedData {
  HierarchicalDataset data;
  AdjacencyGraph graph;
  TruthRecord truth;
};

/// Draws student indicators (independent Bernoulli), standard-normal
/// municipal / departmental covariates standardized exactly to mean 0 and
/// sample sd 1, phi from the sum-to-zero intrinsic CAR, and scores
/// y ~ N(zeta, kappa2_j).
SimulatedData generate(const ScenarioConfig& cfg, const Skeleton& skeleton, SeededRng& rng);

/// phi ~ N(0, tau2 (D - W)^+) on each connected component (zero eigenvalues
/// dropped); isolated municipalities get 0.
Eigen::VectorXd draw_constrained_car(const AdjacencyGraph& g, double tau2, SeededRng& rng);

struct CoverageRow {
  std::string block;  // intercept, student, municipal, departmental
  std::string name;
  double truth = 0.0;
  double lower = 0.0;
  double upper = 0.0;
  bool covered = false;
  double width() const { return upper - lower; }
};

struct CoverageReport {
  std::vector<CoverageRow> rows;
  double coverage() const;
};

/// 95% equal-tailed intervals for the intercept and every coefficient.
CoverageReport coverage_report(const ChainOutput& chain, const TruthRecord& truth);

}  // namespace carreg
