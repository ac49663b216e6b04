#pragma once

#include <array>
#include <optional>
#include <stdexcept>
#include <string>
#include <string_view>

#include <Eigen/Dense>
#include <json.hpp>

#include "carreg/data_model.hpp"
#include "carreg/graph.hpp"

namespace carreg {

/// Prior family on the regression coefficients.
enum class Variant { baseline, ridge, lasso };

std::string_view to_string(Variant v);
Variant parse_variant(std::string_view name);

class ModelError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

/// Prior layer of one coefficient block. `mean` is only used by the
/// baseline variant (normal prior centred at mean with variance sigma^2);
/// `a_lambda`, `b_lambda` only by the lasso variant.
struct LevelPrior {
  double nu = 2.0;
  double gamma2 = 1.0;
  double a_lambda = 1.0;
  double b_lambda = 1.0;
  Eigen::VectorXd mean;
};

struct Hyperparameters {
  double intercept_mean = 0.0;
  double intercept_nu = 2.0;
  double intercept_gamma2 = 1.0;
  std::array<LevelPrior, 3> levels;
  double nu_kappa = 2.0;
  double nu_phi = 2.0;
  double gamma2_phi = 1.0;
  double a_alpha_kappa = 2.0;
  double b_alpha_kappa = 5.0;
  double a_beta_kappa = 2.0;
  double b_beta_kappa = 5.0;

  LevelPrior& level(Level l) { return levels[static_cast<int>(l)]; }
  const LevelPrior& level(Level l) const { return levels[static_cast<int>(l)]; }

  /// Sizes missing prior means with zeros and checks positivity.
  void validate(const HierarchicalDataset& ds);
};

struct ModelConfig {
  Variant variant = Variant::baseline;
  Hyperparameters hyper;
  /// True when the baseline prior means came from an OLS fit; false when the
  /// fit was rank deficient (means fall back to zero) or not attempted.
  bool ols_centered = false;
};

/// Builds the configuration: variant, defaults, baseline prior means from
/// OLS (zero fallback on rank deficiency), then overrides from `json`
/// (keys `variant`, `hyperparameters`).
ModelConfig make_model_config(const HierarchicalDataset& ds, const nlohmann::json& json);
nlohmann::json to_json(const ModelConfig& cfg);

struct CoefficientBlock {
  Eigen::VectorXd beta;
  std::optional<double> sigma2;   // baseline
  std::optional<double> lambda2;  // ridge, lasso
  Eigen::VectorXd tau2;           // lasso only, one per coefficient
};

/// One full parameter set. sigma2_intercept is live for every variant (the
/// intercept keeps its normal / inverse-gamma prior under shrinkage).
struct ModelState {
  Variant variant = Variant::baseline;
  double intercept = 0.0;
  double sigma2_intercept = 1.0;
  std::array<CoefficientBlock, 3> coefficients;
  Eigen::VectorXd phi;               // length m
  Eigen::VectorXd kappa2_municipal;  // kappa^2_{j,k}, length m
  Eigen::VectorXd kappa2_department; // kappa^2_k, length d
  double alpha_kappa = 1.0;
  double beta_kappa = 1.0;
  double tau2_phi = 1.0;

  CoefficientBlock& block(Level l) { return coefficients[static_cast<int>(l)]; }
  const CoefficientBlock& block(Level l) const { return coefficients[static_cast<int>(l)]; }
};

/// Coefficients at the baseline prior means (OLS) or zero under shrinkage,
/// variances 1, phi 0, alpha = beta = 1.
ModelState initial_state(const HierarchicalDataset& ds, const ModelConfig& cfg);

/// Throws ModelError on wrong dimensions, non-finite values, non-positive
/// variances or fields that do not belong to the variant. With a graph, also
/// checks the per-component sum-to-zero constraint on phi.
void validate_state(const ModelState& s, const HierarchicalDataset& ds, const AdjacencyGraph* g = nullptr);

/// zeta_i = beta0 + x_i' beta_E + z_j' beta_M + w_k' beta_D + phi_j.
Eigen::VectorXd linear_predictor(const ModelState& s, const HierarchicalDataset& ds);

Eigen::VectorXd pointwise_log_likelihood(const ModelState& s, const HierarchicalDataset& ds);
double log_likelihood(const ModelState& s, const HierarchicalDataset& ds);

}  // namespace carreg
