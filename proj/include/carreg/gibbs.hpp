#pragma once

#include <cstddef>
#include <cstdint>
#include <filesystem>
#include <fstream>
#include <memory>
#include <span>
#include <string>
#include <vector>

#include <Eigen/Dense>

#include "carreg/data_model.hpp"
#include "carreg/diagnostics.hpp"
#include "carreg/graph.hpp"
#include "carreg/model.hpp"
#include "carreg/rng.hpp"

namespace carreg {

struct McmcSettings {
  std::size_t iterations = 127500;
  double burn_in_fraction = 0.10;
  std::size_t thin = 5;
  std::uint64_t seed = 20240601;
  double mh_initial_step = 0.5;
  std::size_t adaptation_window = 50;
  double mh_target_acceptance = 0.44;
  /// WAIC and lp use every post-burn-in sweep; false restricts them to the
  /// thinned draws.
  bool waic_all_iterations = true;
  /// phi and kappa2_municipal are written straight to `stream_dir` when
  /// m * (expected draws) exceeds this many values and a directory is set.
  std::size_t draw_memory_budget = 50'000'000;
  std::filesystem::path stream_dir;
  /// Compare the residual cache against a fresh recomputation every this
  /// many sweeps (0 disables).
  std::size_t coherence_check_interval = 0;

  std::size_t burn_in() const;
  std::size_t retained() const { return iterations - burn_in(); }
  std::size_t stored_draws() const { return retained() / thin; }
  /// Throws ModelError on invalid values or zero stored draws.
  void validate() const;
};

struct NormalConditional {
  double mean = 0.0;
  double variance = 1.0;
};

/// N(Q^{-1} b, Q^{-1}) in canonical form.
struct MvnConditional {
  Eigen::MatrixXd precision;
  Eigen::VectorXd linear;
  Eigen::VectorXd mean() const;
  Eigen::MatrixXd covariance() const;
};

/// Gamma(shape, rate) or, for inverse-gamma blocks, the parameters of the
/// Gamma whose reciprocal is drawn.
struct GammaParams {
  double shape = 1.0;
  double rate = 1.0;
};

struct GigParams {
  double a = 1.0;
  double b = 0.0;
};

/// One chain's Gibbs sampler. Holds the state plus the residual cache
/// r = y - zeta, which each block update keeps current incrementally.
class GibbsSampler {
 public:
  GibbsSampler(const HierarchicalDataset& ds, const AdjacencyGraph& g, ModelConfig cfg, ModelState init);

  const ModelState& state() const { return state_; }
  /// Replaces the state and rebuilds the residual cache.
  void set_state(ModelState s);
  const ModelConfig& config() const { return cfg_; }
  const Eigen::VectorXd& residuals() const { return resid_; }
  /// Largest |cached - recomputed| residual difference.
  double residual_drift() const;
  void refresh_residuals();

  // Full conditionals at the current state.
  NormalConditional intercept_conditional() const;
  MvnConditional coefficient_conditional(Level level) const;
  NormalConditional phi_conditional(int municipality) const;
  GammaParams municipal_variance_conditional(int municipality) const;  // IG
  GammaParams department_scale_conditional(int department) const;      // Gamma
  GammaParams sigma2_intercept_conditional() const;                     // IG
  GammaParams sigma2_conditional(Level level) const;                    // IG, baseline
  GammaParams tau2_phi_conditional() const;                             // IG
  GammaParams beta_kappa_conditional() const;                           // Gamma
  GammaParams lambda2_conditional(Level level) const;                   // Gamma, ridge / lasso
  GigParams local_scale_conditional(Level level, int index) const;      // GIG(1/2), lasso
  /// Unnormalized log density of alpha_kappa given the department scales
  /// and beta_kappa (on the alpha scale, no Jacobian).
  double alpha_kappa_log_target(double alpha) const;

  void update_intercept(SeededRng& rng);
  void update_coefficients(Level level, SeededRng& rng);
  /// Draws one phi_j from its conditional without recentering.
  void update_phi_site(int municipality, SeededRng& rng);
  /// Sequential sweep over all municipalities, then per-component recentering.
  void update_phi(SeededRng& rng);
  void update_municipal_variances(SeededRng& rng);
  void update_department_scales(SeededRng& rng);
  /// sigma2_intercept, the baseline sigma2 blocks and tau2_phi.
  void update_variance_hyperpriors(SeededRng& rng);
  void update_beta_kappa(SeededRng& rng);
  /// Random walk on log alpha with the given step size. Returns acceptance.
  bool update_alpha_kappa(SeededRng& rng, double step);
  /// lambda2 blocks (ridge, lasso) and local tau2 (lasso); no-op for baseline.
  void update_shrinkage(SeededRng& rng);
  /// Full sweep in the fixed order; returns the alpha_kappa acceptance flag.
  bool sweep(SeededRng& rng, double mh_step);

  /// Pointwise log-likelihood from the residual cache.
  void pointwise_log_likelihood(Eigen::VectorXd& out) const;

  /// Largest diagonal jitter any precision factorization needed so far.
  double max_jitter() const { return max_jitter_; }

 private:
  Eigen::VectorXd municipality_residual_sums() const;
  void apply_municipality_shift(const Eigen::VectorXd& delta);

  const HierarchicalDataset* ds_;
  const AdjacencyGraph* g_;
  ModelConfig cfg_;
  ModelState state_;
  Eigen::VectorXd resid_;
  std::vector<Eigen::MatrixXd> gram_by_municipality_;  // sum_i x_i x_i' per municipality
  double max_jitter_ = 0.0;
};

/// Retained draws of one parameter block, one row per stored draw.
struct DrawMatrix {
  std::string name;
  std::vector<std::string> columns;
  std::size_t rows = 0;
  std::vector<double> values;  // row-major; empty when streamed to disk
  bool streamed = false;

  std::size_t cols() const { return columns.size(); }
  std::span<const double> row(std::size_t r) const;
  double at(std::size_t r, std::size_t c) const { return values.at(r * cols() + c); }
  std::vector<double> column(std::size_t c) const;
  void append(std::span<const double> row_values);
};

struct ChainOutput {
  Variant variant = Variant::baseline;
  McmcSettings settings;
  std::vector<DrawMatrix> blocks;
  std::vector<double> loglik_trace;  // every sweep
  std::size_t mh_accepted = 0;       // post burn-in
  std::size_t mh_proposed = 0;
  std::size_t mh_accepted_burn_in = 0;
  double mh_final_step = 0.0;
  WaicAccumulator waic;
  double mean_loglik = 0.0;          // lp
  double loglik_at_posterior_mean = 0.0;
  ModelState posterior_mean;
  double max_jitter = 0.0;
  double seconds = 0.0;

  const DrawMatrix& block(const std::string& name) const;
  const DrawMatrix* find_block(const std::string& name) const;
  double acceptance_rate() const {
    return mh_proposed == 0 ? 0.0 : static_cast<double>(mh_accepted) / static_cast<double>(mh_proposed);
  }
};

/// Names of the stored blocks for a variant, in file order.
std::vector<std::string> block_names(Variant v);

/// Header line and row formatting shared with the draws writer.
std::string format_draw_row(std::span<const double> values);

/// Runs the sampler for settings.iterations sweeps starting from
/// `init` (initial_state(ds, cfg) when absent).
ChainOutput run_chain(const HierarchicalDataset& ds, const AdjacencyGraph& g, const ModelConfig& cfg,
                      const McmcSettings& settings, SeededRng& rng, const ModelState* init = nullptr);

}  // namespace carreg
