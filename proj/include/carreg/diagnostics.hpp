#pragma once

#include <cstddef>
#include <span>
#include <stdexcept>
#include <vector>

namespace carreg {

class DiagnosticsError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

/// Streaming per-observation moments for WAIC. For each observation it keeps
/// a running log-sum-exp of the log-likelihood (max plus scaled sum, so the
/// mean likelihood never underflows) and Welford mean / M2 of the
/// log-likelihood itself. The n x B pointwise matrix is never stored.
class WaicAccumulator {
 public:
  WaicAccumulator() = default;
  explicit WaicAccumulator(std::size_t num_points);

  std::size_t num_points() const { return max_.size(); }
  std::size_t num_draws() const { return draws_; }

  /// Adds one posterior draw's pointwise log-likelihood vector.
  void add(std::span<const double> pointwise);
  /// Combines with an accumulator built over a disjoint set of draws.
  void merge(const WaicAccumulator& other);

  /// log( mean_b exp(l_ib) ) for observation i.
  double log_mean_likelihood(std::size_t i) const;
  /// Sample variance (denominator B - 1) of l_ib over draws.
  double log_likelihood_variance(std::size_t i) const;

  /// Raw moments, for persisting an accumulator and restoring it exactly.
  const std::vector<double>& running_max() const { return max_; }
  const std::vector<double>& scaled_sums() const { return scaled_sum_; }
  const std::vector<double>& means() const { return mean_; }
  const std::vector<double>& m2() const { return m2_; }
  static WaicAccumulator restore(std::size_t draws, std::vector<double> running_max, std::vector<double> scaled_sums,
                                 std::vector<double> means, std::vector<double> m2);

 private:
  std::size_t draws_ = 0;
  std::vector<double> max_;
  std::vector<double> scaled_sum_;
  std::vector<double> mean_;
  std::vector<double> m2_;
};

struct WaicResult {
  double lppd = 0.0;
  double p_waic = 0.0;
  double waic = 0.0;
};

/// lppd = sum_i log mean_b p(y_i | theta_b), p_WAIC = sum_i var_b log p,
/// WAIC = -2 (lppd - p_WAIC). Needs at least two draws.
WaicResult compute_waic(const WaicAccumulator& acc);

struct DicResult {
  double lp = 0.0;
  double p_dic = 0.0;
  double dic = 0.0;
};

/// lp = posterior mean log-likelihood, p_DIC = 2 (log p(y | theta_hat) - lp),
/// DIC = -2 lp + 2 p_DIC.
DicResult compute_dic(double mean_loglik, double loglik_at_posterior_mean);

/// Effective sample size with Geyer's initial positive sequence truncation
/// (pairs of autocorrelations are summed while positive and kept monotone).
/// A constant trace returns its length. The estimate is capped at the trace
/// length. Requires at least 10 values.
double effective_sample_size(std::span<const double> trace);

/// sd / sqrt(ESS); 0 for a constant trace.
double mcse(std::span<const double> trace);

}  // namespace carreg
