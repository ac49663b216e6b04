#include "carreg/diagnostics.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <numeric>
#include <string>

namespace carreg {

WaicAccumulator::WaicAccumulator(std::size_t num_points)
    : max_(num_points, -std::numeric_limits<double>::infinity()),
      scaled_sum_(num_points, 0.0),
      mean_(num_points, 0.0),
      m2_(num_points, 0.0) {}

void WaicAccumulator::add(std::span<const double> pointwise) {
  if (pointwise.size() != max_.size()) throw DiagnosticsError("WaicAccumulator::add: wrong number of points");
  ++draws_;
  const double count = static_cast<double>(draws_);
  for (std::size_t i = 0; i < pointwise.size(); ++i) {
    const double l = pointwise[i];
    if (!std::isfinite(l)) throw DiagnosticsError("WaicAccumulator::add: non-finite log-likelihood");
    if (l > max_[i]) {
      scaled_sum_[i] = scaled_sum_[i] * std::exp(max_[i] - l) + 1.0;
      max_[i] = l;
    } else {
      scaled_sum_[i] += std::exp(l - max_[i]);
    }
    const double delta = l - mean_[i];
    mean_[i] += delta / count;
    m2_[i] += delta * (l - mean_[i]);
  }
}

void WaicAccumulator::merge(const WaicAccumulator& other) {
  if (other.num_points() != num_points()) throw DiagnosticsError("WaicAccumulator::merge: point count mismatch");
  if (other.draws_ == 0) return;
  if (draws_ == 0) {
    *this = other;
    return;
  }
  const double na = static_cast<double>(draws_);
  const double nb = static_cast<double>(other.draws_);
  const double n = na + nb;
  for (std::size_t i = 0; i < max_.size(); ++i) {
    const double mx = std::max(max_[i], other.max_[i]);
    scaled_sum_[i] = scaled_sum_[i] * std::exp(max_[i] - mx) + other.scaled_sum_[i] * std::exp(other.max_[i] - mx);
    max_[i] = mx;
    const double delta = other.mean_[i] - mean_[i];
    mean_[i] += delta * nb / n;
    m2_[i] += other.m2_[i] + delta * delta * na * nb / n;
  }
  draws_ += other.draws_;
}

WaicAccumulator WaicAccumulator::restore(std::size_t draws, std::vector<double> running_max,
                                         std::vector<double> scaled_sums, std::vector<double> means,
                                         std::vector<double> m2) {
  const std::size_t n = running_max.size();
  if (scaled_sums.size() != n || means.size() != n || m2.size() != n) {
    throw DiagnosticsError("WaicAccumulator::restore: column lengths differ");
  }
  WaicAccumulator acc;
  acc.draws_ = draws;
  acc.max_ = std::move(running_max);
  acc.scaled_sum_ = std::move(scaled_sums);
  acc.mean_ = std::move(means);
  acc.m2_ = std::move(m2);
  return acc;
}

double WaicAccumulator::log_mean_likelihood(std::size_t i) const {
  return max_.at(i) + std::log(scaled_sum_.at(i)) - std::log(static_cast<double>(draws_));
}

double WaicAccumulator::log_likelihood_variance(std::size_t i) const {
  if (draws_ < 2) return 0.0;
  return m2_.at(i) / static_cast<double>(draws_ - 1);
}

WaicResult compute_waic(const WaicAccumulator& acc) {
  if (acc.num_draws() < 2) throw DiagnosticsError("compute_waic: at least two draws are required");
  WaicResult r;
  for (std::size_t i = 0; i < acc.num_points(); ++i) {
    const double lm = acc.log_mean_likelihood(i);
    if (!std::isfinite(lm)) {
      throw DiagnosticsError("compute_waic: mean likelihood of point " + std::to_string(i) +
                             " is zero or non-finite; check the log-sum-exp input");
    }
    r.lppd += lm;
    r.p_waic += acc.log_likelihood_variance(i);
  }
  r.waic = -2.0 * (r.lppd - r.p_waic);
  return r;
}

DicResult compute_dic(double mean_loglik, double loglik_at_posterior_mean) {
  if (!std::isfinite(mean_loglik) || !std::isfinite(loglik_at_posterior_mean)) {
    throw DiagnosticsError("compute_dic: inputs must be finite");
  }
  DicResult r;
  r.lp = mean_loglik;
  r.p_dic = 2.0 * (loglik_at_posterior_mean - mean_loglik);
  r.dic = -2.0 * r.lp + 2.0 * r.p_dic;
  return r;
}

double effective_sample_size(std::span<const double> trace) {
  const std::size_t n = trace.size();
  if (n < 10) throw DiagnosticsError("effective_sample_size: trace needs at least 10 values");
  const double mean = std::accumulate(trace.begin(), trace.end(), 0.0) / static_cast<double>(n);
  std::vector<double> centered(n);
  for (std::size_t i = 0; i < n; ++i) centered[i] = trace[i] - mean;
  auto autocov = [&](std::size_t lag) {
    double s = 0.0;
    for (std::size_t i = 0; i + lag < n; ++i) s += centered[i] * centered[i + lag];
    return s / static_cast<double>(n);
  };
  const double gamma0 = autocov(0);
  const double scale = std::max(1.0, std::abs(mean));
  if (!(gamma0 > 1e-28 * scale * scale)) return static_cast<double>(n);

  double tau = -1.0;
  double previous_pair = std::numeric_limits<double>::infinity();
  for (std::size_t k = 0; 2 * k + 1 < n; ++k) {
    double pair = (autocov(2 * k) + autocov(2 * k + 1)) / gamma0;
    if (pair <= 0.0) break;
    pair = std::min(pair, previous_pair);
    previous_pair = pair;
    tau += 2.0 * pair;
  }
  const double ess = static_cast<double>(n) / std::max(tau, 1e-12);
  return std::min(ess, static_cast<double>(n));
}

double mcse(std::span<const double> trace) {
  const std::size_t n = trace.size();
  const double ess = effective_sample_size(trace);
  const double mean = std::accumulate(trace.begin(), trace.end(), 0.0) / static_cast<double>(n);
  double ss = 0.0;
  for (double x : trace) ss += (x - mean) * (x - mean);
  const double sd = std::sqrt(ss / static_cast<double>(n - 1));
  const double scale = std::max(1.0, std::abs(mean));
  if (!(sd > 1e-14 * scale)) return 0.0;
  return sd / std::sqrt(ess);
}

}  // namespace carreg
