#pragma once

#include <cstddef>
#include <cstdint>
#include <span>
#include <stdexcept>
#include <string>
#include <string_view>
#include <vector>

#include <Eigen/Dense>

#include "carreg/data_model.hpp"
#include "carreg/gibbs.hpp"
#include "carreg/rng.hpp"

namespace carreg {

class SegmentError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

/// What each unit's per-draw scalar is: mean zeta over a department's or a
/// municipality's students, or the municipality's spatial effect phi_j.
enum class SegmentLevel { department, municipality, spatial };

std::string_view to_string(SegmentLevel level);
SegmentLevel parse_segment_level(std::string_view name);

/// Labels of the units at a level (department or municipality ids).
std::vector<std::string> unit_labels(const HierarchicalDataset& ds, SegmentLevel level);

/// B x u matrix of per-draw unit summaries over the stored draws.
Eigen::MatrixXd unit_mean_draws(const ChainOutput& chain, const HierarchicalDataset& ds, SegmentLevel level);

struct Clustering {
  std::vector<int> labels;  // 0..k-1, numbered by increasing cluster centre
  int k = 1;
  double silhouette = 0.0;
  double inertia = 0.0;
  bool degenerate = false;  // single-cluster fallback (too few units / distinct values)
};

/// Lloyd's algorithm in one dimension with k-means++ seeding, keeping the
/// lowest-inertia run of `restarts`.
Clustering kmeans_1d(std::span<const double> values, int k, SeededRng& rng, int restarts = 10);

/// Mean silhouette of a partition of scalar values, O(u log u) via sorted
/// clusters and prefix sums. Members of singleton clusters score 0.
double mean_silhouette(std::span<const double> values, std::span<const int> labels);

/// Runs kmeans_1d for k in [k_min, k_max] (clipped to u - 1 and to the
/// number of distinct values) and keeps the best mean silhouette; ties go to
/// the smaller k. Fewer than 3 units or fewer than 2 distinct values give a
/// degenerate one-cluster result.
Clustering kmeans_silhouette(std::span<const double> values, int k_min, int k_max, SeededRng& rng);

/// Pairwise same-cluster counts over B partitions; P = counts / B.
class CoClusterMatrix {
 public:
  CoClusterMatrix() = default;
  explicit CoClusterMatrix(std::vector<std::string> labels);

  std::size_t size() const { return labels_.size(); }
  std::size_t draws() const { return draws_; }
  const std::vector<std::string>& labels() const { return labels_; }

  void add(std::span<const int> partition);
  void merge(const CoClusterMatrix& other);
  /// Same-cluster count of units i and j (diagonal = number of draws).
  std::uint32_t count(std::size_t i, std::size_t j) const;
  double probability(std::size_t i, std::size_t j) const;
  Eigen::MatrixXd matrix() const;

 private:
  std::vector<std::string> labels_;
  std::size_t draws_ = 0;
  std::vector<std::uint32_t> upper_;  // packed strict upper triangle
  std::size_t index(std::size_t i, std::size_t j) const;
};

CoClusterMatrix accumulate_coclustering(const std::vector<std::vector<int>>& partitions,
                                        std::vector<std::string> labels);

struct PartitionResult {
  std::vector<int> labels;
  int k = 1;
  std::vector<double> bic;  // bic[k - 1], best over both families; lower is better
  bool shared_variance = false;
  bool converged = true;
};

/// Diagonal-covariance Gaussian mixtures (variances shared across components
/// or per component) fitted by EM to the rows of P for
/// k = 1..k_max, chosen by BIC = -2 loglik + params * log(u); returns the
/// MAP assignment. Restarts are seeded, so the result is deterministic.
PartitionResult extract_partition(const Eigen::MatrixXd& P, int k_max, std::uint64_t seed = 1);

class PartitionError : public SegmentError {
 public:
  PartitionError(const std::string& what, PartitionResult best) : SegmentError(what), best_(std::move(best)) {}
  const PartitionResult& best() const { return best_; }

 private:
  PartitionResult best_;
};

double adjusted_rand_index(std::span<const int> a, std::span<const int> b);

struct SegmentationResult {
  CoClusterMatrix cocluster;
  std::vector<int> k_per_draw;
  std::size_t degenerate_draws = 0;
  PartitionResult partition;
  std::size_t stride = 10;
};

/// Clusters every `stride`-th row of `unit_draws` (B x u) with
/// kmeans_silhouette over k = 2..min(10, u - 1), accumulates the
/// co-clustering matrix and extracts a point partition. Draw b uses rng
/// substream (seed, b); per-thread counts are merged in a fixed order.
SegmentationResult segment_units(const Eigen::MatrixXd& unit_draws, std::vector<std::string> labels,
                                 std::size_t stride, std::uint64_t seed, unsigned threads = 1, int k_cap = 10);

}  // namespace carreg
