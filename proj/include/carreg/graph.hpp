#pragma once

#include <cstddef>
#include <filesystem>
#include <span>
#include <utility>
#include <vector>

#include "carreg/data_model.hpp"

namespace carreg {

/// Undirected municipal adjacency, block diagonal by department (W_k).
class AdjacencyGraph {
 public:
  /// `municipality_department[j]` is the department of municipality j.
  /// Duplicate and reversed pairs collapse to one edge. Self loops and
  /// pairs that cross departments are rejected with DataError.
  static AdjacencyGraph from_edges(std::vector<int> municipality_department,
                                   const std::vector<std::pair<int, int>>& edges);

  std::size_t num_municipalities() const { return neighbors_.size(); }
  std::size_t num_departments() const { return members_.size(); }
  const std::vector<int>& neighbors(int municipality) const { return neighbors_[static_cast<std::size_t>(municipality)]; }
  std::size_t degree(int municipality) const { return neighbors(municipality).size(); }
  int department_of(int municipality) const { return department_[static_cast<std::size_t>(municipality)]; }

  /// Municipalities of department k in increasing index order; this is the
  /// local ordering used by car_quadratic_form.
  const std::vector<int>& department_members(int department) const {
    return members_[static_cast<std::size_t>(department)];
  }
  /// Edges (a < b) inside department k.
  const std::vector<std::pair<int, int>>& department_edges(int department) const {
    return edges_[static_cast<std::size_t>(department)];
  }
  /// Connected components of every department, as municipality indices.
  const std::vector<std::vector<int>>& components() const { return components_; }
  std::vector<int> isolated_municipalities() const;
  std::size_t num_edges() const;

 private:
  std::vector<int> department_;
  std::vector<std::vector<int>> neighbors_;
  std::vector<std::vector<int>> members_;
  std::vector<std::vector<std::pair<int, int>>> edges_;
  std::vector<std::vector<int>> components_;
};

/// Reads `municipality_id_a, municipality_id_b` against the dataset's ids.
AdjacencyGraph load_adjacency(const std::filesystem::path& path, const HierarchicalDataset& ds);
void save_adjacency(const AdjacencyGraph& g, const HierarchicalDataset& ds, const std::filesystem::path& path);

/// phi^T (D_k - W_k) phi for the local vector of department k, evaluated as
/// the sum of squared differences over edges.
double car_quadratic_form(std::span<const double> phi, const AdjacencyGraph& g, int department);

/// Sum over departments of the CAR form, with phi indexed by municipality.
double car_quadratic_form_global(std::span<const double> phi, const AdjacencyGraph& g);

/// x - mean(x).
std::vector<double> sum_to_zero_center(std::span<const double> x);

/// Maximal connected components of department k; isolated nodes are
/// singletons. Components are sorted and listed by smallest member.
std::vector<std::vector<int>> connected_components(const AdjacencyGraph& g, int department);

}  // namespace carreg
