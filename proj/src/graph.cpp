#include "carreg/graph.hpp"

#include <algorithm>
#include <numeric>
#include <set>
#include <stdexcept>
#include <unordered_map>

namespace carreg {

AdjacencyGraph AdjacencyGraph::from_edges(std::vector<int> municipality_department,
                                          const std::vector<std::pair<int, int>>& edges) {
  AdjacencyGraph g;
  const auto m = static_cast<int>(municipality_department.size());
  int d = 0;
  for (int k : municipality_department) {
    if (k < 0) throw DataError(DataErrorKind::dangling_key, "negative department index");
    d = std::max(d, k + 1);
  }
  g.department_ = std::move(municipality_department);
  g.neighbors_.assign(static_cast<std::size_t>(m), {});
  g.members_.assign(static_cast<std::size_t>(d), {});
  g.edges_.assign(static_cast<std::size_t>(d), {});
  for (int j = 0; j < m; ++j) g.members_[static_cast<std::size_t>(g.department_[static_cast<std::size_t>(j)])].push_back(j);

  std::set<std::pair<int, int>> unique;
  for (auto [a, b] : edges) {
    if (a < 0 || b < 0 || a >= m || b >= m) {
      throw DataError(DataErrorKind::dangling_key,
                      "edge (" + std::to_string(a) + ", " + std::to_string(b) + ") references an unknown municipality");
    }
    if (a == b) throw DataError(DataErrorKind::self_loop, "self loop on municipality " + std::to_string(a));
    if (g.department_[static_cast<std::size_t>(a)] != g.department_[static_cast<std::size_t>(b)]) {
      throw DataError(DataErrorKind::cross_department_edge,
                      "edge (" + std::to_string(a) + ", " + std::to_string(b) + ") crosses departments");
    }
    unique.emplace(std::min(a, b), std::max(a, b));
  }
  for (auto [a, b] : unique) {
    g.neighbors_[static_cast<std::size_t>(a)].push_back(b);
    g.neighbors_[static_cast<std::size_t>(b)].push_back(a);
    g.edges_[static_cast<std::size_t>(g.department_[static_cast<std::size_t>(a)])].emplace_back(a, b);
  }
  for (auto& nb : g.neighbors_) std::sort(nb.begin(), nb.end());
  for (int k = 0; k < d; ++k) {
    auto comps = connected_components(g, k);
    for (auto& c : comps) g.components_.push_back(std::move(c));
  }
  return g;
}

std::vector<int> AdjacencyGraph::isolated_municipalities() const {
  std::vector<int> out;
  for (std::size_t j = 0; j < neighbors_.size(); ++j) {
    if (neighbors_[j].empty()) out.push_back(static_cast<int>(j));
  }
  return out;
}

std::size_t AdjacencyGraph::num_edges() const {
  std::size_t total = 0;
  for (const auto& e : edges_) total += e.size();
  return total;
}

AdjacencyGraph load_adjacency(const std::filesystem::path& path, const HierarchicalDataset& ds) {
  const CsvTable t = read_csv(path);
  const std::size_t ca = t.require_column("municipality_id_a");
  const std::size_t cb = t.require_column("municipality_id_b");
  std::unordered_map<std::string, int> index;
  for (std::size_t j = 0; j < ds.num_municipalities(); ++j) index.emplace(ds.municipality_ids()[j], static_cast<int>(j));
  std::vector<std::pair<int, int>> edges;
  edges.reserve(t.rows.size());
  for (std::size_t r = 0; r < t.rows.size(); ++r) {
    int ends[2];
    for (int e = 0; e < 2; ++e) {
      const std::size_t col = e == 0 ? ca : cb;
      auto it = index.find(t.rows[r][col]);
      if (it == index.end()) {
        throw DataError(DataErrorKind::dangling_key,
                        t.location(r, col) + ": unknown municipality id '" + t.rows[r][col] + "'");
      }
      ends[e] = it->second;
    }
    if (ends[0] == ends[1]) {
      throw DataError(DataErrorKind::self_loop, t.location(r, ca) + ": self loop on '" + t.rows[r][ca] + "'");
    }
    if (ds.department_of(static_cast<std::size_t>(ends[0])) != ds.department_of(static_cast<std::size_t>(ends[1]))) {
      throw DataError(DataErrorKind::cross_department_edge, t.location(r, ca) + ": edge ('" + t.rows[r][ca] + "', '" +
                                                                t.rows[r][cb] + "') crosses departments");
    }
    edges.emplace_back(ends[0], ends[1]);
  }
  return AdjacencyGraph::from_edges(ds.municipality_department(), edges);
}

void save_adjacency(const AdjacencyGraph& g, const HierarchicalDataset& ds, const std::filesystem::path& path) {
  std::string out = "municipality_id_a,municipality_id_b\n";
  for (std::size_t k = 0; k < g.num_departments(); ++k) {
    for (auto [a, b] : g.department_edges(static_cast<int>(k))) {
      out += join_csv({ds.municipality_ids()[static_cast<std::size_t>(a)], ds.municipality_ids()[static_cast<std::size_t>(b)]});
      out.push_back('\n');
    }
  }
  write_text_file(path, out);
}

double car_quadratic_form(std::span<const double> phi, const AdjacencyGraph& g, int department) {
  const auto& members = g.department_members(department);
  if (phi.size() != members.size()) {
    throw DataError(DataErrorKind::dimension_mismatch, "car_quadratic_form: phi length " + std::to_string(phi.size()) +
                                                           " != m_k = " + std::to_string(members.size()));
  }
  // members is sorted, so local positions come from a binary search.
  auto local = [&](int j) {
    return static_cast<std::size_t>(std::lower_bound(members.begin(), members.end(), j) - members.begin());
  };
  double total = 0.0;
  for (auto [a, b] : g.department_edges(department)) {
    const double diff = phi[local(a)] - phi[local(b)];
    total += diff * diff;
  }
  return total;
}

double car_quadratic_form_global(std::span<const double> phi, const AdjacencyGraph& g) {
  if (phi.size() != g.num_municipalities()) {
    throw DataError(DataErrorKind::dimension_mismatch, "car_quadratic_form_global: phi length mismatch");
  }
  double total = 0.0;
  for (std::size_t k = 0; k < g.num_departments(); ++k) {
    for (auto [a, b] : g.department_edges(static_cast<int>(k))) {
      const double diff = phi[static_cast<std::size_t>(a)] - phi[static_cast<std::size_t>(b)];
      total += diff * diff;
    }
  }
  return total;
}

std::vector<double> sum_to_zero_center(std::span<const double> x) {
  if (x.empty()) return {};
  const double mean = std::accumulate(x.begin(), x.end(), 0.0) / static_cast<double>(x.size());
  std::vector<double> out(x.begin(), x.end());
  for (double& v : out) v -= mean;
  return out;
}

std::vector<std::vector<int>> connected_components(const AdjacencyGraph& g, int department) {
  const auto& members = g.department_members(department);
  std::unordered_map<int, bool> seen;
  for (int j : members) seen[j] = false;
  std::vector<std::vector<int>> out;
  for (int start : members) {
    if (seen[start]) continue;
    std::vector<int> comp;
    std::vector<int> stack{start};
    seen[start] = true;
    while (!stack.empty()) {
      const int v = stack.back();
      stack.pop_back();
      comp.push_back(v);
      for (int w : g.neighbors(v)) {
        if (!seen[w]) {
          seen[w] = true;
          stack.push_back(w);
        }
      }
    }
    std::sort(comp.begin(), comp.end());
    out.push_back(std::move(comp));
  }
  return out;
}

}  // namespace carreg
