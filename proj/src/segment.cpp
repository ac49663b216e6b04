#include "carreg/segment.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <map>
#include <numbers>
#include <numeric>
#include <thread>

namespace carreg {

std::string_view to_string(SegmentLevel level) {
  switch (level) {
    case SegmentLevel::department: return "department";
    case SegmentLevel::municipality: return "municipality";
    case SegmentLevel::spatial: return "spatial";
  }
  return "?";
}

SegmentLevel parse_segment_level(std::string_view name) {
  if (name == "department") return SegmentLevel::department;
  if (name == "municipality") return SegmentLevel::municipality;
  if (name == "spatial" || name == "spatial_effect") return SegmentLevel::spatial;
  throw SegmentError("unknown segmentation level '" + std::string(name) + "' (expected department, municipality or spatial)");
}

std::vector<std::string> unit_labels(const HierarchicalDataset& ds, SegmentLevel level) {
  return level == SegmentLevel::department ? ds.department_ids() : ds.municipality_ids();
}

Eigen::MatrixXd unit_mean_draws(const ChainOutput& chain, const HierarchicalDataset& ds, SegmentLevel level) {
  const DrawMatrix* phi = chain.find_block("phi");
  if (!phi) throw SegmentError("unit_mean_draws: draws do not contain phi");
  const std::size_t m = ds.num_municipalities();
  if (phi->cols() != m) throw SegmentError("unit_mean_draws: phi draws do not match the dataset");
  const std::size_t B = phi->rows;
  if (level == SegmentLevel::spatial) {
    Eigen::MatrixXd out(static_cast<Eigen::Index>(B), static_cast<Eigen::Index>(m));
    for (std::size_t b = 0; b < B; ++b) {
      const auto row = phi->row(b);
      for (std::size_t j = 0; j < m; ++j) out(static_cast<Eigen::Index>(b), static_cast<Eigen::Index>(j)) = row[j];
    }
    return out;
  }

  const auto& names = {"intercept", "beta_student", "beta_municipal", "beta_departmental"};
  for (const char* n : names) {
    if (!chain.find_block(n)) throw SegmentError(std::string("unit_mean_draws: draws do not contain ") + n);
  }
  const DrawMatrix& b0 = chain.block("intercept");
  const DrawMatrix& bE = chain.block("beta_student");
  const DrawMatrix& bM = chain.block("beta_municipal");
  const DrawMatrix& bD = chain.block("beta_departmental");
  if (bE.cols() != ds.num_covariates(Level::student) || bM.cols() != ds.num_covariates(Level::municipal) ||
      bD.cols() != ds.num_covariates(Level::departmental)) {
    throw SegmentError("unit_mean_draws: coefficient draws do not match the dataset");
  }

  // Mean of zeta over a municipality only needs the municipal mean of x.
  const auto& X = ds.covariates(Level::student);
  Eigen::MatrixXd xbar = Eigen::MatrixXd::Zero(static_cast<Eigen::Index>(m), X.cols());
  for (std::size_t j = 0; j < m; ++j) {
    for (int i : ds.students_in_municipality()[j]) xbar.row(static_cast<Eigen::Index>(j)) += X.row(i);
    xbar.row(static_cast<Eigen::Index>(j)) /= static_cast<double>(ds.municipality_sizes()[j]);
  }
  const auto& Z = ds.covariates(Level::municipal);
  const auto& W = ds.covariates(Level::departmental);
  const auto map_row = [](const DrawMatrix& d, std::size_t b) {
    const auto r = d.row(b);
    return Eigen::Map<const Eigen::VectorXd>(r.data(), static_cast<Eigen::Index>(r.size()));
  };

  const std::size_t u = level == SegmentLevel::department ? ds.num_departments() : m;
  Eigen::MatrixXd out(static_cast<Eigen::Index>(B), static_cast<Eigen::Index>(u));
  for (std::size_t b = 0; b < B; ++b) {
    const Eigen::VectorXd mun = Eigen::VectorXd::Constant(static_cast<Eigen::Index>(m), b0.at(b, 0)) + xbar * map_row(bE, b) +
                                Z * map_row(bM, b) + Eigen::Map<const Eigen::VectorXd>(phi->row(b).data(), static_cast<Eigen::Index>(m));
    const Eigen::VectorXd dep = W * map_row(bD, b);
    if (level == SegmentLevel::municipality) {
      for (std::size_t j = 0; j < m; ++j) {
        out(static_cast<Eigen::Index>(b), static_cast<Eigen::Index>(j)) = mun[static_cast<Eigen::Index>(j)] + dep[ds.department_of(j)];
      }
    } else {
      for (std::size_t k = 0; k < u; ++k) {
        double total = 0.0, count = 0.0;
        for (int j : ds.municipalities_in_department()[k]) {
          const double n = static_cast<double>(ds.municipality_sizes()[static_cast<std::size_t>(j)]);
          total += n * mun[j];
          count += n;
        }
        out(static_cast<Eigen::Index>(b), static_cast<Eigen::Index>(k)) = total / count + dep[static_cast<Eigen::Index>(k)];
      }
    }
  }
  return out;
}

// ---------------------------------------------------------------------------
// One-dimensional k-means

namespace {

struct LloydRun {
  std::vector<double> centers;
  std::vector<int> labels;
  double inertia = 0.0;
};

double assign(std::span<const double> x, const std::vector<double>& centers, std::vector<int>& labels) {
  double inertia = 0.0;
  for (std::size_t i = 0; i < x.size(); ++i) {
    int best = 0;
    double best_d = std::numeric_limits<double>::infinity();
    for (std::size_t c = 0; c < centers.size(); ++c) {
      const double d = (x[i] - centers[c]) * (x[i] - centers[c]);
      if (d < best_d) {
        best_d = d;
        best = static_cast<int>(c);
      }
    }
    labels[i] = best;
    inertia += best_d;
  }
  return inertia;
}

LloydRun lloyd(std::span<const double> x, int k, SeededRng& rng) {
  const std::size_t u = x.size();
  LloydRun run;
  // k-means++ seeding.
  run.centers.push_back(x[rng.uniform_index(u)]);
  std::vector<double> d2(u);
  while (static_cast<int>(run.centers.size()) < k) {
    double total = 0.0;
    for (std::size_t i = 0; i < u; ++i) {
      double best = std::numeric_limits<double>::infinity();
      for (double c : run.centers) best = std::min(best, (x[i] - c) * (x[i] - c));
      d2[i] = best;
      total += best;
    }
    if (!(total > 0.0)) break;
    const double target = rng.uniform() * total;
    double acc = 0.0;
    std::size_t pick = u - 1;
    for (std::size_t i = 0; i < u; ++i) {
      acc += d2[i];
      if (acc >= target && d2[i] > 0.0) {
        pick = i;
        break;
      }
    }
    run.centers.push_back(x[pick]);
  }
  run.labels.assign(u, 0);
  double inertia = assign(x, run.centers, run.labels);
  const std::size_t kk = run.centers.size();
  for (int iter = 0; iter < 300; ++iter) {
    std::vector<double> sum(kk, 0.0);
    std::vector<std::size_t> cnt(kk, 0);
    for (std::size_t i = 0; i < u; ++i) {
      sum[static_cast<std::size_t>(run.labels[i])] += x[i];
      ++cnt[static_cast<std::size_t>(run.labels[i])];
    }
    for (std::size_t c = 0; c < kk; ++c) {
      if (cnt[c] > 0) {
        run.centers[c] = sum[c] / static_cast<double>(cnt[c]);
      } else {
        // Empty cluster: move it onto the point worst served by its centre.
        std::size_t far = 0;
        double far_d = -1.0;
        for (std::size_t i = 0; i < u; ++i) {
          const double d = (x[i] - run.centers[static_cast<std::size_t>(run.labels[i])]);
          if (d * d > far_d) {
            far_d = d * d;
            far = i;
          }
        }
        run.centers[c] = x[far];
      }
    }
    const double next = assign(x, run.centers, run.labels);
    if (next > inertia * (1.0 + 1e-12) + 1e-300) throw std::logic_error("kmeans_1d: inertia increased during Lloyd iterations");
    const double change = inertia - next;
    inertia = next;
    if (change <= 1e-8 * std::max(inertia, std::numeric_limits<double>::min())) break;
  }
  // Hartigan refinement: single-point moves that lower the inertia exactly,
  // which escapes most of the Lloyd fixed points that are not optimal.
  std::vector<double> sum(kk, 0.0);
  std::vector<double> cnt(kk, 0.0);
  for (std::size_t i = 0; i < u; ++i) {
    sum[static_cast<std::size_t>(run.labels[i])] += x[i];
    cnt[static_cast<std::size_t>(run.labels[i])] += 1.0;
  }
  for (int pass = 0; pass < 100; ++pass) {
    bool moved = false;
    for (std::size_t i = 0; i < u; ++i) {
      const auto a = static_cast<std::size_t>(run.labels[i]);
      if (cnt[a] <= 1.0) continue;
      const double ma = sum[a] / cnt[a];
      const double loss = cnt[a] / (cnt[a] - 1.0) * (x[i] - ma) * (x[i] - ma);
      std::size_t best = a;
      double best_gain = 1e-12 * std::max(inertia, std::numeric_limits<double>::min());
      for (std::size_t c = 0; c < kk; ++c) {
        if (c == a) continue;
        const double add = cnt[c] > 0.0 ? cnt[c] / (cnt[c] + 1.0) * (x[i] - sum[c] / cnt[c]) * (x[i] - sum[c] / cnt[c]) : 0.0;
        if (loss - add > best_gain) {
          best_gain = loss - add;
          best = c;
        }
      }
      if (best != a) {
        sum[a] -= x[i];
        cnt[a] -= 1.0;
        sum[best] += x[i];
        cnt[best] += 1.0;
        run.labels[i] = static_cast<int>(best);
        inertia -= best_gain;
        moved = true;
      }
    }
    if (!moved) break;
  }
  for (std::size_t c = 0; c < kk; ++c) {
    if (cnt[c] > 0.0) run.centers[c] = sum[c] / cnt[c];
  }
  inertia = 0.0;
  for (std::size_t i = 0; i < u; ++i) {
    const double d = x[i] - run.centers[static_cast<std::size_t>(run.labels[i])];
    inertia += d * d;
  }
  run.inertia = inertia;
  return run;
}

}  // namespace

Clustering kmeans_1d(std::span<const double> values, int k, SeededRng& rng, int restarts) {
  if (values.empty()) throw SegmentError("kmeans_1d: no values");
  if (k < 1 || static_cast<std::size_t>(k) > values.size()) throw SegmentError("kmeans_1d: k out of range");
  LloydRun best;
  best.inertia = std::numeric_limits<double>::infinity();
  for (int r = 0; r < std::max(1, restarts); ++r) {
    LloydRun run = lloyd(values, k, rng);
    if (run.inertia < best.inertia) best = std::move(run);
  }
  // Relabel clusters by increasing centre, dropping labels nobody uses.
  std::vector<int> order(best.centers.size());
  std::iota(order.begin(), order.end(), 0);
  std::sort(order.begin(), order.end(), [&](int a, int b) { return best.centers[a] < best.centers[b]; });
  std::vector<char> used(best.centers.size(), 0);
  for (int l : best.labels) used[static_cast<std::size_t>(l)] = 1;
  std::vector<int> relabel(best.centers.size(), -1);
  int next = 0;
  for (int c : order) {
    if (used[static_cast<std::size_t>(c)]) relabel[static_cast<std::size_t>(c)] = next++;
  }
  Clustering out;
  out.labels.resize(values.size());
  for (std::size_t i = 0; i < values.size(); ++i) out.labels[i] = relabel[static_cast<std::size_t>(best.labels[i])];
  out.k = next;
  out.inertia = best.inertia;
  out.silhouette = next >= 2 ? mean_silhouette(values, out.labels) : 0.0;
  return out;
}

double mean_silhouette(std::span<const double> values, std::span<const int> labels) {
  if (values.size() != labels.size()) throw SegmentError("mean_silhouette: length mismatch");
  if (values.empty()) return 0.0;
  const int k = *std::max_element(labels.begin(), labels.end()) + 1;
  std::vector<std::vector<double>> members(static_cast<std::size_t>(k));
  for (std::size_t i = 0; i < values.size(); ++i) {
    if (labels[i] < 0) throw SegmentError("mean_silhouette: negative label");
    members[static_cast<std::size_t>(labels[i])].push_back(values[i]);
  }
  std::vector<std::vector<double>> prefix(static_cast<std::size_t>(k));
  for (int c = 0; c < k; ++c) {
    auto& v = members[static_cast<std::size_t>(c)];
    std::sort(v.begin(), v.end());
    auto& p = prefix[static_cast<std::size_t>(c)];
    p.assign(v.size() + 1, 0.0);
    for (std::size_t i = 0; i < v.size(); ++i) p[i + 1] = p[i] + v[i];
  }
  // Sum of |x - y| over the members y of cluster c.
  auto distance_sum = [&](double x, int c) {
    const auto& v = members[static_cast<std::size_t>(c)];
    const auto& p = prefix[static_cast<std::size_t>(c)];
    const std::size_t below = static_cast<std::size_t>(std::upper_bound(v.begin(), v.end(), x) - v.begin());
    const double lo = x * static_cast<double>(below) - p[below];
    const double hi = (p[v.size()] - p[below]) - x * static_cast<double>(v.size() - below);
    return lo + hi;
  };
  double total = 0.0;
  for (std::size_t i = 0; i < values.size(); ++i) {
    const int own = labels[i];
    const std::size_t n_own = members[static_cast<std::size_t>(own)].size();
    if (n_own <= 1) continue;
    const double a = distance_sum(values[i], own) / static_cast<double>(n_own - 1);
    double b = std::numeric_limits<double>::infinity();
    for (int c = 0; c < k; ++c) {
      if (c == own || members[static_cast<std::size_t>(c)].empty()) continue;
      b = std::min(b, distance_sum(values[i], c) / static_cast<double>(members[static_cast<std::size_t>(c)].size()));
    }
    if (!std::isfinite(b)) continue;
    const double denom = std::max(a, b);
    if (denom > 0.0) total += (b - a) / denom;
  }
  return total / static_cast<double>(values.size());
}

Clustering kmeans_silhouette(std::span<const double> values, int k_min, int k_max, SeededRng& rng) {
  const std::size_t u = values.size();
  std::vector<double> sorted(values.begin(), values.end());
  std::sort(sorted.begin(), sorted.end());
  const auto distinct = static_cast<int>(std::unique(sorted.begin(), sorted.end()) - sorted.begin());
  Clustering degenerate;
  degenerate.labels.assign(u, 0);
  degenerate.k = 1;
  degenerate.degenerate = true;
  if (u < 3 || distinct < 2) return degenerate;
  const int lo = std::max(2, k_min);
  const int hi = std::min({k_max, static_cast<int>(u) - 1, distinct});
  if (lo > hi) return degenerate;
  Clustering best;
  best.silhouette = -std::numeric_limits<double>::infinity();
  for (int k = lo; k <= hi; ++k) {
    Clustering c = kmeans_1d(values, k, rng);
    if (c.k < 2) continue;
    if (c.silhouette > best.silhouette) best = std::move(c);
  }
  if (best.labels.empty()) return degenerate;
  return best;
}

// ---------------------------------------------------------------------------
// Co-clustering

CoClusterMatrix::CoClusterMatrix(std::vector<std::string> labels) : labels_(std::move(labels)) {
  const std::size_t u = labels_.size();
  upper_.assign(u * (u > 0 ? u - 1 : 0) / 2, 0);
}

std::size_t CoClusterMatrix::index(std::size_t i, std::size_t j) const {
  if (i > j) std::swap(i, j);
  // Row i of the strict upper triangle starts after sum_{r<i} (u - 1 - r) entries.
  const std::size_t u = labels_.size();
  return i * (2 * u - i - 1) / 2 + (j - i - 1);
}

void CoClusterMatrix::add(std::span<const int> partition) {
  const std::size_t u = labels_.size();
  if (partition.size() != u) throw SegmentError("co-clustering: partition covers a different unit set");
  std::map<int, std::vector<std::size_t>> groups;
  for (std::size_t i = 0; i < u; ++i) groups[partition[i]].push_back(i);
  for (const auto& [label, members] : groups) {
    for (std::size_t a = 0; a < members.size(); ++a) {
      for (std::size_t b = a + 1; b < members.size(); ++b) ++upper_[index(members[a], members[b])];
    }
  }
  ++draws_;
}

void CoClusterMatrix::merge(const CoClusterMatrix& other) {
  if (other.labels_ != labels_) throw SegmentError("co-clustering: cannot merge matrices over different units");
  for (std::size_t i = 0; i < upper_.size(); ++i) upper_[i] += other.upper_[i];
  draws_ += other.draws_;
}

std::uint32_t CoClusterMatrix::count(std::size_t i, std::size_t j) const {
  if (i >= size() || j >= size()) throw SegmentError("co-clustering: index out of range");
  if (i == j) return static_cast<std::uint32_t>(draws_);
  return upper_[index(i, j)];
}

double CoClusterMatrix::probability(std::size_t i, std::size_t j) const {
  if (draws_ == 0) throw SegmentError("co-clustering: no partitions accumulated");
  return static_cast<double>(count(i, j)) / static_cast<double>(draws_);
}

Eigen::MatrixXd CoClusterMatrix::matrix() const {
  const std::size_t u = size();
  Eigen::MatrixXd P(static_cast<Eigen::Index>(u), static_cast<Eigen::Index>(u));
  for (std::size_t i = 0; i < u; ++i) {
    P(static_cast<Eigen::Index>(i), static_cast<Eigen::Index>(i)) = 1.0;
    for (std::size_t j = i + 1; j < u; ++j) {
      const double p = probability(i, j);
      P(static_cast<Eigen::Index>(i), static_cast<Eigen::Index>(j)) = p;
      P(static_cast<Eigen::Index>(j), static_cast<Eigen::Index>(i)) = p;
    }
  }
  return P;
}

CoClusterMatrix accumulate_coclustering(const std::vector<std::vector<int>>& partitions, std::vector<std::string> labels) {
  CoClusterMatrix P(std::move(labels));
  for (const auto& p : partitions) P.add(p);
  return P;
}

// ---------------------------------------------------------------------------
// Gaussian mixture extraction

namespace {

constexpr double kVarianceFloor = 1e-8;

struct GmmFit {
  double loglik = -std::numeric_limits<double>::infinity();
  std::vector<int> labels;
  bool converged = false;
  bool valid = false;
};

constexpr double kMinComponentMass = 1.5;

GmmFit fit_gmm(const Eigen::MatrixXd& X, int k, bool shared_variance, SeededRng& rng) {
  const Eigen::Index u = X.rows(), D = X.cols();
  GmmFit fit;
  // k-means++ style choice of initial rows, then one hard assignment.
  std::vector<Eigen::Index> seeds{static_cast<Eigen::Index>(rng.uniform_index(static_cast<std::uint64_t>(u)))};
  Eigen::VectorXd d2(u);
  while (static_cast<int>(seeds.size()) < k) {
    for (Eigen::Index i = 0; i < u; ++i) {
      double best = std::numeric_limits<double>::infinity();
      for (Eigen::Index s : seeds) best = std::min(best, (X.row(i) - X.row(s)).squaredNorm());
      d2[i] = best;
    }
    const double total = d2.sum();
    if (!(total > 0.0)) return fit;  // fewer distinct rows than components
    const double target = rng.uniform() * total;
    double acc = 0.0;
    Eigen::Index pick = u - 1;
    for (Eigen::Index i = 0; i < u; ++i) {
      acc += d2[i];
      if (acc >= target && d2[i] > 0.0) {
        pick = i;
        break;
      }
    }
    seeds.push_back(pick);
  }
  Eigen::MatrixXd resp = Eigen::MatrixXd::Zero(u, k);
  for (Eigen::Index i = 0; i < u; ++i) {
    int best = 0;
    double best_d = std::numeric_limits<double>::infinity();
    for (int c = 0; c < k; ++c) {
      const double d = (X.row(i) - X.row(seeds[static_cast<std::size_t>(c)])).squaredNorm();
      if (d < best_d) {
        best_d = d;
        best = c;
      }
    }
    resp(i, best) = 1.0;
  }

  Eigen::MatrixXd mean(k, D), var(k, D);
  Eigen::VectorXd weight(k);
  Eigen::MatrixXd logp(u, k);
  double prev = -std::numeric_limits<double>::infinity();
  const double log2pi = std::log(2.0 * std::numbers::pi);
  for (int iter = 0; iter < 1000; ++iter) {
    // M step
    for (int c = 0; c < k; ++c) {
      const double nc = resp.col(c).sum();
      if (!(nc > 1e-10)) return fit;  // component emptied
      weight[c] = nc / static_cast<double>(u);
      mean.row(c) = (resp.col(c).transpose() * X) / nc;
      if (shared_variance) continue;
      for (Eigen::Index d = 0; d < D; ++d) {
        const double v = (resp.col(c).array() * (X.col(d).array() - mean(c, d)).square()).sum() / nc;
        var(c, d) = std::max(v, kVarianceFloor);
      }
    }
    if (shared_variance) {
      for (Eigen::Index d = 0; d < D; ++d) {
        double v = 0.0;
        for (int c = 0; c < k; ++c) v += (resp.col(c).array() * (X.col(d).array() - mean(c, d)).square()).sum();
        var.col(d).setConstant(std::max(v / static_cast<double>(u), kVarianceFloor));
      }
    }
    // E step
    for (int c = 0; c < k; ++c) {
      const double log_norm = std::log(weight[c]) - 0.5 * (D * log2pi + var.row(c).array().log().sum());
      for (Eigen::Index i = 0; i < u; ++i) {
        logp(i, c) = log_norm - 0.5 * ((X.row(i) - mean.row(c)).array().square() / var.row(c).array()).sum();
      }
    }
    double ll = 0.0;
    for (Eigen::Index i = 0; i < u; ++i) {
      const double mx = logp.row(i).maxCoeff();
      const double lse = mx + std::log((logp.row(i).array() - mx).exp().sum());
      ll += lse;
      resp.row(i) = (logp.row(i).array() - lse).exp();
    }
    fit.loglik = ll;
    if (std::abs(ll - prev) <= 1e-8 * (1.0 + std::abs(ll))) {
      fit.converged = true;
      break;
    }
    prev = ll;
  }
  fit.valid = std::isfinite(fit.loglik);
  // A component carried by a single row has every variance at the floor, so
  // its likelihood is unbounded in practice; treat it like a singular fit.
  if (k > 1 && u > 1) {
    for (int c = 0; c < k; ++c) {
      if (resp.col(c).sum() < kMinComponentMass) fit.valid = false;
    }
  }
  fit.labels.resize(static_cast<std::size_t>(u));
  for (Eigen::Index i = 0; i < u; ++i) {
    Eigen::Index c;
    logp.row(i).maxCoeff(&c);
    fit.labels[static_cast<std::size_t>(i)] = static_cast<int>(c);
  }
  return fit;
}

std::vector<int> first_appearance_labels(const std::vector<int>& labels) {
  std::map<int, int> remap;
  std::vector<int> out(labels.size());
  for (std::size_t i = 0; i < labels.size(); ++i) {
    auto it = remap.find(labels[i]);
    if (it == remap.end()) it = remap.emplace(labels[i], static_cast<int>(remap.size())).first;
    out[i] = it->second;
  }
  return out;
}

}  // namespace

PartitionResult extract_partition(const Eigen::MatrixXd& P, int k_max, std::uint64_t seed) {
  const Eigen::Index u = P.rows();
  if (u == 0 || P.cols() != u) throw SegmentError("extract_partition: P must be a non-empty square matrix");
  if (k_max < 1) throw SegmentError("extract_partition: k_max must be at least 1");
  k_max = std::min<int>(k_max, static_cast<int>(u));
  constexpr int kRestarts = 5;
  PartitionResult result;
  result.bic.assign(static_cast<std::size_t>(k_max), std::numeric_limits<double>::infinity());
  double best_bic = std::numeric_limits<double>::infinity();
  bool any_converged = false;
  PartitionResult fallback;
  double fallback_ll = -std::numeric_limits<double>::infinity();
  // Two diagonal families: one variance vector shared by all components, or
  // one per component. BIC picks across both families and all k.
  for (int k = 1; k <= k_max; ++k) {
    for (const bool shared : {true, false}) {
      if (shared && k == 1) continue;  // identical to the per-component family
      GmmFit best;
      for (int r = 0; r < kRestarts; ++r) {
        const std::uint64_t stream = static_cast<std::uint64_t>(k) * 1000 + static_cast<std::uint64_t>(r) + (shared ? 500 : 0);
        SeededRng rng = SeededRng::substream(seed, stream);
        GmmFit f = fit_gmm(P, k, shared, rng);
        if (!f.valid) continue;
        if (f.loglik > fallback_ll) {
          fallback_ll = f.loglik;
          fallback.labels = first_appearance_labels(f.labels);
          fallback.k = k;
        }
        if (!f.converged) continue;
        if (f.loglik > best.loglik) best = std::move(f);
      }
      if (!best.valid) continue;
      any_converged = true;
      const double kd = static_cast<double>(k), ud = static_cast<double>(u);
      const double params = (kd - 1.0) + kd * ud + (shared ? ud : kd * ud);
      const double bic = -2.0 * best.loglik + params * std::log(ud);
      double& slot = result.bic[static_cast<std::size_t>(k - 1)];
      slot = std::min(slot, bic);
      if (bic < best_bic) {
        best_bic = bic;
        result.labels = first_appearance_labels(best.labels);
        result.shared_variance = shared;
      }
    }
  }
  if (!any_converged) {
    fallback.converged = false;
    fallback.bic = result.bic;
    throw PartitionError("extract_partition: EM did not converge for any k", std::move(fallback));
  }
  result.k = *std::max_element(result.labels.begin(), result.labels.end()) + 1;
  return result;
}

double adjusted_rand_index(std::span<const int> a, std::span<const int> b) {
  if (a.size() != b.size()) throw SegmentError("adjusted_rand_index: length mismatch");
  const std::size_t n = a.size();
  std::map<std::pair<int, int>, double> table;
  std::map<int, double> ra, rb;
  for (std::size_t i = 0; i < n; ++i) {
    table[{a[i], b[i]}] += 1.0;
    ra[a[i]] += 1.0;
    rb[b[i]] += 1.0;
  }
  auto c2 = [](double x) { return x * (x - 1.0) / 2.0; };
  double index = 0.0, sa = 0.0, sb = 0.0;
  for (const auto& [key, v] : table) index += c2(v);
  for (const auto& [key, v] : ra) sa += c2(v);
  for (const auto& [key, v] : rb) sb += c2(v);
  const double total = c2(static_cast<double>(n));
  const double expected = total > 0.0 ? sa * sb / total : 0.0;
  const double max_index = 0.5 * (sa + sb);
  if (max_index == expected) return index == max_index ? 1.0 : 0.0;
  return (index - expected) / (max_index - expected);
}

// ---------------------------------------------------------------------------

SegmentationResult segment_units(const Eigen::MatrixXd& unit_draws, std::vector<std::string> labels, std::size_t stride,
                                 std::uint64_t seed, unsigned threads, int k_cap) {
  const std::size_t B = static_cast<std::size_t>(unit_draws.rows());
  const std::size_t u = static_cast<std::size_t>(unit_draws.cols());
  if (labels.size() != u) throw SegmentError("segment_units: label count does not match the unit draws");
  if (stride == 0) throw SegmentError("segment_units: stride must be at least 1");
  if (B == 0) throw SegmentError("segment_units: no draws");
  std::vector<std::size_t> picks;
  for (std::size_t b = 0; b < B; b += stride) picks.push_back(b);

  const int k_hi = std::min<int>(k_cap, static_cast<int>(u) - 1);
  std::vector<int> k_per_draw(picks.size(), 1);
  std::vector<char> degenerate(picks.size(), 0);
  const std::size_t workers = std::max<std::size_t>(1, std::min<std::size_t>(threads, picks.size()));
  std::vector<CoClusterMatrix> partial(workers, CoClusterMatrix(labels));
  auto work = [&](std::size_t w) {
    std::vector<double> values(u);
    for (std::size_t p = w; p < picks.size(); p += workers) {
      const std::size_t b = picks[p];
      for (std::size_t i = 0; i < u; ++i) values[i] = unit_draws(static_cast<Eigen::Index>(b), static_cast<Eigen::Index>(i));
      SeededRng rng = SeededRng::substream(seed, b);
      const Clustering c = kmeans_silhouette(values, 2, k_hi, rng);
      k_per_draw[p] = c.k;
      degenerate[p] = c.degenerate ? 1 : 0;
      partial[w].add(c.labels);
    }
  };
  if (workers == 1) {
    work(0);
  } else {
    std::vector<std::thread> pool;
    for (std::size_t w = 0; w < workers; ++w) pool.emplace_back(work, w);
    for (auto& t : pool) t.join();
  }

  SegmentationResult out;
  out.cocluster = CoClusterMatrix(std::move(labels));
  for (const auto& p : partial) out.cocluster.merge(p);
  out.k_per_draw = std::move(k_per_draw);
  out.degenerate_draws = static_cast<std::size_t>(std::count(degenerate.begin(), degenerate.end(), 1));
  out.stride = stride;
  out.partition = extract_partition(out.cocluster.matrix(), std::min<int>(k_cap, static_cast<int>(u)), seed);
  return out;
}

}  // namespace carreg
