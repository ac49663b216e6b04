#include "carreg/simulate.hpp"

#include <algorithm>
#include <charconv>
#include <cmath>
#include <cstdio>
#include <map>

#include "carreg/io.hpp"
#include "carreg/summary.hpp"

namespace carreg {

namespace {

const std::vector<std::string> kStudentNames{
    "mother_ed",  "computer",  "internet",  "ethnicity",  "gender",     "books_11_25", "books_26_100",
    "books_more100", "ses1",   "ses2",      "ses3",       "ses4",       "ses5",        "ses6",
    "calendar_A", "calendar_B", "private",  "work_lt10",  "work_11_20", "work_21_30",  "work_gt30"};

const std::vector<double> kPrevalence{0.148,  0.5462, 0.732, 0.0066, 0.5424, 0.3071, 0.1785,
                                      0.0044, 0.2957, 0.364, 0.222,  0.0562, 0.017,  0.0075,
                                      0.996,  0.0013, 0.23,  0.22,   0.0917, 0.0317, 0.0333};

const std::vector<std::string> kMunicipalNames{"teacher_ratio", "victimization", "homicides",   "public_pct",
                                               "terrorism",     "theft",         "kidnappings", "distance_capital"};

const std::vector<std::string> kDepartmentalNames{"gdp_pc", "rural_prop", "at_risk_pct", "weighted_homicides"};

Eigen::VectorXd vec(const std::vector<double>& v) {
  return Eigen::Map<const Eigen::VectorXd>(v.data(), static_cast<Eigen::Index>(v.size()));
}

std::string padded(const char* prefix, std::size_t i, std::size_t total) {
  const int width = static_cast<int>(std::to_string(std::max<std::size_t>(total, 1)).size());
  char buf[64];
  std::snprintf(buf, sizeof buf, "%s%0*zu", prefix, width, i + 1);
  return buf;
}

}  // namespace

ScenarioConfig builtin_scenario(int id) {
  ScenarioConfig c;
  c.id = std::to_string(id);
  c.names = {kStudentNames, kMunicipalNames, kDepartmentalNames};
  c.prevalence = vec(kPrevalence);
  switch (id) {
    case 1:
      c.intercept = 196.16;
      c.beta(Level::student) = vec({18.13, 10.36, 8.93, -14.34, -7.58, 8.48, 20.06, 20.27, 20.36, 18.75, 17.00,
                                    14.45, 11.37, 2.53, 23.81, 19.07, 12.82, -13.42, -12.85, -16.16, -26.14});
      c.beta(Level::municipal) = vec({2.90, 8.70, 0.06, 0.04, 0.34, 0.00, 1.12, 0.05});
      c.beta(Level::departmental) = vec({0.230, 0.060, 0.004, 0.012});
      break;
    case 2:
      c.intercept = 250.00;
      c.beta(Level::student) = vec({0.50, 1.00, 1.00, -0.50, -0.25, 1.00, 2.00, 2.00, 45.00, 45.00, 45.00, 45.00,
                                    45.00, 45.00, 2.00, 1.00, 1.00, -0.43, -0.43, -0.43, -0.43});
      c.beta(Level::municipal) = vec({0.000, 0.001, 0.000, 0.000, 0.000, 0.000, 0.100, 0.001});
      c.beta(Level::departmental) = vec({0.005, 0.000, 0.000, 0.000});
      break;
    case 3:
      c.intercept = 353.00;
      c.beta(Level::student) = vec({12.13, 12.00, 12.00, 0.00, 0.00, -9.48, 10.06, 10.27, 0.00, 0.00, 0.00, 0.00,
                                    0.00, 0.00, 10.80, 19.07, 13.82, -13.42, -13.85, -16.16, -26.14});
      c.beta(Level::municipal) = vec({-5.000, -9.540, -0.250, -0.800, -0.034, -0.000, 0.800, 0.005});
      c.beta(Level::departmental) = vec({0.230, -0.060, -0.040, -0.120});
      break;
    default:
      throw SimulationError("unknown scenario " + std::to_string(id) + " (expected 1, 2 or 3)");
  }
  return c;
}

void apply_scenario_overrides(ScenarioConfig& cfg, const nlohmann::json& j) {
  if (j.is_null()) return;
  if (!j.is_object()) throw SimulationError("scenario overrides: expected a JSON object");
  auto read_vec = [](const nlohmann::json& a, const std::string& key) {
    if (!a.is_array()) throw SimulationError("scenario." + key + ": expected an array of numbers");
    Eigen::VectorXd v(static_cast<Eigen::Index>(a.size()));
    for (std::size_t i = 0; i < a.size(); ++i) {
      if (!a[i].is_number()) throw SimulationError("scenario." + key + ": expected numbers");
      v[static_cast<Eigen::Index>(i)] = a[i].get<double>();
    }
    return v;
  };
  for (auto it = j.begin(); it != j.end(); ++it) {
    const std::string& key = it.key();
    const auto& v = it.value();
    if (key == "intercept") cfg.intercept = v.get<double>();
    else if (key == "student") cfg.beta(Level::student) = read_vec(v, key);
    else if (key == "municipal") cfg.beta(Level::municipal) = read_vec(v, key);
    else if (key == "departmental") cfg.beta(Level::departmental) = read_vec(v, key);
    else if (key == "prevalence") cfg.prevalence = read_vec(v, key);
    else if (key == "kappa2") cfg.kappa2 = v.get<double>();
    else if (key == "tau2_phi") cfg.tau2_phi = v.get<double>();
    else if (key == "seed") cfg.seed = v.get<std::uint64_t>();
    else throw SimulationError("scenario overrides: unknown key '" + key + "'");
  }
  if (cfg.prevalence.size() != cfg.beta(Level::student).size()) {
    throw SimulationError("scenario overrides: student coefficients and prevalence must have the same length");
  }
}

// ---------------------------------------------------------------------------
// Skeletons

Skeleton synthetic_skeleton(std::size_t m, std::size_t d, std::size_t npm) {
  if (d == 0 || m < d) throw SimulationError("synthetic skeleton: need 1 <= d <= m");
  if (npm == 0) throw SimulationError("synthetic skeleton: students per municipality must be positive");
  Skeleton s;
  for (std::size_t k = 0; k < d; ++k) s.department_ids.push_back(padded("dep_", k, d));
  std::size_t next = 0;
  for (std::size_t k = 0; k < d; ++k) {
    const std::size_t mk = m / d + (k < m % d ? 1 : 0);
    const auto width = static_cast<std::size_t>(std::ceil(std::sqrt(static_cast<double>(mk))));
    const std::size_t first = next;
    for (std::size_t local = 0; local < mk; ++local) {
      s.municipality_ids.push_back(padded("mun_", next, m));
      s.municipality_department.push_back(static_cast<int>(k));
      s.students_per_municipality.push_back(npm);
      const std::size_t row = local / width, col = local % width;
      if (col + 1 < width && local + 1 < mk) s.edges.emplace_back(static_cast<int>(first + local), static_cast<int>(first + local + 1));
      if (local + width < mk) s.edges.emplace_back(static_cast<int>(first + local), static_cast<int>(first + local + width));
      (void)row;
      ++next;
    }
  }
  return s;
}

Skeleton load_skeleton(const std::filesystem::path& path, const std::optional<std::filesystem::path>& adjacency) {
  const CsvTable t = read_csv(path);
  const std::size_t c_m = t.require_column("municipality_id");
  const std::size_t c_d = t.require_column("department_id");
  const std::size_t c_n = t.require_column("n_students");
  Skeleton s;
  std::map<std::string, int> dep_index, mun_index;
  for (std::size_t r = 0; r < t.rows.size(); ++r) {
    const std::string& mid = t.rows[r][c_m];
    const std::string& did = t.rows[r][c_d];
    if (!mun_index.emplace(mid, static_cast<int>(s.municipality_ids.size())).second) {
      throw DataError(DataErrorKind::duplicate_key, t.location(r, c_m) + ": duplicate municipality '" + mid + "'");
    }
    auto it = dep_index.find(did);
    if (it == dep_index.end()) {
      it = dep_index.emplace(did, static_cast<int>(s.department_ids.size())).first;
      s.department_ids.push_back(did);
    }
    const double n = t.number(r, c_n);
    if (!(n >= 1.0) || n != std::floor(n)) {
      throw DataError(DataErrorKind::empty_municipality, t.location(r, c_n) + ": n_students must be a positive integer");
    }
    s.municipality_ids.push_back(mid);
    s.municipality_department.push_back(it->second);
    s.students_per_municipality.push_back(static_cast<std::size_t>(n));
  }
  if (adjacency) {
    const CsvTable a = read_csv(*adjacency);
    const std::size_t ca = a.require_column("municipality_id_a");
    const std::size_t cb = a.require_column("municipality_id_b");
    for (std::size_t r = 0; r < a.rows.size(); ++r) {
      const auto ia = mun_index.find(a.rows[r][ca]);
      const auto ib = mun_index.find(a.rows[r][cb]);
      if (ia == mun_index.end()) throw DataError(DataErrorKind::dangling_key, a.location(r, ca) + ": unknown municipality '" + a.rows[r][ca] + "'");
      if (ib == mun_index.end()) throw DataError(DataErrorKind::dangling_key, a.location(r, cb) + ": unknown municipality '" + a.rows[r][cb] + "'");
      s.edges.emplace_back(ia->second, ib->second);
    }
  }
  return s;
}

Skeleton parse_skeleton(std::string_view spec, const std::optional<std::filesystem::path>& adjacency) {
  constexpr std::string_view prefix = "synthetic:";
  if (spec.substr(0, prefix.size()) != prefix) return load_skeleton(std::filesystem::path(std::string(spec)), adjacency);
  std::string_view rest = spec.substr(prefix.size());
  std::size_t vals[3];
  for (int i = 0; i < 3; ++i) {
    const auto comma = rest.find(',');
    const std::string_view part = i < 2 ? rest.substr(0, comma) : rest;
    if ((i < 2 && comma == std::string_view::npos) || part.empty()) {
      throw SimulationError("skeleton '" + std::string(spec) + "': expected synthetic:m,d,npm");
    }
    const auto res = std::from_chars(part.data(), part.data() + part.size(), vals[i]);
    if (res.ec != std::errc() || res.ptr != part.data() + part.size()) {
      throw SimulationError("skeleton '" + std::string(spec) + "': '" + std::string(part) + "' is not a positive integer");
    }
    if (i < 2) rest = rest.substr(comma + 1);
  }
  return synthetic_skeleton(vals[0], vals[1], vals[2]);
}

AdjacencyGraph skeleton_graph(const Skeleton& s) { return AdjacencyGraph::from_edges(s.municipality_department, s.edges); }

// ---------------------------------------------------------------------------

Eigen::VectorXd draw_constrained_car(const AdjacencyGraph& g, double tau2, SeededRng& rng) {
  if (!(tau2 > 0.0)) throw SimulationError("draw_constrained_car: tau2 must be positive");
  Eigen::VectorXd phi = Eigen::VectorXd::Zero(static_cast<Eigen::Index>(g.num_municipalities()));
  for (const auto& comp : g.components()) {
    if (comp.size() < 2) continue;
    const auto n = static_cast<Eigen::Index>(comp.size());
    std::map<int, Eigen::Index> local;
    for (Eigen::Index i = 0; i < n; ++i) local[comp[static_cast<std::size_t>(i)]] = i;
    Eigen::MatrixXd L = Eigen::MatrixXd::Zero(n, n);
    for (Eigen::Index i = 0; i < n; ++i) {
      const int j = comp[static_cast<std::size_t>(i)];
      L(i, i) = static_cast<double>(g.degree(j));
      for (int nb : g.neighbors(j)) L(i, local.at(nb)) = -1.0;
    }
    const Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> es(L);
    const Eigen::VectorXd& ev = es.eigenvalues();
    const double tol = 1e-9 * std::max(1.0, ev.maxCoeff());
    Eigen::VectorXd draw = Eigen::VectorXd::Zero(n);
    for (Eigen::Index e = 0; e < n; ++e) {
      const double z = rng.standard_normal();
      if (ev[e] > tol) draw += std::sqrt(tau2 / ev[e]) * z * es.eigenvectors().col(e);
    }
    draw.array() -= draw.mean();
    for (Eigen::Index i = 0; i < n; ++i) phi[comp[static_cast<std::size_t>(i)]] = draw[i];
  }
  return phi;
}

namespace {

Eigen::MatrixXd standard_normal_columns(std::size_t rows, std::size_t cols, SeededRng& rng, const char* what) {
  Eigen::MatrixXd M(static_cast<Eigen::Index>(rows), static_cast<Eigen::Index>(cols));
  for (Eigen::Index r = 0; r < M.rows(); ++r) {
    for (Eigen::Index c = 0; c < M.cols(); ++c) M(r, c) = rng.standard_normal();
  }
  if (cols > 0 && rows < 2) throw SimulationError(std::string("generate: ") + what + " covariates need at least two units");
  for (Eigen::Index c = 0; c < M.cols(); ++c) {
    const double mean = M.col(c).mean();
    M.col(c).array() -= mean;
    const double sd = std::sqrt(M.col(c).squaredNorm() / static_cast<double>(rows - 1));
    M.col(c) /= sd;
  }
  return M;
}

}  // namespace

SimulatedData generate(const ScenarioConfig& cfg, const Skeleton& skeleton, SeededRng& rng) {
  const std::size_t m = skeleton.municipality_ids.size();
  const std::size_t d = skeleton.department_ids.size();
  if (skeleton.municipality_department.size() != m || skeleton.students_per_municipality.size() != m) {
    throw SimulationError("generate: inconsistent skeleton");
  }
  for (Level l : kLevels) {
    if (static_cast<std::size_t>(cfg.beta(l).size()) != cfg.names[static_cast<int>(l)].size()) {
      throw SimulationError("generate: " + std::string(to_string(l)) + " coefficients and names differ in length");
    }
  }
  const auto pE = cfg.beta(Level::student).size();
  if (cfg.prevalence.size() != pE) throw SimulationError("generate: prevalence length does not match the student coefficients");
  for (Eigen::Index c = 0; c < pE; ++c) {
    if (!(cfg.prevalence[c] >= 0.0 && cfg.prevalence[c] <= 1.0)) throw SimulationError("generate: prevalence outside [0, 1]");
  }
  if (!(cfg.kappa2 > 0.0)) throw SimulationError("generate: kappa2 must be positive");
  if (cfg.kappa2_municipal && static_cast<std::size_t>(cfg.kappa2_municipal->size()) != m) {
    throw SimulationError("generate: kappa2_municipal length does not match the skeleton");
  }

  SimulatedData out;
  out.graph = skeleton_graph(skeleton);

  DatasetParts parts;
  std::size_t n = 0;
  for (std::size_t c : skeleton.students_per_municipality) n += c;
  parts.student_covariates.resize(static_cast<Eigen::Index>(n), pE);
  for (std::size_t j = 0, i = 0; j < m; ++j) {
    for (std::size_t s = 0; s < skeleton.students_per_municipality[j]; ++s, ++i) {
      parts.student_municipality.push_back(static_cast<int>(j));
      parts.student_ids.push_back(padded("stu_", i, n));
      for (Eigen::Index c = 0; c < pE; ++c) {
        parts.student_covariates(static_cast<Eigen::Index>(i), c) = rng.uniform() < cfg.prevalence[c] ? 1.0 : 0.0;
      }
    }
  }
  parts.municipal_covariates = standard_normal_columns(m, static_cast<std::size_t>(cfg.beta(Level::municipal).size()), rng, "municipal");
  parts.departmental_covariates =
      standard_normal_columns(d, static_cast<std::size_t>(cfg.beta(Level::departmental).size()), rng, "departmental");
  parts.municipality_department = skeleton.municipality_department;
  parts.municipality_ids = skeleton.municipality_ids;
  parts.department_ids = skeleton.department_ids;
  parts.covariate_names = cfg.names;

  TruthRecord& t = out.truth;
  t.scenario = cfg.id;
  t.intercept = cfg.intercept;
  t.coefficients = cfg.coefficients;
  t.names = cfg.names;
  t.tau2_phi = cfg.tau2_phi;
  t.seed = cfg.seed;
  t.phi = draw_constrained_car(out.graph, cfg.tau2_phi, rng);
  t.kappa2_municipal = cfg.kappa2_municipal ? *cfg.kappa2_municipal
                                            : Eigen::VectorXd::Constant(static_cast<Eigen::Index>(m), cfg.kappa2);

  const Eigen::VectorXd zm = parts.municipal_covariates * cfg.beta(Level::municipal);
  const Eigen::VectorXd wd = parts.departmental_covariates * cfg.beta(Level::departmental);
  const Eigen::VectorXd xe = parts.student_covariates * cfg.beta(Level::student);
  parts.scores.resize(static_cast<Eigen::Index>(n));
  for (std::size_t i = 0; i < n; ++i) {
    const auto j = static_cast<Eigen::Index>(parts.student_municipality[i]);
    const double zeta = cfg.intercept + xe[static_cast<Eigen::Index>(i)] + zm[j] + wd[parts.municipality_department[static_cast<std::size_t>(j)]] + t.phi[j];
    parts.scores[static_cast<Eigen::Index>(i)] = zeta + std::sqrt(t.kappa2_municipal[j]) * rng.standard_normal();
  }
  out.data = HierarchicalDataset::build(std::move(parts));
  return out;
}

// ---------------------------------------------------------------------------

nlohmann::json to_json(const TruthRecord& t) {
  auto arr = [](const Eigen::VectorXd& v) { return std::vector<double>(v.data(), v.data() + v.size()); };
  nlohmann::json j;
  j["scenario"] = t.scenario;
  j["seed"] = t.seed;
  j["intercept"] = t.intercept;
  for (Level l : kLevels) {
    j[std::string(to_string(l))] = {{"names", t.names[static_cast<int>(l)]}, {"values", arr(t.coefficients[static_cast<int>(l)])}};
  }
  j["phi"] = arr(t.phi);
  j["kappa2_municipal"] = arr(t.kappa2_municipal);
  j["tau2_phi"] = t.tau2_phi;
  j["variance_components_source"] = "simulation defaults, not estimates";
  return j;
}

TruthRecord truth_from_json(const nlohmann::json& j) {
  auto vec_of = [](const nlohmann::json& a) {
    const auto v = a.get<std::vector<double>>();
    return Eigen::VectorXd(Eigen::Map<const Eigen::VectorXd>(v.data(), static_cast<Eigen::Index>(v.size())));
  };
  TruthRecord t;
  t.scenario = j.at("scenario").get<std::string>();
  t.seed = j.at("seed").get<std::uint64_t>();
  t.intercept = j.at("intercept").get<double>();
  for (Level l : kLevels) {
    const auto& b = j.at(std::string(to_string(l)));
    t.names[static_cast<int>(l)] = b.at("names").get<std::vector<std::string>>();
    t.coefficients[static_cast<int>(l)] = vec_of(b.at("values"));
  }
  t.phi = vec_of(j.at("phi"));
  t.kappa2_municipal = vec_of(j.at("kappa2_municipal"));
  t.tau2_phi = j.at("tau2_phi").get<double>();
  return t;
}

double CoverageReport::coverage() const {
  if (rows.empty()) return 0.0;
  const auto hits = std::count_if(rows.begin(), rows.end(), [](const CoverageRow& r) { return r.covered; });
  return static_cast<double>(hits) / static_cast<double>(rows.size());
}

CoverageReport coverage_report(const ChainOutput& chain, const TruthRecord& truth) {
  CoverageReport rep;
  auto add = [&](const std::string& block, const std::string& name, double value, const std::vector<double>& draws) {
    const Interval iv = credible_interval(draws);
    rep.rows.push_back({block, name, value, iv.lower, iv.upper, iv.lower <= value && value <= iv.upper});
  };
  add("intercept", "intercept", truth.intercept, chain.block("intercept").column(0));
  for (Level l : kLevels) {
    const std::string lv(to_string(l));
    const DrawMatrix& b = chain.block("beta_" + lv);
    const Eigen::VectorXd& beta = truth.coefficients[static_cast<int>(l)];
    if (static_cast<std::size_t>(beta.size()) != b.cols()) throw SimulationError("coverage_report: " + lv + " coefficient count differs from the draws");
    for (std::size_t c = 0; c < b.cols(); ++c) add(lv, b.columns[c], beta[static_cast<Eigen::Index>(c)], b.column(c));
  }
  return rep;
}

}  // namespace carreg
