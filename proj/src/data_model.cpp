#include "carreg/data_model.hpp"

#include <cmath>
#include <sstream>
#include <unordered_map>
#include <unordered_set>

namespace carreg {

std::string_view to_string(Level level) {
  switch (level) {
    case Level::student: return "student";
    case Level::municipal: return "municipal";
    case Level::departmental: return "departmental";
  }
  return "unknown";
}

Level parse_level(std::string_view name) {
  if (name == "student") return Level::student;
  if (name == "municipal") return Level::municipal;
  if (name == "departmental") return Level::departmental;
  throw std::invalid_argument("unknown level '" + std::string(name) + "'");
}

namespace {

void check_unique(const std::vector<std::string>& ids, std::string_view what) {
  std::unordered_set<std::string> seen;
  for (const auto& id : ids) {
    if (!seen.insert(id).second) {
      throw DataError(DataErrorKind::duplicate_key, "duplicate " + std::string(what) + " id '" + id + "'");
    }
  }
}

void check_finite(const Eigen::MatrixXd& m, std::string_view what) {
  for (Eigen::Index r = 0; r < m.rows(); ++r) {
    for (Eigen::Index c = 0; c < m.cols(); ++c) {
      if (!std::isfinite(m(r, c))) {
        std::ostringstream os;
        os << what << " covariates: non-finite value at row " << r << ", column " << c;
        throw DataError(DataErrorKind::non_finite, os.str());
      }
    }
  }
}

std::vector<std::string> default_ids(std::size_t n, std::string_view prefix) {
  std::vector<std::string> ids(n);
  for (std::size_t i = 0; i < n; ++i) ids[i] = std::string(prefix) + std::to_string(i);
  return ids;
}

}  // namespace

HierarchicalDataset HierarchicalDataset::build(DatasetParts parts) {
  const std::size_t n = parts.student_municipality.size();
  const std::size_t m = parts.municipality_department.size();

  if (parts.department_ids.empty() && m > 0) {
    int max_dep = -1;
    for (int k : parts.municipality_department) max_dep = std::max(max_dep, k);
    parts.department_ids = default_ids(static_cast<std::size_t>(max_dep + 1), "d");
  }
  if (parts.municipality_ids.empty()) parts.municipality_ids = default_ids(m, "m");
  if (parts.student_ids.empty()) parts.student_ids = default_ids(n, "s");
  const std::size_t d = parts.department_ids.size();

  auto dim_error = [](const std::string& msg) { throw DataError(DataErrorKind::dimension_mismatch, msg); };
  if (static_cast<std::size_t>(parts.scores.size()) != n) dim_error("scores length differs from student count");
  if (parts.student_ids.size() != n) dim_error("student id count differs from student count");
  if (parts.municipality_ids.size() != m) dim_error("municipality id count differs from municipality count");
  if (static_cast<std::size_t>(parts.student_covariates.rows()) != n) dim_error("student covariate rows != n");
  if (static_cast<std::size_t>(parts.municipal_covariates.rows()) != m) dim_error("municipal covariate rows != m");
  if (static_cast<std::size_t>(parts.departmental_covariates.rows()) != d) dim_error("departmental covariate rows != d");
  const std::array<Eigen::Index, 3> widths{parts.student_covariates.cols(), parts.municipal_covariates.cols(),
                                           parts.departmental_covariates.cols()};
  for (int l = 0; l < 3; ++l) {
    auto& names = parts.covariate_names[l];
    if (names.empty() && widths[l] > 0) {
      names = default_ids(static_cast<std::size_t>(widths[l]), std::string(to_string(kLevels[l])) + "_");
    }
    if (static_cast<Eigen::Index>(names.size()) != widths[l]) {
      dim_error(std::string(to_string(kLevels[l])) + " covariate names do not match column count");
    }
  }
  if (n == 0 || m == 0 || d == 0) dim_error("dataset needs at least one student, municipality and department");

  check_unique(parts.student_ids, "student");
  check_unique(parts.municipality_ids, "municipality");
  check_unique(parts.department_ids, "department");
  for (std::size_t i = 0; i < n; ++i) {
    if (!std::isfinite(parts.scores[static_cast<Eigen::Index>(i)])) {
      throw DataError(DataErrorKind::non_finite, "non-finite score for student '" + parts.student_ids[i] + "'");
    }
  }
  check_finite(parts.student_covariates, "student");
  check_finite(parts.municipal_covariates, "municipal");
  check_finite(parts.departmental_covariates, "departmental");

  HierarchicalDataset ds;
  ds.municipality_sizes_.assign(m, 0);
  ds.department_sizes_.assign(d, 0);
  ds.students_by_municipality_.assign(m, {});
  ds.municipalities_by_department_.assign(d, {});
  for (std::size_t i = 0; i < n; ++i) {
    const int j = parts.student_municipality[i];
    if (j < 0 || static_cast<std::size_t>(j) >= m) {
      throw DataError(DataErrorKind::dangling_key,
                      "student '" + parts.student_ids[i] + "' references municipality index " + std::to_string(j));
    }
    ++ds.municipality_sizes_[static_cast<std::size_t>(j)];
    ds.students_by_municipality_[static_cast<std::size_t>(j)].push_back(static_cast<int>(i));
  }
  for (std::size_t j = 0; j < m; ++j) {
    const int k = parts.municipality_department[j];
    if (k < 0 || static_cast<std::size_t>(k) >= d) {
      throw DataError(DataErrorKind::dangling_key, "municipality '" + parts.municipality_ids[j] +
                                                       "' references department index " + std::to_string(k));
    }
    ++ds.department_sizes_[static_cast<std::size_t>(k)];
    ds.municipalities_by_department_[static_cast<std::size_t>(k)].push_back(static_cast<int>(j));
    if (ds.municipality_sizes_[j] == 0) {
      throw DataError(DataErrorKind::empty_municipality,
                      "municipality '" + parts.municipality_ids[j] + "' has no students");
    }
  }
  for (std::size_t k = 0; k < d; ++k) {
    if (ds.department_sizes_[k] == 0) {
      throw DataError(DataErrorKind::empty_department, "department '" + parts.department_ids[k] + "' has no municipalities");
    }
  }
  ds.parts_ = std::move(parts);
  return ds;
}

const Eigen::MatrixXd& HierarchicalDataset::covariates(Level level) const {
  switch (level) {
    case Level::student: return parts_.student_covariates;
    case Level::municipal: return parts_.municipal_covariates;
    case Level::departmental: return parts_.departmental_covariates;
  }
  return parts_.student_covariates;
}

std::optional<int> HierarchicalDataset::find_municipality(std::string_view id) const {
  for (std::size_t j = 0; j < parts_.municipality_ids.size(); ++j) {
    if (parts_.municipality_ids[j] == id) return static_cast<int>(j);
  }
  return std::nullopt;
}

HierarchicalDataset HierarchicalDataset::with_covariates(Level level, Eigen::MatrixXd values) const {
  const auto& current = covariates(level);
  if (values.rows() != current.rows() || values.cols() != current.cols()) {
    throw DataError(DataErrorKind::dimension_mismatch, "replacement covariate block has the wrong shape");
  }
  DatasetParts parts = parts_;
  switch (level) {
    case Level::student: parts.student_covariates = std::move(values); break;
    case Level::municipal: parts.municipal_covariates = std::move(values); break;
    case Level::departmental: parts.departmental_covariates = std::move(values); break;
  }
  return build(std::move(parts));
}

bool HierarchicalDataset::operator==(const HierarchicalDataset& o) const {
  const auto& a = parts_;
  const auto& b = o.parts_;
  return a.scores == b.scores && a.student_covariates == b.student_covariates &&
         a.municipal_covariates == b.municipal_covariates &&
         a.departmental_covariates == b.departmental_covariates &&
         a.student_municipality == b.student_municipality &&
         a.municipality_department == b.municipality_department && a.student_ids == b.student_ids &&
         a.municipality_ids == b.municipality_ids && a.department_ids == b.department_ids &&
         a.covariate_names == b.covariate_names;
}

namespace {

std::unordered_map<std::string, int> index_ids(const CsvTable& t, std::size_t id_col, std::vector<std::string>& ids,
                                              std::string_view what) {
  std::unordered_map<std::string, int> index;
  for (std::size_t r = 0; r < t.rows.size(); ++r) {
    const std::string& id = t.rows[r][id_col];
    if (id.empty()) {
      throw DataError(DataErrorKind::unparseable_cell, t.location(r, id_col) + ": empty " + std::string(what) + " id");
    }
    if (!index.emplace(id, static_cast<int>(ids.size())).second) {
      throw DataError(DataErrorKind::duplicate_key,
                      t.location(r, id_col) + ": duplicate " + std::string(what) + " id '" + id + "'");
    }
    ids.push_back(id);
  }
  return index;
}

// Every column that is not one of `key_columns` is a covariate.
Eigen::MatrixXd read_covariates(const CsvTable& t, const std::vector<std::size_t>& key_columns,
                                std::vector<std::string>& names) {
  std::vector<std::size_t> cols;
  for (std::size_t c = 0; c < t.header.size(); ++c) {
    bool key = false;
    for (auto k : key_columns) key = key || (k == c);
    if (!key) {
      cols.push_back(c);
      names.push_back(t.header[c]);
    }
  }
  Eigen::MatrixXd out(static_cast<Eigen::Index>(t.rows.size()), static_cast<Eigen::Index>(cols.size()));
  for (std::size_t r = 0; r < t.rows.size(); ++r) {
    for (std::size_t c = 0; c < cols.size(); ++c) {
      out(static_cast<Eigen::Index>(r), static_cast<Eigen::Index>(c)) = t.number(r, cols[c]);
    }
  }
  return out;
}

}  // namespace

HierarchicalDataset load_dataset(const std::filesystem::path& students_path,
                                 const std::filesystem::path& municipalities_path,
                                 const std::filesystem::path& departments_path) {
  const CsvTable dep = read_csv(departments_path);
  const CsvTable mun = read_csv(municipalities_path);
  const CsvTable stu = read_csv(students_path);

  DatasetParts parts;
  const std::size_t dep_id = dep.require_column("department_id");
  auto dep_index = index_ids(dep, dep_id, parts.department_ids, "department");
  parts.departmental_covariates = read_covariates(dep, {dep_id}, parts.covariate_names[2]);

  const std::size_t mun_id = mun.require_column("municipality_id");
  const std::size_t mun_dep = mun.require_column("department_id");
  auto mun_index = index_ids(mun, mun_id, parts.municipality_ids, "municipality");
  parts.municipal_covariates = read_covariates(mun, {mun_id, mun_dep}, parts.covariate_names[1]);
  parts.municipality_department.resize(mun.rows.size());
  for (std::size_t r = 0; r < mun.rows.size(); ++r) {
    auto it = dep_index.find(mun.rows[r][mun_dep]);
    if (it == dep_index.end()) {
      throw DataError(DataErrorKind::dangling_key, mun.location(r, mun_dep) + ": unknown department id '" +
                                                       mun.rows[r][mun_dep] + "'");
    }
    parts.municipality_department[r] = it->second;
  }

  const std::size_t stu_id = stu.require_column("student_id");
  const std::size_t stu_mun = stu.require_column("municipality_id");
  const std::size_t stu_score = stu.require_column("score");
  index_ids(stu, stu_id, parts.student_ids, "student");
  parts.student_covariates = read_covariates(stu, {stu_id, stu_mun, stu_score}, parts.covariate_names[0]);
  parts.scores.resize(static_cast<Eigen::Index>(stu.rows.size()));
  parts.student_municipality.resize(stu.rows.size());
  for (std::size_t r = 0; r < stu.rows.size(); ++r) {
    auto it = mun_index.find(stu.rows[r][stu_mun]);
    if (it == mun_index.end()) {
      throw DataError(DataErrorKind::dangling_key, stu.location(r, stu_mun) + ": unknown municipality id '" +
                                                       stu.rows[r][stu_mun] + "'");
    }
    parts.student_municipality[r] = it->second;
    parts.scores[static_cast<Eigen::Index>(r)] = stu.number(r, stu_score);
  }
  return HierarchicalDataset::build(std::move(parts));
}

namespace {

void append_row(std::string& out, std::vector<std::string> cells, const Eigen::MatrixXd& m, Eigen::Index row) {
  for (Eigen::Index c = 0; c < m.cols(); ++c) cells.push_back(format_double(m(row, c)));
  out += join_csv(cells);
  out.push_back('\n');
}

}  // namespace

void save_dataset(const HierarchicalDataset& ds, const std::filesystem::path& dir) {
  std::filesystem::create_directories(dir);
  {
    std::vector<std::string> header{"department_id"};
    for (const auto& n : ds.covariate_names(Level::departmental)) header.push_back(n);
    std::string out = join_csv(header) + "\n";
    for (std::size_t k = 0; k < ds.num_departments(); ++k) {
      append_row(out, {ds.department_ids()[k]}, ds.covariates(Level::departmental), static_cast<Eigen::Index>(k));
    }
    write_text_file(dir / "departments.csv", out);
  }
  {
    std::vector<std::string> header{"municipality_id", "department_id"};
    for (const auto& n : ds.covariate_names(Level::municipal)) header.push_back(n);
    std::string out = join_csv(header) + "\n";
    for (std::size_t j = 0; j < ds.num_municipalities(); ++j) {
      append_row(out, {ds.municipality_ids()[j], ds.department_ids()[static_cast<std::size_t>(ds.department_of(j))]},
                 ds.covariates(Level::municipal), static_cast<Eigen::Index>(j));
    }
    write_text_file(dir / "municipalities.csv", out);
  }
  {
    std::vector<std::string> header{"student_id", "municipality_id", "score"};
    for (const auto& n : ds.covariate_names(Level::student)) header.push_back(n);
    std::string out = join_csv(header) + "\n";
    for (std::size_t i = 0; i < ds.num_students(); ++i) {
      append_row(out,
                 {ds.student_ids()[i], ds.municipality_ids()[static_cast<std::size_t>(ds.municipality_of(i))],
                  format_double(ds.scores()[static_cast<Eigen::Index>(i)])},
                 ds.covariates(Level::student), static_cast<Eigen::Index>(i));
    }
    write_text_file(dir / "students.csv", out);
  }
}

const std::vector<ColumnTransform>& StandardizationRecord::columns(Level level) const {
  if (level == Level::municipal) return municipal;
  if (level == Level::departmental) return departmental;
  throw std::invalid_argument("student covariates are not standardized");
}

Eigen::MatrixXd StandardizationRecord::apply(Level level, const Eigen::MatrixXd& raw) const {
  const auto& cols = columns(level);
  if (static_cast<std::size_t>(raw.cols()) != cols.size()) {
    throw DataError(DataErrorKind::dimension_mismatch, "standardization column count mismatch");
  }
  Eigen::MatrixXd out = raw;
  for (std::size_t c = 0; c < cols.size(); ++c) {
    const auto ci = static_cast<Eigen::Index>(c);
    out.col(ci) = (raw.col(ci).array() - cols[c].mean) / cols[c].sd;
  }
  return out;
}

Eigen::MatrixXd StandardizationRecord::invert(Level level, const Eigen::MatrixXd& standardized) const {
  const auto& cols = columns(level);
  if (static_cast<std::size_t>(standardized.cols()) != cols.size()) {
    throw DataError(DataErrorKind::dimension_mismatch, "standardization column count mismatch");
  }
  Eigen::MatrixXd out = standardized;
  for (std::size_t c = 0; c < cols.size(); ++c) {
    const auto ci = static_cast<Eigen::Index>(c);
    out.col(ci) = standardized.col(ci).array() * cols[c].sd + cols[c].mean;
  }
  return out;
}

std::pair<HierarchicalDataset, StandardizationRecord> standardize_covariates(const HierarchicalDataset& ds) {
  StandardizationRecord record;
  for (Level level : {Level::municipal, Level::departmental}) {
    const Eigen::MatrixXd& x = ds.covariates(level);
    auto& cols = level == Level::municipal ? record.municipal : record.departmental;
    for (Eigen::Index c = 0; c < x.cols(); ++c) {
      const std::string& name = ds.covariate_names(level)[static_cast<std::size_t>(c)];
      const Eigen::Index rows = x.rows();
      const double mean = x.col(c).mean();
      double ss = 0.0;
      for (Eigen::Index r = 0; r < rows; ++r) ss += (x(r, c) - mean) * (x(r, c) - mean);
      const double sd = rows > 1 ? std::sqrt(ss / static_cast<double>(rows - 1)) : 0.0;
      if (!(sd > 1e-300) || sd <= 1e-12 * std::max(1.0, std::abs(mean))) {
        throw DataError(DataErrorKind::zero_variance,
                        std::string(to_string(level)) + " covariate '" + name + "' has zero variance");
      }
      cols.push_back({name, mean, sd});
    }
  }
  HierarchicalDataset out = ds.with_covariates(Level::municipal, record.apply(Level::municipal, ds.covariates(Level::municipal)))
                                .with_covariates(Level::departmental,
                                                 record.apply(Level::departmental, ds.covariates(Level::departmental)));
  return {std::move(out), std::move(record)};
}

Eigen::VectorXd ols_fit(const Eigen::MatrixXd& X, const Eigen::VectorXd& y) {
  if (X.rows() != y.size()) throw DataError(DataErrorKind::dimension_mismatch, "ols_fit: X rows != y length");
  if (X.rows() < X.cols()) {
    throw DataError(DataErrorKind::rank_deficient, "ols_fit: fewer observations than columns");
  }
  Eigen::ColPivHouseholderQR<Eigen::MatrixXd> qr(X);
  qr.setThreshold(1e-10);
  if (qr.rank() < X.cols()) {
    std::ostringstream os;
    os << "ols_fit: design has rank " << qr.rank() << " < " << X.cols() << " columns";
    throw DataError(DataErrorKind::rank_deficient, os.str());
  }
  return qr.solve(y);
}

Eigen::MatrixXd stacked_design(const HierarchicalDataset& ds) {
  const auto n = static_cast<Eigen::Index>(ds.num_students());
  const auto pe = static_cast<Eigen::Index>(ds.num_covariates(Level::student));
  const auto pm = static_cast<Eigen::Index>(ds.num_covariates(Level::municipal));
  const auto pd = static_cast<Eigen::Index>(ds.num_covariates(Level::departmental));
  Eigen::MatrixXd X(n, 1 + pe + pm + pd);
  X.col(0).setOnes();
  X.block(0, 1, n, pe) = ds.covariates(Level::student);
  for (Eigen::Index i = 0; i < n; ++i) {
    const int j = ds.municipality_of(static_cast<std::size_t>(i));
    const int k = ds.department_of(static_cast<std::size_t>(j));
    X.block(i, 1 + pe, 1, pm) = ds.covariates(Level::municipal).row(j);
    X.block(i, 1 + pe + pm, 1, pd) = ds.covariates(Level::departmental).row(k);
  }
  return X;
}

}  // namespace carreg
