#pragma once

#include <array>
#include <cstddef>
#include <filesystem>
#include <optional>
#include <string>
#include <string_view>
#include <utility>
#include <vector>

#include <Eigen/Dense>

#include "carreg/io.hpp"

namespace carreg {

/// Nesting level of a covariate block: student (E), municipal (M) or
/// departmental (D).
enum class Level { student = 0, municipal = 1, departmental = 2 };

inline constexpr std::array<Level, 3> kLevels{Level::student, Level::municipal, Level::departmental};

std::string_view to_string(Level level);
Level parse_level(std::string_view name);

/// Raw material for a dataset. Indices must already be dense and 0-based.
struct DatasetParts {
  Eigen::VectorXd scores;
  Eigen::MatrixXd student_covariates;       // n x p_E
  Eigen::MatrixXd municipal_covariates;     // m x p_M
  Eigen::MatrixXd departmental_covariates;  // d x p_D
  std::vector<int> student_municipality;       // length n
  std::vector<int> municipality_department;    // length m
  std::vector<std::string> student_ids;
  std::vector<std::string> municipality_ids;
  std::vector<std::string> department_ids;
  std::array<std::vector<std::string>, 3> covariate_names;
};

/// Students nested in municipalities nested in departments. Immutable once
/// built; every invariant is checked by build().
class HierarchicalDataset {
 public:
  /// Validates the parts: index ranges, empty municipalities/departments,
  /// finiteness, id uniqueness and covariate names. Throws DataError.
  static HierarchicalDataset build(DatasetParts parts);

  std::size_t num_students() const { return parts_.student_municipality.size(); }
  std::size_t num_municipalities() const { return parts_.municipality_department.size(); }
  std::size_t num_departments() const { return parts_.department_ids.size(); }
  std::size_t num_covariates(Level level) const {
    return static_cast<std::size_t>(covariates(level).cols());
  }

  const Eigen::VectorXd& scores() const { return parts_.scores; }
  const Eigen::MatrixXd& covariates(Level level) const;
  const std::vector<std::string>& covariate_names(Level level) const {
    return parts_.covariate_names[static_cast<int>(level)];
  }

  int municipality_of(std::size_t student) const { return parts_.student_municipality[student]; }
  int department_of(std::size_t municipality) const {
    return parts_.municipality_department[municipality];
  }
  const std::vector<int>& student_municipality() const { return parts_.student_municipality; }
  const std::vector<int>& municipality_department() const { return parts_.municipality_department; }

  /// n_{j,k}
  const std::vector<std::size_t>& municipality_sizes() const { return municipality_sizes_; }
  /// m_k
  const std::vector<std::size_t>& department_sizes() const { return department_sizes_; }
  const std::vector<std::vector<int>>& students_in_municipality() const { return students_by_municipality_; }
  const std::vector<std::vector<int>>& municipalities_in_department() const {
    return municipalities_by_department_;
  }

  const std::vector<std::string>& student_ids() const { return parts_.student_ids; }
  const std::vector<std::string>& municipality_ids() const { return parts_.municipality_ids; }
  const std::vector<std::string>& department_ids() const { return parts_.department_ids; }
  std::optional<int> find_municipality(std::string_view id) const;

  const DatasetParts& parts() const { return parts_; }
  /// Copy with one covariate block replaced (same shape required).
  HierarchicalDataset with_covariates(Level level, Eigen::MatrixXd values) const;

  bool operator==(const HierarchicalDataset& other) const;

 private:
  DatasetParts parts_;
  std::vector<std::size_t> municipality_sizes_;
  std::vector<std::size_t> department_sizes_;
  std::vector<std::vector<int>> students_by_municipality_;
  std::vector<std::vector<int>> municipalities_by_department_;
};

/// Reads the three input CSVs (student_id, municipality_id, score, ...;
/// municipality_id, department_id, ...; department_id, ...). Dense indices
/// follow file order.
HierarchicalDataset load_dataset(const std::filesystem::path& students_path,
                                 const std::filesystem::path& municipalities_path,
                                 const std::filesystem::path& departments_path);

/// Writes students.csv, municipalities.csv, departments.csv into `dir`.
void save_dataset(const HierarchicalDataset& ds, const std::filesystem::path& dir);

struct ColumnTransform {
  std::string name;
  double mean = 0.0;
  double sd = 1.0;
};

struct StandardizationRecord {
  std::vector<ColumnTransform> municipal;
  std::vector<ColumnTransform> departmental;

  const std::vector<ColumnTransform>& columns(Level level) const;
  Eigen::MatrixXd apply(Level level, const Eigen::MatrixXd& raw) const;
  Eigen::MatrixXd invert(Level level, const Eigen::MatrixXd& standardized) const;
};

/// Centers and scales municipal and departmental columns to mean 0 and
/// sample sd 1. Student columns (0/1 indicators) are left as they are.
std::pair<HierarchicalDataset, StandardizationRecord> standardize_covariates(const HierarchicalDataset& ds);

/// Least squares solution of min ||y - X b||^2 via column-pivoted QR.
/// Throws DataError(rank_deficient) when X lacks full column rank.
Eigen::VectorXd ols_fit(const Eigen::MatrixXd& X, const Eigen::VectorXd& y);

/// Student-level design [1, x_i, z_{j(i)}, w_{k(i)}].
Eigen::MatrixXd stacked_design(const HierarchicalDataset& ds);

}  // namespace carreg
