#pragma once

#include <cstddef>
#include <filesystem>
#include <optional>
#include <stdexcept>
#include <string>
#include <string_view>
#include <vector>

namespace carreg {

enum class DataErrorKind {
  io,
  missing_column,
  unparseable_cell,
  dangling_key,
  duplicate_key,
  empty_municipality,
  empty_department,
  non_finite,
  zero_variance,
  rank_deficient,
  dimension_mismatch,
  cross_department_edge,
  self_loop,
};

std::string_view to_string(DataErrorKind kind);

/// Input or validation failure. The message always carries the location
/// (file, line, column or id) that triggered it.
class DataError : public std::runtime_error {
 public:
  DataError(DataErrorKind kind, const std::string& message);
  DataErrorKind kind() const { return kind_; }

 private:
  DataErrorKind kind_;
};

/// A CSV file held as strings. Row `r` came from physical line
/// `line_numbers[r]` (1-based, header is line 1).
struct CsvTable {
  std::filesystem::path path;
  std::vector<std::string> header;
  std::vector<std::vector<std::string>> rows;
  std::vector<std::size_t> line_numbers;

  std::optional<std::size_t> find_column(std::string_view name) const;
  /// Index of a mandatory column; throws DataError(missing_column).
  std::size_t require_column(std::string_view name) const;
  std::string location(std::size_t row, std::size_t column) const;
  /// Parses a decimal literal; throws DataError(unparseable_cell) or
  /// DataError(non_finite) with the cell location.
  double number(std::size_t row, std::size_t column) const;
};

CsvTable read_csv(const std::filesystem::path& path);

/// Shortest representation that round-trips exactly.
std::string format_double(double value);

std::string join_csv(const std::vector<std::string>& cells);

void write_text_file(const std::filesystem::path& path, const std::string& content);
std::string read_text_file(const std::filesystem::path& path);

}  // namespace carreg
