#include "carreg/io.hpp"

#include <charconv>
#include <cmath>
#include <fstream>
#include <sstream>

namespace carreg {

std::string_view to_string(DataErrorKind kind) {
  switch (kind) {
    case DataErrorKind::io: return "io";
    case DataErrorKind::missing_column: return "missing_column";
    case DataErrorKind::unparseable_cell: return "unparseable_cell";
    case DataErrorKind::dangling_key: return "dangling_key";
    case DataErrorKind::duplicate_key: return "duplicate_key";
    case DataErrorKind::empty_municipality: return "empty_municipality";
    case DataErrorKind::empty_department: return "empty_department";
    case DataErrorKind::non_finite: return "non_finite";
    case DataErrorKind::zero_variance: return "zero_variance";
    case DataErrorKind::rank_deficient: return "rank_deficient";
    case DataErrorKind::dimension_mismatch: return "dimension_mismatch";
    case DataErrorKind::cross_department_edge: return "cross_department_edge";
    case DataErrorKind::self_loop: return "self_loop";
  }
  return "unknown";
}

DataError::DataError(DataErrorKind kind, const std::string& message)
    : std::runtime_error(std::string(to_string(kind)) + ": " + message), kind_(kind) {}

namespace {

std::string trim(std::string_view s) {
  std::size_t b = 0;
  std::size_t e = s.size();
  while (b < e && (s[b] == ' ' || s[b] == '\t' || s[b] == '\r')) ++b;
  while (e > b && (s[e - 1] == ' ' || s[e - 1] == '\t' || s[e - 1] == '\r')) --e;
  return std::string(s.substr(b, e - b));
}

// Splits one line; double quotes group commas, "" is an escaped quote.
std::vector<std::string> split_line(std::string_view line) {
  std::vector<std::string> cells;
  std::string current;
  bool quoted = false;
  for (std::size_t i = 0; i < line.size(); ++i) {
    const char c = line[i];
    if (quoted) {
      if (c == '"') {
        if (i + 1 < line.size() && line[i + 1] == '"') {
          current.push_back('"');
          ++i;
        } else {
          quoted = false;
        }
      } else {
        current.push_back(c);
      }
    } else if (c == '"') {
      quoted = true;
    } else if (c == ',') {
      cells.push_back(trim(current));
      current.clear();
    } else {
      current.push_back(c);
    }
  }
  cells.push_back(trim(current));
  return cells;
}

}  // namespace

std::optional<std::size_t> CsvTable::find_column(std::string_view name) const {
  for (std::size_t c = 0; c < header.size(); ++c) {
    if (header[c] == name) return c;
  }
  return std::nullopt;
}

std::size_t CsvTable::require_column(std::string_view name) const {
  if (auto c = find_column(name)) return *c;
  throw DataError(DataErrorKind::missing_column,
                  path.string() + ": missing column '" + std::string(name) + "'");
}

std::string CsvTable::location(std::size_t row, std::size_t column) const {
  std::ostringstream os;
  os << path.string() << ":" << line_numbers.at(row);
  if (column < header.size()) os << " column '" << header[column] << "'";
  return os.str();
}

double CsvTable::number(std::size_t row, std::size_t column) const {
  const std::string& cell = rows.at(row).at(column);
  double value = 0.0;
  const char* first = cell.data();
  const char* last = cell.data() + cell.size();
  if (!cell.empty() && *first == '+') ++first;
  auto [ptr, ec] = std::from_chars(first, last, value);
  if (cell.empty() || ec != std::errc() || ptr != last) {
    throw DataError(DataErrorKind::unparseable_cell,
                    location(row, column) + ": cannot parse '" + cell + "' as a number");
  }
  if (!std::isfinite(value)) {
    throw DataError(DataErrorKind::non_finite,
                    location(row, column) + ": non-finite value '" + cell + "'");
  }
  return value;
}

CsvTable read_csv(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw DataError(DataErrorKind::io, "cannot open " + path.string());
  CsvTable table;
  table.path = path;
  std::string line;
  std::size_t line_no = 0;
  bool have_header = false;
  while (std::getline(in, line)) {
    ++line_no;
    if (line_no == 1 && line.size() >= 3 && line.compare(0, 3, "\xEF\xBB\xBF") == 0) {
      line.erase(0, 3);
    }
    if (trim(line).empty()) continue;
    auto cells = split_line(line);
    if (!have_header) {
      table.header = std::move(cells);
      have_header = true;
      continue;
    }
    if (cells.size() != table.header.size()) {
      std::ostringstream os;
      os << path.string() << ":" << line_no << ": expected " << table.header.size()
         << " cells, found " << cells.size();
      throw DataError(DataErrorKind::unparseable_cell, os.str());
    }
    table.rows.push_back(std::move(cells));
    table.line_numbers.push_back(line_no);
  }
  if (!have_header) throw DataError(DataErrorKind::missing_column, path.string() + ": no header row");
  return table;
}

std::string format_double(double value) {
  char buffer[64];
  auto [ptr, ec] = std::to_chars(buffer, buffer + sizeof(buffer), value);
  if (ec != std::errc()) throw std::runtime_error("format_double: conversion failed");
  return std::string(buffer, ptr);
}

std::string join_csv(const std::vector<std::string>& cells) {
  std::string out;
  for (std::size_t i = 0; i < cells.size(); ++i) {
    if (i) out.push_back(',');
    const std::string& c = cells[i];
    if (c.find_first_of(",\"\n") != std::string::npos) {
      out.push_back('"');
      for (char ch : c) {
        if (ch == '"') out.push_back('"');
        out.push_back(ch);
      }
      out.push_back('"');
    } else {
      out += c;
    }
  }
  return out;
}

void write_text_file(const std::filesystem::path& path, const std::string& content) {
  if (path.has_parent_path()) std::filesystem::create_directories(path.parent_path());
  std::ofstream out(path, std::ios::binary);
  if (!out) throw DataError(DataErrorKind::io, "cannot write " + path.string());
  out << content;
  if (!out) throw DataError(DataErrorKind::io, "write failed for " + path.string());
}

std::string read_text_file(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw DataError(DataErrorKind::io, "cannot open " + path.string());
  std::ostringstream os;
  os << in.rdbuf();
  return os.str();
}

}  // namespace carreg
