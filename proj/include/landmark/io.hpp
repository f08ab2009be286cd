#pragma once

#include <cerrno>
#include <cmath>
#include <cstdio>
#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <sstream>
#include <stdexcept>
#include <string>
#include <utility>
#include <vector>

#include "landmark/linop.hpp"

namespace landmark {

// Shortest representation that round-trips a double exactly.
inline std::string format_double(double v) {
  char buf[40];
  std::snprintf(buf, sizeof(buf), "%.17g", v);
  return buf;
}

struct IngestResult {
  Matrix data;
  std::vector<std::string> header;    // empty when the file had none
  std::vector<std::string> warnings;  // e.g. constant columns
};

namespace detail {

inline std::string trim(const std::string& s) {
  const auto b = s.find_first_not_of(" \t\r");
  if (b == std::string::npos) return "";
  const auto e = s.find_last_not_of(" \t\r");
  return s.substr(b, e - b + 1);
}

inline std::vector<std::string> split_csv_line(const std::string& line) {
  std::vector<std::string> cells;
  std::string cell;
  std::stringstream ss(line);
  while (std::getline(ss, cell, ',')) cells.push_back(trim(cell));
  if (!line.empty() && line.back() == ',') cells.push_back("");
  return cells;
}

inline bool parse_double(const std::string& s, double& out) {
  if (s.empty()) return false;
  char* end = nullptr;
  errno = 0;
  out = std::strtod(s.c_str(), &end);
  return errno == 0 && end == s.c_str() + s.size();
}

}  // namespace detail

/// Read a rectangular numeric CSV.  A non-numeric first row is taken as a
/// header.  Ragged rows and non-numeric cells are hard errors naming the
/// 1-based row and column.  With standardize on, columns are centered to
/// mean 0 and scaled to population variance 1; constant columns stay at 0
/// after centering, with a warning.
inline IngestResult ingest_csv(const std::string& path, bool standardize = true) {
  std::ifstream in(path);
  if (!in) throw std::runtime_error("cannot open input file: " + path);

  IngestResult res;
  std::vector<std::vector<double>> rows;
  std::string line;
  std::size_t lineno = 0;
  std::size_t ncols = 0;

  while (std::getline(in, line)) {
    ++lineno;
    if (detail::trim(line).empty()) continue;
    std::vector<std::string> cells = detail::split_csv_line(line);

    if (rows.empty() && res.header.empty()) {
      // header auto-detection: first data-bearing row with a non-numeric cell
      bool numeric = true;
      double v;
      for (const auto& c : cells)
        if (!detail::parse_double(c, v)) {
          numeric = false;
          break;
        }
      if (!numeric) {
        res.header = cells;
        ncols = cells.size();
        continue;
      }
    }

    if (ncols == 0) ncols = cells.size();
    if (cells.size() != ncols)
      throw std::runtime_error(path + ": row " + std::to_string(lineno) +
                               " has " + std::to_string(cells.size()) +
                               " cells, expected " + std::to_string(ncols));
    std::vector<double> vals(ncols);
    for (std::size_t j = 0; j < ncols; ++j)
      if (!detail::parse_double(cells[j], vals[j]))
        throw std::runtime_error(path + ": non-numeric cell at row " +
                                 std::to_string(lineno) + ", column " +
                                 std::to_string(j + 1) + ": '" + cells[j] + "'");
    rows.push_back(std::move(vals));
  }

  if (rows.empty()) throw std::runtime_error(path + ": no data rows");

  res.data.resize(static_cast<Index>(rows.size()), static_cast<Index>(ncols));
  for (Index i = 0; i < res.data.rows(); ++i)
    for (Index j = 0; j < res.data.cols(); ++j)
      res.data(i, j) = rows[static_cast<std::size_t>(i)][static_cast<std::size_t>(j)];

  if (standardize) {
    const double n = static_cast<double>(res.data.rows());
    for (Index j = 0; j < res.data.cols(); ++j) {
      const double mean = res.data.col(j).mean();
      res.data.col(j).array() -= mean;
      const double var = res.data.col(j).squaredNorm() / n;  // population variance
      if (var <= 1e-30) {
        res.data.col(j).setZero();
        res.warnings.push_back("column " + std::to_string(j + 1) +
                               " is constant; standardized to all zeros");
      } else {
        res.data.col(j) /= std::sqrt(var);
      }
    }
  }
  return res;
}

// Write-temp-rename so readers never observe a half-written file.
inline void atomic_write(const std::filesystem::path& path,
                         const std::string& content) {
  if (path.has_parent_path())
    std::filesystem::create_directories(path.parent_path());
  std::filesystem::path tmp = path;
  tmp += ".tmp";
  {
    std::ofstream out(tmp, std::ios::binary | std::ios::trunc);
    if (!out) throw std::runtime_error("cannot write " + tmp.string());
    out << content;
    if (!out) throw std::runtime_error("write failed for " + tmp.string());
  }
  std::filesystem::rename(tmp, path);
}

inline std::string trajectory_csv(
    const std::vector<std::pair<Index, Vector>>& trajectory) {
  std::string out = "iteration,coordinate,t_value\n";
  for (const auto& [iter, t] : trajectory)
    for (Index j = 0; j < t.size(); ++j)
      out += std::to_string(iter) + "," + std::to_string(j) + "," +
             format_double(t[j]) + "\n";
  return out;
}

inline void write_trajectory_csv(
    const std::filesystem::path& path,
    const std::vector<std::pair<Index, Vector>>& trajectory) {
  atomic_write(path, trajectory_csv(trajectory));
}

}  // namespace landmark
