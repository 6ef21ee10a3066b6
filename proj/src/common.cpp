#include <cmath>
#include <cstdio>
#include <fstream>
#include <sstream>

#include "asrom/csv.hpp"
#include "asrom/error.hpp"
#include "asrom/format.hpp"
#include "asrom/rng.hpp"

namespace asrom {

std::string fmt17(double v) {
  if (v == 0.0) return "0";  // folds -0 so reruns do not depend on the sign of zero
  char buf[40];
  std::snprintf(buf, sizeof buf, "%.17g", v);
  return buf;
}

double Rng::normal() {
  double u1 = uniform();
  while (u1 <= 0.0) u1 = uniform();
  const double u2 = uniform();
  return std::sqrt(-2.0 * std::log(u1)) * std::cos(2.0 * M_PI * u2);
}

std::uint64_t derive_seed(std::uint64_t base, std::uint64_t stream) {
  std::uint64_t z = base + 0x9E3779B97F4A7C15ULL * (stream + 1);
  z = (z ^ (z >> 30)) * 0xBF58476D1CE4E5B9ULL;
  z = (z ^ (z >> 27)) * 0x94D049BB133111EBULL;
  return z ^ (z >> 31);
}

std::size_t CsvTable::column(const std::string& name) const {
  for (std::size_t i = 0; i < header.size(); ++i)
    if (header[i] == name) return i;
  throw ConfigError("CSV column '" + name + "' not found");
}

Eigen::MatrixXd CsvTable::matrix() const {
  Eigen::MatrixXd m(rows.size(), header.size());
  for (std::size_t i = 0; i < rows.size(); ++i)
    for (std::size_t j = 0; j < header.size(); ++j) m(i, j) = rows[i][j];
  return m;
}

namespace {

std::vector<std::string> split(const std::string& line) {
  std::vector<std::string> out;
  std::stringstream ss(line);
  std::string cell;
  while (std::getline(ss, cell, ',')) {
    while (!cell.empty() && (cell.back() == '\r' || cell.back() == ' ')) cell.pop_back();
    out.push_back(cell);
  }
  return out;
}

}  // namespace

CsvTable read_csv(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw ConfigError("cannot open CSV file " + path);
  CsvTable t;
  std::string line;
  if (!std::getline(in, line)) throw ConfigError("empty CSV file " + path);
  t.header = split(line);
  while (std::getline(in, line)) {
    if (line.empty()) continue;
    auto cells = split(line);
    if (cells.size() != t.header.size())
      throw ConfigError("ragged CSV row in " + path);
    std::vector<double> row;
    row.reserve(cells.size());
    for (auto& c : cells) row.push_back(std::stod(c));
    t.rows.push_back(std::move(row));
  }
  return t;
}

void write_csv(std::ostream& os, const std::vector<std::string>& header,
               const Eigen::MatrixXd& rows) {
  for (std::size_t j = 0; j < header.size(); ++j) os << (j ? "," : "") << header[j];
  os << '\n';
  for (Eigen::Index i = 0; i < rows.rows(); ++i) {
    for (Eigen::Index j = 0; j < rows.cols(); ++j) os << (j ? "," : "") << fmt17(rows(i, j));
    os << '\n';
  }
}

void write_csv(const std::string& path, const std::vector<std::string>& header,
               const Eigen::MatrixXd& rows) {
  if (static_cast<Eigen::Index>(header.size()) != rows.cols())
    throw ConfigError("CSV header/column count mismatch for " + path);
  std::ofstream out(path);
  if (!out) throw ConfigError("cannot write " + path);
  write_csv(out, header, rows);
}

std::vector<std::string> prefixed_names(const std::string& prefix, std::size_t n) {
  std::vector<std::string> out;
  for (std::size_t i = 1; i <= n; ++i) out.push_back(prefix + std::to_string(i));
  return out;
}

}  // namespace asrom
