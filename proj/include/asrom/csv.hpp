#pragma once

#include <Eigen/Dense>
#include <iosfwd>
#include <string>
#include <vector>

namespace asrom {

/// A parsed CSV table: one header row plus numeric rows.
struct CsvTable {
  std::vector<std::string> header;
  std::vector<std::vector<double>> rows;

  std::size_t column(const std::string& name) const;
  Eigen::MatrixXd matrix() const;
};

CsvTable read_csv(const std::string& path);
void write_csv(const std::string& path, const std::vector<std::string>& header,
               const Eigen::MatrixXd& rows);
void write_csv(std::ostream& os, const std::vector<std::string>& header,
               const Eigen::MatrixXd& rows);

/// Numbered header names, e.g. prefixed_names("mu_", 3) -> mu_1, mu_2, mu_3.
std::vector<std::string> prefixed_names(const std::string& prefix, std::size_t n);

}  // namespace asrom
