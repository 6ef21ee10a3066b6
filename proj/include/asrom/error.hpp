#pragma once

#include <stdexcept>
#include <string>
#include <vector>

namespace asrom {

/// Invalid user input or configuration (CLI exit code 2).
class ConfigError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

/// A numerical procedure failed (CLI exit code 3).
class NumericalError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

/// Newton (or another iteration) ran out of iterations; carries the residual history.
class NonConvergence : public NumericalError {
 public:
  NonConvergence(const std::string& what, std::vector<double> history)
      : NumericalError(what), history_(std::move(history)) {}
  const std::vector<double>& history() const noexcept { return history_; }

 private:
  std::vector<double> history_;
};

/// Morphing produced a triangle with nonpositive signed area.
class InvertedCell : public NumericalError {
 public:
  InvertedCell(const std::string& what, std::size_t cell)
      : NumericalError(what), cell_(cell) {}
  std::size_t cell() const noexcept { return cell_; }

 private:
  std::size_t cell_;
};

/// Near-singular dense system; `rcond` is the reciprocal condition estimate.
class SingularSystem : public NumericalError {
 public:
  SingularSystem(const std::string& what, double rcond)
      : NumericalError(what), rcond_(rcond) {}
  double rcond() const noexcept { return rcond_; }

 private:
  double rcond_;
};

}  // namespace asrom
