#pragma once

#include <Eigen/Dense>
#include <cstdint>
#include <string>
#include <vector>

namespace asrom::asub {

using Eigen::MatrixXd;
using Eigen::VectorXd;

/// Axis-aligned parameter box.
struct Box {
  VectorXd low, high;

  static Box uniform(std::size_t m, double lo, double hi);
  std::size_t dimension() const { return static_cast<std::size_t>(low.size()); }
  VectorXd center() const { return 0.5 * (low + high); }
  bool contains(const VectorXd& mu) const;
  void validate() const;
};

struct SampleSet {
  MatrixXd parameters;  ///< N x m
  VectorXd values;      ///< N
};

struct GradientSet {
  MatrixXd gradients;  ///< N x m
  int k = 0;           ///< requested neighborhood size
  int enlarged = 0;    ///< samples whose neighborhood had to grow
};

/// N i.i.d. uniform rows in `box`.
MatrixXd sample_parameters(std::size_t n, const Box& box, std::uint64_t seed);

/// Least-squares fit f ~ b0 + b^T mu over the k nearest samples (Euclidean, the sample
/// itself included); the gradient is b. Rank-deficient neighborhoods grow by 5.
GradientSet local_linear_gradients(const SampleSet& samples, int k = 17);

/// (1/N) sum_i g_i g_i^T
MatrixXd covariance(const MatrixXd& gradients);

struct Eigendecomposition {
  VectorXd values;   ///< descending
  MatrixXd vectors;  ///< columns; largest-magnitude entry of each is positive
};
Eigendecomposition eigendecompose(const MatrixXd& sigma);

struct BootstrapIntervals {
  VectorXd lo, hi;
};
/// Min/max of the covariance eigenvalues over resampled gradient sets.
BootstrapIntervals bootstrap_eigenvalues(const MatrixXd& gradients, int n_boot, std::uint64_t seed);

/// argmax_i lambda_i / lambda_{i+1} over i = 1..m-1 (1-based result).
int spectral_gap_dimension(const VectorXd& eigenvalues);

struct ActiveSubspace {
  MatrixXd sigma;
  VectorXd eigenvalues;
  MatrixXd W;
  int M = 1;
  MatrixXd W1, W2;
  VectorXd bootstrap_lo, bootstrap_hi;
};

/// Splits W after its first M columns.
void partition(ActiveSubspace& as, int M);
ActiveSubspace compute_active_subspace(const MatrixXd& gradients, int n_boot, std::uint64_t seed,
                                       int M_override = 0);

VectorXd project_active(const MatrixXd& W1, const VectorXd& mu);

struct LiftResult {
  VectorXd mu;
  int clamped = 0;  ///< number of clamped coordinates
};
/// c + W1 (mu_M - W1^T c) with c the box center, clamped into the box.
LiftResult lift(const MatrixXd& W1, const VectorXd& mu_M, const Box& box);

/// Total-degree polynomial in M variables; terms ordered by degree, then lexicographically.
struct ResponseSurface {
  int dimension = 0;
  int order = 0;
  MatrixXd W1;
  std::vector<std::vector<int>> exponents;
  VectorXd coefficients;
  double training_error = 0.0;  ///< ||g - f|| / ||f|| on the training set
};

std::vector<std::vector<int>> total_degree_exponents(int dimension, int order);
ResponseSurface fit_response_surface(const SampleSet& train, const MatrixXd& W1, int order);
double eval_surface(const ResponseSurface& rs, const VectorXd& mu);
double relative_error(const ResponseSurface& rs, const SampleSet& test);

/// Rows M = 1..max_M, columns order = 1..max_order.
MatrixXd surrogate_error_grid(const SampleSet& train, const SampleSet& test, const MatrixXd& W,
                              int max_M, int max_order);

/// Columns: W1^T mu (M of them), then f. M must be 1 or 2.
MatrixXd sufficient_summary(const SampleSet& samples, const MatrixXd& W1);

// ---------------------------------------------------------------------------
// CSV surfaces

void write_samples(const std::string& path, const SampleSet& s);
SampleSet read_samples(const std::string& path);
void write_gradients(const std::string& path, const MatrixXd& g);
MatrixXd read_gradients(const std::string& path);
/// index, lambda, lo, hi
void write_eigenvalues(const std::string& path, const ActiveSubspace& as);
/// w_1..w_m columns, one row per parameter coordinate.
void write_eigenvectors(const std::string& path, const MatrixXd& W);
ActiveSubspace read_active_subspace(const std::string& eigenvalues_path,
                                    const std::string& eigenvectors_path, int M);

}  // namespace asrom::asub
