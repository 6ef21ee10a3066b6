#pragma once

#include <Eigen/Dense>
#include <functional>
#include <iosfwd>
#include <string>
#include <vector>

#include "asrom/fem.hpp"

namespace asrom::rom {

using Eigen::MatrixXd;
using Eigen::VectorXd;
using fem::SpMat;

/// Velocity snapshots are stored with a lifting removed (u - l), so every column, like
/// every supremizer, vanishes on the Dirichlet dofs. The ROM lifting is a smooth field
/// carrying the Dirichlet data (see reference_lifting), not the boundary-only one.
struct SnapshotSet {
  MatrixXd S_u, S_p, S_s;
  MatrixXd parameters;  ///< one row per successful snapshot
  VectorXd qoi;
  std::vector<std::size_t> failed;  ///< indices (into the requested list) that did not solve
  std::vector<int> newton_iterations;
};

struct SnapshotSample {
  fem::HFSolution solution;
  VectorXd supremizer;
};
using SnapshotSolver = std::function<SnapshotSample(const VectorXd& mu)>;

/// Solves every row of `params` (in parallel); NumericalError failures are recorded and
/// skipped. Throws NumericalError when fewer than min(2, rows) succeed.
SnapshotSet collect_snapshots(const MatrixXd& params, const SnapshotSolver& solver,
                              const VectorXd& lifting, unsigned threads = 0);

/// Stokes velocity on the reference mesh: matches the Dirichlet data on every mesh in the
/// family (inlet and walls keep their dof values under morphing) and is smooth inside.
VectorXd reference_lifting(const fem::OperatorSet& reference_ops);

struct PODResult {
  MatrixXd modes;           ///< X-orthonormal columns
  VectorXd singular_values; ///< all of them, descending
};

/// X-weighted SVD of the snapshots: Householder QR of L^T P S (X = P^T L L^T P) followed
/// by the SVD of its triangular factor. Keeps min(max_modes, numerical rank)
/// modes (sigma_i > 1e-10 sigma_1); max_modes < 0 keeps the numerical rank.
PODResult pod(const MatrixXd& S, const SpMat& X, int max_modes = -1);

/// Smallest N whose retained energy fraction reaches 1 - tolerance^2.
int modes_for_tolerance(const VectorXd& singular_values, double tolerance);

/// X-orthonormalizes the columns in order (two Gram-Schmidt passes) and drops columns
/// whose remaining norm falls below `drop_tolerance` times their original norm.
MatrixXd orthonormalize(const MatrixXd& V, const SpMat& X, double drop_tolerance = 1e-10);

struct PODBasis {
  MatrixXd velocity_modes, supremizer_modes, pressure_modes;
  VectorXd sigma_u, sigma_s, sigma_p;
  MatrixXd Z_us;  ///< orthonormalized [velocity | supremizer] prefix
  MatrixXd Z_p;
  VectorXd lifting;
  int N_u = 0, N_s = 0, N_p = 0;

  int velocity_dimension() const { return static_cast<int>(Z_us.cols()); }
};

/// Assembles Z_us and Z_p from the first N_u velocity, N_s supremizer and N_p pressure
/// modes of `basis` (which must hold at least that many).
PODBasis truncate(const PODBasis& basis, int N_u, int N_s, int N_p, const SpMat& X_u);

/// Three PODs (velocity and supremizers in X_u, pressure in X_p), keeping `max_modes` of each.
PODBasis build_reduced_spaces(const SnapshotSet& snapshots, const VectorXd& lifting,
                              const SpMat& X_u, const SpMat& X_p, int max_modes);

struct ReducedOperators {
  const fem::OperatorSet* full = nullptr;
  MatrixXd Z_us, Z_p;
  VectorXd lifting;
  MatrixXd A_N, B_N;
  VectorXd Al_N;  ///< Z^T A l
  VectorXd Bl_N;  ///< Z_p^T B l
};

/// Throws ConfigError when the basis lifting disagrees with the Dirichlet data of `ops`.
ReducedOperators project_operators(const fem::OperatorSet& ops, const PODBasis& basis);

/// Z^T C(l + Z w) Z
MatrixXd project_convection(const ReducedOperators& red, const VectorXd& w);

struct ROMSolution {
  VectorXd w, q;  ///< reduced coefficients
  VectorXd u, p;  ///< reconstructions l + Z_us w and Z_p q
  double qoi = 0.0;
  int newton_iterations = 0;
  double residual_norm = 0.0;
  std::vector<double> residual_history;
};

/// Residual Z^T R(l + Z w, Z_p q) of the full saddle system.
VectorXd reduced_residual(const ReducedOperators& red, const VectorXd& w, const VectorXd& q);
MatrixXd reduced_jacobian(const ReducedOperators& red, const VectorXd& w);
/// Reduced Stokes problem.
ROMSolution reduced_stokes(const ReducedOperators& red);
/// Dense Newton with residual backtracking from the reduced Stokes solution; QoI evaluated on `mesh`.
ROMSolution rom_solve(const ReducedOperators& red, const geometry::Mesh& mesh,
                      const fem::NewtonOptions& options = {});

/// Smallest singular value of B_N (the reduced inf-sup constant in orthonormal bases).
double reduced_inf_sup(const ReducedOperators& red);

struct PointErrors {
  bool ok = false;
  double err_u = 0.0, err_p = 0.0, err_qoi = 0.0;
};

double x_norm(const VectorXd& v, const SpMat& X);

/// Relative X_u / X_p / QoI errors of a ROM solution against the HF one.
PointErrors compare(const ROMSolution& rom, const fem::HFSolution& hf, const SpMat& X_u,
                    const SpMat& X_p);

struct ErrorRow {
  int N = 0;
  double err_u = 0.0, err_p = 0.0, err_qoi = 0.0;
  int evaluated = 0, failed = 0;
};

/// Means over the successful entries; errors[i][j] belongs to test point i and N = Ns[j].
std::vector<ErrorRow> aggregate_errors(const std::vector<int>& Ns,
                                       const std::vector<std::vector<PointErrors>>& errors);

void write_error_report(const std::string& path, const std::vector<ErrorRow>& rows,
                        const std::string& variant);

// ---------------------------------------------------------------------------

void write_basis(std::ostream& os, const PODBasis& basis);
PODBasis read_basis(std::istream& is);
void write_basis_file(const std::string& path, const PODBasis& basis);
PODBasis read_basis_file(const std::string& path);

/// index, sigma_u, sigma_s, sigma_p; the three families have one value per snapshot.
void write_singular_values(const std::string& path, const PODBasis& basis);

}  // namespace asrom::rom
