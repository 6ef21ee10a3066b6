#pragma once

#include <Eigen/Dense>
#include <Eigen/Sparse>
#include <Eigen/SparseCholesky>
#include <array>
#include <iosfwd>
#include <memory>
#include <string>
#include <vector>

#include "asrom/geometry.hpp"

namespace asrom::fem {

using SpMat = Eigen::SparseMatrix<double>;
using Eigen::MatrixXd;
using Eigen::VectorXd;

/// Taylor-Hood P2-P1 dof maps. Scalar P2 nodes are the mesh vertices followed by one
/// node per edge; velocity dofs are blocked by component (x block, then y block);
/// pressure dofs are the vertices.
struct TaylorHoodSpace {
  std::size_t vertex_count = 0;
  std::vector<geometry::Edge> edges;                  ///< P2 edge node -> its two vertices
  std::vector<std::array<std::size_t, 6>> cell_nodes;  ///< v0 v1 v2 e01 e12 e20
  std::vector<std::size_t> inlet_dofs;  ///< velocity dofs on inlet edges (not on walls)
  std::vector<std::size_t> wall_dofs;   ///< velocity dofs on wall edges
  std::vector<std::size_t> outlet_dofs;
  std::vector<std::size_t> free_dofs;      ///< velocity dofs not constrained by Dirichlet data
  std::vector<std::ptrdiff_t> free_index;  ///< velocity dof -> position in free_dofs, or -1

  std::size_t scalar_count() const { return vertex_count + edges.size(); }
  std::size_t velocity_dofs() const { return 2 * scalar_count(); }
  std::size_t pressure_dofs() const { return vertex_count; }
  std::size_t free_count() const { return free_dofs.size(); }
  bool is_dirichlet(std::size_t dof) const { return free_index[dof] < 0; }
  std::size_t dof(std::size_t scalar_node, int component) const {
    return static_cast<std::size_t>(component) * scalar_count() + scalar_node;
  }
};

TaylorHoodSpace build_space(const geometry::Mesh& mesh);

/// Physical coordinates of every scalar P2 node (vertices, then edge midpoints).
std::vector<geometry::Vec2> p2_node_positions(const geometry::Mesh& mesh,
                                              const TaylorHoodSpace& space);

struct PhysicsConfig {
  double viscosity = 0.025;
  double inlet_velocity = 1.0;  ///< peak of the parabolic inlet profile
  double reference_width = 2.5;

  double reynolds() const { return inlet_velocity * reference_width / viscosity; }
  void validate() const;
};

/// Per-cell affine geometry: area and constant barycentric gradients.
struct CellGeometry {
  double area = 0.0;
  std::array<geometry::Vec2, 3> grad_lambda;
};

namespace detail {
struct AssemblyPattern;
}

/// Assembled system blocks for one mesh. A = viscosity * stiffness (vector Laplacian),
/// B_ki = -int zeta_k div phi_i, X_u = H1 inner product, X_p = L2 pressure mass.
/// `lifting` carries the Dirichlet data (zero off the Dirichlet dofs); f = -A l and
/// g = -B l are the lifted right-hand sides.
struct OperatorSet {
  std::shared_ptr<const TaylorHoodSpace> space;
  std::vector<CellGeometry> cells;
  double viscosity = 0.0;
  SpMat stiffness;
  SpMat A, B, X_u, X_p;
  VectorXd lifting, f, g;
  std::shared_ptr<const detail::AssemblyPattern> pattern;

  /// C(w)_ij = int (grad phi_j w) . phi_i; linear in w.
  SpMat convection(const VectorXd& w) const;
  /// Newton derivative of u -> C(u) u: C(u) + [delta -> C(delta) u].
  SpMat convection_jacobian(const VectorXd& u) const;
  /// Vector C(u) u, assembled elementwise.
  VectorXd convection_action(const VectorXd& u) const;
};

OperatorSet assemble_operators(const geometry::Mesh& mesh,
                               std::shared_ptr<const TaylorHoodSpace> space,
                               const PhysicsConfig& physics);

/// X_u (H1) and X_p (L2) only.
struct InnerProducts {
  SpMat X_u, X_p;
};
InnerProducts assemble_inner_products(const geometry::Mesh& mesh, const TaylorHoodSpace& space);

// ---------------------------------------------------------------------------
// Nonlinear solve

struct NewtonOptions {
  double absolute_tolerance = 1e-10;
  double relative_tolerance = 1e-8;
  int max_iterations = 25;
  bool reynolds_continuation = true;
};

struct HFSolution {
  VectorXd u;  ///< full velocity vector including Dirichlet values
  VectorXd p;
  VectorXd mu;
  int newton_iterations = 0;
  double residual_norm = 0.0;
  double qoi = 0.0;
  std::vector<double> residual_history;
  int continuation_steps = 0;  ///< extra viscosities visited before the target one
};

/// Residual of the saddle-point system on (free velocity rows, all pressure rows) for a
/// full-length velocity u; `viscosity` overrides ops.viscosity when positive.
VectorXd nonlinear_residual(const OperatorSet& ops, const VectorXd& u, const VectorXd& p,
                            double viscosity = -1.0);

/// Jacobian of nonlinear_residual with respect to (free velocity, pressure).
SpMat newton_jacobian(const OperatorSet& ops, const VectorXd& u, double viscosity = -1.0);

/// Lifted Stokes problem (convection dropped).
HFSolution stokes_solve(const OperatorSet& ops, double viscosity = -1.0);

/// Newton from `initial` (or the Stokes solution when null). On failure, retries
/// through viscosities 2nu, sqrt(2)nu, nu before throwing NonConvergence.
HFSolution newton_solve(const OperatorSet& ops, const NewtonOptions& options = {},
                        const HFSolution* initial = nullptr);

/// Scatter free-dof values into a full velocity vector on top of the lifting.
VectorXd expand_velocity(const OperatorSet& ops, const VectorXd& free_values);

// ---------------------------------------------------------------------------
// Quantity of interest

/// Length-weighted average of the P1 pressure over a section (trapezoid per edge).
double section_pressure_average(const VectorXd& p, const geometry::Mesh& mesh,
                                const std::vector<geometry::Edge>& section);

std::array<double, geometry::kSectionCount> section_pressures(const VectorXd& p,
                                                              const geometry::Mesh& mesh);

/// (P3 - P4)/(P0 - P1) + (P3 - P5)/(P0 - P2); the addends separately.
struct QoIParts {
  double left = 0.0;
  double right = 0.0;
  double total() const { return left + right; }
};
QoIParts qoi_parts(const VectorXd& p, const geometry::Mesh& mesh);
double qoi(const VectorXd& p, const geometry::Mesh& mesh);

// ---------------------------------------------------------------------------
// Supremizers and inf-sup

/// Factorizes X_u on the free dofs once; solve() returns s with X_u s = B^T p on the free
/// dofs and s = 0 on Dirichlet dofs.
class SupremizerSolver {
 public:
  SupremizerSolver(const SpMat& X_u, std::shared_ptr<const TaylorHoodSpace> space);
  VectorXd solve(const SpMat& B, const VectorXd& p) const;
  MatrixXd solve(const SpMat& B, const MatrixXd& P) const;

 private:
  std::shared_ptr<const TaylorHoodSpace> space_;
  Eigen::SimplicialLDLT<SpMat> ldlt_;
};

VectorXd supremizer(const OperatorSet& ops, const VectorXd& p);

struct InfSupOptions {
  int krylov_dimension = 40;
  int max_restarts = 30;
  double tolerance = 1e-8;
  unsigned seed = 7;
};

/// beta: sqrt of the smallest eigenvalue of B X_u^{-1} B^T q = lambda X_p q (free velocity
/// dofs), by restarted Lanczos on the inverse operator.
double inf_sup_constant(const OperatorSet& ops, const InfSupOptions& options = {});

// ---------------------------------------------------------------------------
// File formats

void write_solution(std::ostream& os, const HFSolution& sol);
HFSolution read_solution(std::istream& is);
/// Coordinate format, entries sorted by row then column.
void write_matrix(std::ostream& os, const SpMat& m);
SpMat read_matrix(std::istream& is);

}  // namespace asrom::fem
