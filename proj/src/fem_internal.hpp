#pragma once

#include <Eigen/SparseLU>
#include <array>
#include <vector>

#include "asrom/fem.hpp"

namespace asrom::fem::detail {

inline constexpr std::size_t kQuadraturePoints = 7;

using SparseLUSolver = Eigen::SparseLU<SpMat, Eigen::COLAMDOrdering<int>>;

/// P2 shape data at the quadrature points: values and derivatives in barycentric
/// coordinates (dlambda[q][a][i] = dN_a / dlambda_i).
struct ReferenceElement {
  std::array<std::array<double, 3>, kQuadraturePoints> points;
  std::array<double, kQuadraturePoints> weights;
  std::array<std::array<double, 6>, kQuadraturePoints> value;
  std::array<std::array<std::array<double, 3>, 6>, kQuadraturePoints> dlambda;
};

const ReferenceElement& reference_element();
CellGeometry cell_geometry(const geometry::Mesh& mesh, std::size_t c);
void shape_gradients(const CellGeometry& g, std::size_t q, std::array<geometry::Vec2, 6>& grad);
std::array<std::size_t, 12> cell_velocity_dofs(const TaylorHoodSpace& s, std::size_t c);

using Local12 = Eigen::Matrix<double, 12, 12>;

/// Compressed velocity-velocity sparsity with precomputed value slots per cell entry, so
/// repeated assembly is a plain scatter-add.
struct AssemblyPattern {
  explicit AssemblyPattern(const TaylorHoodSpace& s);
  SpMat zero_matrix() const;
  void scatter(SpMat& m, std::size_t c, const Local12& local) const;

  SpMat structure;
  std::vector<int> slots;
};

}  // namespace asrom::fem::detail
