#include <algorithm>
#include <cmath>
#include <map>
#include <limits>
#include <set>

#include "asrom/error.hpp"
#include "asrom/fem.hpp"
#include "fem_internal.hpp"

namespace asrom::fem {

using geometry::Edge;
using geometry::Mesh;
using geometry::Vec2;

void PhysicsConfig::validate() const {
  if (!(viscosity > 0.0)) throw ConfigError("viscosity must be positive");
  if (!(inlet_velocity > 0.0)) throw ConfigError("inlet velocity must be positive");
  if (!(reference_width > 0.0)) throw ConfigError("reference width must be positive");
}

TaylorHoodSpace build_space(const Mesh& mesh) {
  TaylorHoodSpace s;
  s.vertex_count = mesh.nodes.size();
  std::map<Edge, std::size_t> edge_index;
  auto edge_node = [&](std::size_t a, std::size_t b) {
    Edge e{std::min(a, b), std::max(a, b)};
    auto [it, inserted] = edge_index.try_emplace(e, s.edges.size());
    if (inserted) s.edges.push_back(e);
    return s.vertex_count + it->second;
  };
  s.cell_nodes.reserve(mesh.triangles.size());
  for (const auto& t : mesh.triangles) {
    std::array<std::size_t, 6> nodes{t[0], t[1], t[2], 0, 0, 0};
    nodes[3] = edge_node(t[0], t[1]);
    nodes[4] = edge_node(t[1], t[2]);
    nodes[5] = edge_node(t[2], t[0]);
    s.cell_nodes.push_back(nodes);
  }

  const std::size_t nu = s.velocity_dofs();
  std::vector<int> kind(nu, 0);  // 0 free, 1 inlet, 2 wall
  std::set<std::size_t> outlet;
  for (const auto& be : mesh.boundary) {
    const Edge e{std::min(be.nodes[0], be.nodes[1]), std::max(be.nodes[0], be.nodes[1])};
    const auto it = edge_index.find(e);
    if (it == edge_index.end()) throw ConfigError("boundary edge is not a mesh edge");
    const std::array<std::size_t, 3> scalars{e[0], e[1], s.vertex_count + it->second};
    for (auto a : scalars)
      for (int c = 0; c < 2; ++c) {
        const auto d = s.dof(a, c);
        switch (be.tag) {
          case geometry::BoundaryTag::wall: kind[d] = 2; break;
          case geometry::BoundaryTag::inlet: kind[d] = std::max(kind[d], 1); break;
          default: outlet.insert(d); break;
        }
      }
  }
  s.free_index.assign(nu, -1);
  for (std::size_t d = 0; d < nu; ++d) {
    if (kind[d] == 0) {
      s.free_index[d] = static_cast<std::ptrdiff_t>(s.free_dofs.size());
      s.free_dofs.push_back(d);
    } else if (kind[d] == 1) {
      s.inlet_dofs.push_back(d);
    } else {
      s.wall_dofs.push_back(d);
    }
  }
  for (auto d : outlet)
    if (kind[d] == 0) s.outlet_dofs.push_back(d);
  return s;
}

std::vector<Vec2> p2_node_positions(const Mesh& mesh, const TaylorHoodSpace& space) {
  std::vector<Vec2> pos(mesh.nodes.begin(), mesh.nodes.end());
  pos.reserve(space.scalar_count());
  for (const auto& e : space.edges) pos.push_back(0.5 * (mesh.nodes[e[0]] + mesh.nodes[e[1]]));
  return pos;
}

namespace detail {

const ReferenceElement& reference_element() {
  static const ReferenceElement ref = [] {
    ReferenceElement r;
    // Degree-5 symmetric 7-point rule (weights normalized to sum 1).
    const double s15 = std::sqrt(15.0);
    const double a1 = (6.0 - s15) / 21.0, b1 = (9.0 + 2.0 * s15) / 21.0;
    const double a2 = (6.0 + s15) / 21.0, b2 = (9.0 - 2.0 * s15) / 21.0;
    const double w1 = (155.0 - s15) / 1200.0, w2 = (155.0 + s15) / 1200.0;
    r.points = {{{1.0 / 3, 1.0 / 3, 1.0 / 3},
                 {b1, a1, a1}, {a1, b1, a1}, {a1, a1, b1},
                 {b2, a2, a2}, {a2, b2, a2}, {a2, a2, b2}}};
    r.weights = {9.0 / 40.0, w1, w1, w1, w2, w2, w2};
    constexpr int edge_v[3][2] = {{0, 1}, {1, 2}, {2, 0}};
    for (std::size_t q = 0; q < kQuadraturePoints; ++q) {
      const auto& l = r.points[q];
      for (int i = 0; i < 3; ++i) {
        r.value[q][i] = l[i] * (2.0 * l[i] - 1.0);
        r.dlambda[q][i] = {0.0, 0.0, 0.0};
        r.dlambda[q][i][i] = 4.0 * l[i] - 1.0;
      }
      for (int e = 0; e < 3; ++e) {
        const int i = edge_v[e][0], j = edge_v[e][1];
        r.value[q][3 + e] = 4.0 * l[i] * l[j];
        r.dlambda[q][3 + e] = {0.0, 0.0, 0.0};
        r.dlambda[q][3 + e][i] = 4.0 * l[j];
        r.dlambda[q][3 + e][j] = 4.0 * l[i];
      }
    }
    return r;
  }();
  return ref;
}

CellGeometry cell_geometry(const Mesh& mesh, std::size_t c) {
  const auto& t = mesh.triangles[c];
  CellGeometry g;
  g.area = mesh.signed_area(c);
  if (!(g.area > 0.0)) throw InvertedCell("cell " + std::to_string(c) + " is inverted", c);
  for (int i = 0; i < 3; ++i) {
    const Vec2& p1 = mesh.nodes[t[(i + 1) % 3]];
    const Vec2& p2 = mesh.nodes[t[(i + 2) % 3]];
    g.grad_lambda[i] = Vec2(p1.y() - p2.y(), p2.x() - p1.x()) / (2.0 * g.area);
  }
  return g;
}

void shape_gradients(const CellGeometry& g, std::size_t q, std::array<Vec2, 6>& grad) {
  const auto& ref = reference_element();
  for (int a = 0; a < 6; ++a) {
    grad[a] = ref.dlambda[q][a][0] * g.grad_lambda[0] + ref.dlambda[q][a][1] * g.grad_lambda[1] +
              ref.dlambda[q][a][2] * g.grad_lambda[2];
  }
}

std::array<std::size_t, 12> cell_velocity_dofs(const TaylorHoodSpace& s, std::size_t c) {
  std::array<std::size_t, 12> d{};
  for (int comp = 0; comp < 2; ++comp)
    for (int a = 0; a < 6; ++a) d[6 * comp + a] = s.dof(s.cell_nodes[c][a], comp);
  return d;
}

AssemblyPattern::AssemblyPattern(const TaylorHoodSpace& s) {
  const std::size_t n = s.velocity_dofs();
  const std::size_t ncell = s.cell_nodes.size();
  std::vector<Eigen::Triplet<double>> trip;
  trip.reserve(ncell * 144);
  for (std::size_t c = 0; c < ncell; ++c) {
    const auto d = cell_velocity_dofs(s, c);
    for (auto i : d)
      for (auto j : d) trip.emplace_back(static_cast<int>(i), static_cast<int>(j), 1.0);
  }
  structure.resize(static_cast<Eigen::Index>(n), static_cast<Eigen::Index>(n));
  structure.setFromTriplets(trip.begin(), trip.end());
  structure.makeCompressed();
  slots.resize(ncell * 144);
  const int* outer = structure.outerIndexPtr();
  const int* inner = structure.innerIndexPtr();
  for (std::size_t c = 0; c < ncell; ++c) {
    const auto d = cell_velocity_dofs(s, c);
    for (int i = 0; i < 12; ++i)
      for (int j = 0; j < 12; ++j) {
        const int col = static_cast<int>(d[j]);
        const int* begin = inner + outer[col];
        const int* end = inner + outer[col + 1];
        const int* it = std::lower_bound(begin, end, static_cast<int>(d[i]));
        slots[(c * 12 + i) * 12 + j] = static_cast<int>(it - inner);
      }
  }
}

SpMat AssemblyPattern::zero_matrix() const {
  SpMat m = structure;
  std::fill(m.valuePtr(), m.valuePtr() + m.nonZeros(), 0.0);
  return m;
}

void AssemblyPattern::scatter(SpMat& m, std::size_t c, const Local12& local) const {
  double* values = m.valuePtr();
  const int* slot = &slots[c * 144];
  for (int i = 0; i < 12; ++i)
    for (int j = 0; j < 12; ++j) values[slot[i * 12 + j]] += local(i, j);
}

}  // namespace detail

namespace {

using detail::Local12;

struct ScalarLocal {
  Eigen::Matrix<double, 6, 6> stiffness = Eigen::Matrix<double, 6, 6>::Zero();
  Eigen::Matrix<double, 6, 6> mass = Eigen::Matrix<double, 6, 6>::Zero();
  Eigen::Matrix<double, 3, 12> divergence = Eigen::Matrix<double, 3, 12>::Zero();
  Eigen::Matrix3d pressure_mass = Eigen::Matrix3d::Zero();
};

ScalarLocal scalar_local(const CellGeometry& g) {
  const auto& ref = detail::reference_element();
  ScalarLocal loc;
  std::array<Vec2, 6> grad;
  for (std::size_t q = 0; q < detail::kQuadraturePoints; ++q) {
    detail::shape_gradients(g, q, grad);
    const double w = ref.weights[q] * g.area;
    for (int a = 0; a < 6; ++a) {
      for (int b = 0; b < 6; ++b) {
        loc.stiffness(a, b) += w * grad[a].dot(grad[b]);
        loc.mass(a, b) += w * ref.value[q][a] * ref.value[q][b];
      }
      for (int k = 0; k < 3; ++k)
        for (int c = 0; c < 2; ++c) loc.divergence(k, 6 * c + a) -= w * ref.points[q][k] * grad[a][c];
    }
    for (int k = 0; k < 3; ++k)
      for (int l = 0; l < 3; ++l) loc.pressure_mass(k, l) += w * ref.points[q][k] * ref.points[q][l];
  }
  return loc;
}

Local12 block_diagonal(const Eigen::Matrix<double, 6, 6>& m) {
  Local12 out = Local12::Zero();
  out.topLeftCorner<6, 6>() = m;
  out.bottomRightCorner<6, 6>() = m;
  return out;
}

Eigen::Matrix<double, 12, 1> gather(const VectorXd& v, const std::array<std::size_t, 12>& dofs) {
  Eigen::Matrix<double, 12, 1> out;
  for (int i = 0; i < 12; ++i) out[i] = v[static_cast<Eigen::Index>(dofs[i])];
  return out;
}

}  // namespace

OperatorSet assemble_operators(const Mesh& mesh, std::shared_ptr<const TaylorHoodSpace> space,
                               const PhysicsConfig& physics) {
  physics.validate();
  const TaylorHoodSpace& s = *space;
  if (s.cell_nodes.size() != mesh.triangles.size() || s.vertex_count != mesh.nodes.size())
    throw ConfigError("space does not match mesh");
  OperatorSet ops;
  ops.space = space;
  ops.viscosity = physics.viscosity;
  auto pattern = std::make_shared<detail::AssemblyPattern>(s);
  ops.pattern = pattern;
  ops.stiffness = pattern->zero_matrix();
  ops.X_u = pattern->zero_matrix();
  std::vector<Eigen::Triplet<double>> btrip, ptrip;
  btrip.reserve(mesh.triangles.size() * 36);
  ptrip.reserve(mesh.triangles.size() * 9);
  ops.cells.reserve(mesh.triangles.size());
  for (std::size_t c = 0; c < mesh.triangles.size(); ++c) {
    ops.cells.push_back(detail::cell_geometry(mesh, c));
    const auto loc = scalar_local(ops.cells.back());
    pattern->scatter(ops.stiffness, c, block_diagonal(loc.stiffness));
    pattern->scatter(ops.X_u, c, block_diagonal(loc.stiffness + loc.mass));
    const auto dofs = detail::cell_velocity_dofs(s, c);
    const auto& tri = mesh.triangles[c];
    for (int k = 0; k < 3; ++k) {
      for (int i = 0; i < 12; ++i)
        btrip.emplace_back(static_cast<int>(tri[k]), static_cast<int>(dofs[i]), loc.divergence(k, i));
      for (int l = 0; l < 3; ++l)
        ptrip.emplace_back(static_cast<int>(tri[k]), static_cast<int>(tri[l]), loc.pressure_mass(k, l));
    }
  }
  const auto np = static_cast<Eigen::Index>(s.pressure_dofs());
  const auto nu = static_cast<Eigen::Index>(s.velocity_dofs());
  ops.B.resize(np, nu);
  ops.B.setFromTriplets(btrip.begin(), btrip.end());
  ops.B.makeCompressed();
  ops.X_p.resize(np, np);
  ops.X_p.setFromTriplets(ptrip.begin(), ptrip.end());
  ops.X_p.makeCompressed();
  ops.A = physics.viscosity * ops.stiffness;

  // Parabolic inlet profile over the inlet's extent.
  const auto pos = p2_node_positions(mesh, s);
  double ymin = std::numeric_limits<double>::infinity(), ymax = -ymin;
  for (const auto& be : mesh.boundary)
    if (be.tag == geometry::BoundaryTag::inlet)
      for (auto v : be.nodes) {
        ymin = std::min(ymin, mesh.nodes[v].y());
        ymax = std::max(ymax, mesh.nodes[v].y());
      }
  ops.lifting = VectorXd::Zero(nu);
  const double h = ymax - ymin;
  for (auto d : s.inlet_dofs) {
    if (d >= s.scalar_count()) continue;  // y component stays zero
    const double y = pos[d].y();
    ops.lifting[static_cast<Eigen::Index>(d)] =
        physics.inlet_velocity * 4.0 * (y - ymin) * (ymax - y) / (h * h);
  }
  ops.f = -(ops.A * ops.lifting);
  ops.g = -(ops.B * ops.lifting);
  return ops;
}

InnerProducts assemble_inner_products(const Mesh& mesh, const TaylorHoodSpace& space) {
  PhysicsConfig unit;
  unit.viscosity = 1.0;
  auto ops = assemble_operators(mesh, std::make_shared<TaylorHoodSpace>(space), unit);
  return {std::move(ops.X_u), std::move(ops.X_p)};
}

namespace {

enum class ConvectionPart { advection, full_jacobian };

SpMat assemble_convection(const OperatorSet& ops, const VectorXd& w, ConvectionPart part) {
  const auto& s = *ops.space;
  if (w.size() != static_cast<Eigen::Index>(s.velocity_dofs()))
    throw ConfigError("velocity vector has the wrong length");
  const auto& ref = detail::reference_element();
  SpMat m = ops.pattern->zero_matrix();
  std::array<Vec2, 6> grad;
  for (std::size_t c = 0; c < ops.cells.size(); ++c) {
    const auto dofs = detail::cell_velocity_dofs(s, c);
    const auto wl = gather(w, dofs);
    Local12 local = Local12::Zero();
    for (std::size_t q = 0; q < detail::kQuadraturePoints; ++q) {
      detail::shape_gradients(ops.cells[c], q, grad);
      const double wq = ref.weights[q] * ops.cells[c].area;
      Vec2 wv = Vec2::Zero();
      Eigen::Matrix2d gu = Eigen::Matrix2d::Zero();  // gu(d, c) = d w_d / d x_c
      for (int b = 0; b < 6; ++b) {
        wv += ref.value[q][b] * Vec2(wl[b], wl[6 + b]);
        gu.row(0) += wl[b] * grad[b].transpose();
        gu.row(1) += wl[6 + b] * grad[b].transpose();
      }
      for (int a = 0; a < 6; ++a) {
        const double na = wq * ref.value[q][a];
        for (int b = 0; b < 6; ++b) {
          const double adv = na * wv.dot(grad[b]);
          local(a, b) += adv;
          local(6 + a, 6 + b) += adv;
          if (part == ConvectionPart::full_jacobian) {
            const double nn = na * ref.value[q][b];
            for (int dcomp = 0; dcomp < 2; ++dcomp)
              for (int ccomp = 0; ccomp < 2; ++ccomp)
                local(6 * dcomp + a, 6 * ccomp + b) += nn * gu(dcomp, ccomp);
          }
        }
      }
    }
    ops.pattern->scatter(m, c, local);
  }
  return m;
}

}  // namespace

SpMat OperatorSet::convection(const VectorXd& w) const {
  return assemble_convection(*this, w, ConvectionPart::advection);
}

SpMat OperatorSet::convection_jacobian(const VectorXd& u) const {
  return assemble_convection(*this, u, ConvectionPart::full_jacobian);
}

VectorXd OperatorSet::convection_action(const VectorXd& u) const {
  const auto& s = *space;
  if (u.size() != static_cast<Eigen::Index>(s.velocity_dofs()))
    throw ConfigError("velocity vector has the wrong length");
  const auto& ref = detail::reference_element();
  VectorXd out = VectorXd::Zero(u.size());
  std::array<Vec2, 6> grad;
  for (std::size_t c = 0; c < cells.size(); ++c) {
    const auto dofs = detail::cell_velocity_dofs(s, c);
    const auto ul = gather(u, dofs);
    Eigen::Matrix<double, 12, 1> r = Eigen::Matrix<double, 12, 1>::Zero();
    for (std::size_t q = 0; q < detail::kQuadraturePoints; ++q) {
      detail::shape_gradients(cells[c], q, grad);
      const double wq = ref.weights[q] * cells[c].area;
      Vec2 uv = Vec2::Zero();
      Eigen::Matrix2d gu = Eigen::Matrix2d::Zero();
      for (int b = 0; b < 6; ++b) {
        uv += ref.value[q][b] * Vec2(ul[b], ul[6 + b]);
        gu.row(0) += ul[b] * grad[b].transpose();
        gu.row(1) += ul[6 + b] * grad[b].transpose();
      }
      const Vec2 adv = gu * uv;
      for (int a = 0; a < 6; ++a) {
        r[a] += wq * ref.value[q][a] * adv.x();
        r[6 + a] += wq * ref.value[q][a] * adv.y();
      }
    }
    for (int i = 0; i < 12; ++i) out[static_cast<Eigen::Index>(dofs[i])] += r[i];
  }
  return out;
}

}  // namespace asrom::fem
