#include <cmath>
#include <limits>

#include "asrom/error.hpp"
#include "asrom/geometry.hpp"

namespace asrom::geometry {

void BifurcationGeometry::validate() const {
  if (!(inlet_length > 0.0) || !(branch_length > 0.0) || !(channel_width > 0.0))
    throw ConfigError("bifurcation lengths and width must be positive");
  if (!(branch_angle_deg > 0.0 && branch_angle_deg < 80.0))
    throw ConfigError("branch angle must lie in (0, 80) degrees");
  if (resolution < 4) throw ConfigError("resolution must be at least 4 elements across");
}

namespace {

// Axial/transverse spacing ratio in the branches; slightly shorter cells keep the
// stenosis compression from pushing aspect ratios past the junction cells.
constexpr double kBranchAxialSpacing = 0.8;

using Grid = std::vector<std::vector<std::size_t>>;  // [i][j] -> node

struct Block {
  Vec2 p00, p10, p11, p01;
  int nx, ny;

  Vec2 at(int i, int j) const {
    const double xi = static_cast<double>(i) / nx;
    const double eta = static_cast<double>(j) / ny;
    return (1.0 - xi) * (1.0 - eta) * p00 + xi * (1.0 - eta) * p10 + xi * eta * p11 +
           (1.0 - xi) * eta * p01;
  }
};

/// Fills grid nodes of a block; column 0 may be pre-seeded from a neighbour's last column.
Grid fill_block(const Block& b, Mesh& mesh, const std::vector<std::size_t>* first_column) {
  Grid g(static_cast<std::size_t>(b.nx + 1), std::vector<std::size_t>(static_cast<std::size_t>(b.ny + 1)));
  for (int i = 0; i <= b.nx; ++i)
    for (int j = 0; j <= b.ny; ++j) {
      if (i == 0 && first_column) {
        g[0][static_cast<std::size_t>(j)] = (*first_column)[static_cast<std::size_t>(j)];
        continue;
      }
      g[static_cast<std::size_t>(i)][static_cast<std::size_t>(j)] = mesh.nodes.size();
      mesh.nodes.push_back(b.at(i, j));
    }
  return g;
}

void triangulate_block(const Grid& g, int nx, int ny, Mesh& mesh) {
  for (int i = 0; i < nx; ++i)
    for (int j = 0; j < ny; ++j) {
      const auto ui = static_cast<std::size_t>(i), uj = static_cast<std::size_t>(j);
      const std::size_t a = g[ui][uj], b = g[ui + 1][uj], c = g[ui + 1][uj + 1], d = g[ui][uj + 1];
      const double ac = (mesh.nodes[a] - mesh.nodes[c]).norm();
      const double bd = (mesh.nodes[b] - mesh.nodes[d]).norm();
      if (bd < ac * (1.0 - 1e-12)) {
        mesh.triangles.push_back({a, b, d});
        mesh.triangles.push_back({b, c, d});
      } else {
        mesh.triangles.push_back({a, b, c});
        mesh.triangles.push_back({a, c, d});
      }
    }
}

std::vector<Edge> column_edges(const Grid& g, int i, int ny) {
  std::vector<Edge> out;
  for (int j = 0; j < ny; ++j)
    out.push_back({g[static_cast<std::size_t>(i)][static_cast<std::size_t>(j)],
                   g[static_cast<std::size_t>(i)][static_cast<std::size_t>(j + 1)]});
  return out;
}

std::vector<Edge> row_edges(const Grid& g, int j, int nx) {
  std::vector<Edge> out;
  for (int i = 0; i < nx; ++i)
    out.push_back({g[static_cast<std::size_t>(i)][static_cast<std::size_t>(j)],
                   g[static_cast<std::size_t>(i + 1)][static_cast<std::size_t>(j)]});
  return out;
}

void add_boundary(Mesh& mesh, const std::vector<Edge>& edges, BoundaryTag tag) {
  for (const auto& e : edges) mesh.boundary.push_back({e, tag});
}

int cells_along(double length, double width, int resolution, int minimum) {
  return std::max(minimum, static_cast<int>(std::lround(length * resolution / width)));
}

}  // namespace

BifurcationDomain generate_bifurcation(const BifurcationGeometry& geo) {
  geo.validate();
  const double W = geo.channel_width;
  const int n = geo.resolution;
  const double theta = geo.branch_angle_deg * M_PI / 180.0;
  const Vec2 dir(std::cos(theta), std::sin(theta));
  const Vec2 across(-std::sin(theta), std::cos(theta));
  const double junction_length = W * (0.5 + std::tan(theta));

  const Block trunk{{-geo.inlet_length, 0.0}, {0.0, 0.0}, {0.0, W}, {-geo.inlet_length, W},
                    cells_along(geo.inlet_length, W, n, 3), n};
  const Vec2 jin = junction_length * dir;
  const Vec2 jout = jin + W * across;
  const Block junction{{0.0, 0.0}, jin, jout, {0.0, W}, cells_along(junction_length, W, n, 1), n};
  const Vec2 bend = geo.branch_length * dir;
  const Block branch{jin, jin + bend, jout + bend, jout, cells_along(geo.branch_length, W * kBranchAxialSpacing, n, 12), n};

  BifurcationDomain dom;
  Mesh& mesh = dom.mesh;
  const Grid gt = fill_block(trunk, mesh, nullptr);
  const Grid gj = fill_block(junction, mesh, &gt.back());
  const Grid gb = fill_block(branch, mesh, &gj.back());
  triangulate_block(gt, trunk.nx, n, mesh);
  triangulate_block(gj, junction.nx, n, mesh);
  triangulate_block(gb, branch.nx, n, mesh);

  // Mirror the upper half across y = 0; centerline nodes are shared.
  const std::size_t upper_nodes = mesh.nodes.size();
  std::vector<std::size_t> mirror(upper_nodes);
  for (std::size_t v = 0; v < upper_nodes; ++v) {
    if (mesh.nodes[v].y() == 0.0) {
      mirror[v] = v;
    } else {
      mirror[v] = mesh.nodes.size();
      mesh.nodes.emplace_back(mesh.nodes[v].x(), -mesh.nodes[v].y());
    }
  }
  const std::size_t upper_cells = mesh.triangles.size();
  for (std::size_t c = 0; c < upper_cells; ++c) {
    const auto t = mesh.triangles[c];
    mesh.triangles.push_back({mirror[t[0]], mirror[t[2]], mirror[t[1]]});
  }
  auto mirrored = [&](std::vector<Edge> edges) {
    for (auto& e : edges) e = {mirror[e[0]], mirror[e[1]]};
    return edges;
  };

  const auto inlet = column_edges(gt, 0, n);
  const auto outlet = column_edges(gb, branch.nx, n);
  std::vector<Edge> walls = row_edges(gt, n, trunk.nx);
  for (const auto& e : row_edges(gj, 0, junction.nx)) walls.push_back(e);
  for (const auto& e : row_edges(gj, n, junction.nx)) walls.push_back(e);
  for (const auto& e : row_edges(gb, 0, branch.nx)) walls.push_back(e);
  for (const auto& e : row_edges(gb, n, branch.nx)) walls.push_back(e);
  add_boundary(mesh, inlet, BoundaryTag::inlet);
  add_boundary(mesh, mirrored(inlet), BoundaryTag::inlet);
  add_boundary(mesh, walls, BoundaryTag::wall);
  add_boundary(mesh, mirrored(walls), BoundaryTag::wall);
  add_boundary(mesh, outlet, BoundaryTag::outlet_left);
  add_boundary(mesh, mirrored(outlet), BoundaryTag::outlet_right);

  auto full_column = [&](const Grid& g, int i) {
    auto up = column_edges(g, i, n);
    auto down = mirrored(up);
    up.insert(up.end(), down.begin(), down.end());
    return up;
  };
  const int i0 = std::max(1, static_cast<int>(std::lround(0.25 * trunk.nx)));
  const int i3 = std::max(i0 + 1, trunk.nx - std::max(1, static_cast<int>(std::lround(0.5 * n))));
  const int i4 = static_cast<int>(std::lround(0.6 * branch.nx));
  const int i1 = std::min(branch.nx - 1, static_cast<int>(std::lround(0.9 * branch.nx)));
  mesh.sections[0] = full_column(gt, i0);
  mesh.sections[3] = full_column(gt, i3);
  mesh.sections[1] = column_edges(gb, i1, n);
  mesh.sections[2] = mirrored(mesh.sections[1]);
  mesh.sections[4] = column_edges(gb, i4, n);
  mesh.sections[5] = mirrored(mesh.sections[4]);

  for (std::size_t c = 0; c < mesh.triangles.size(); ++c)
    if (!(mesh.signed_area(c) > 0.0))
      throw ConfigError("bifurcation parameters produce a self-intersecting branch");

  // Movable control points: three on the outer wall, two on the inner wall of each
  // branch, a quarter to five twelfths of the way along it.
  ControlPointSet& cps = dom.control_points;
  const std::array<double, 3> outer{1.0 / 4.0, 1.0 / 3.0, 5.0 / 12.0};
  const std::array<double, 2> inner{1.0 / 4.0, 5.0 / 12.0};
  std::vector<std::pair<std::size_t, Vec2>> upper_movable;
  auto col = [&](double f) {
    return static_cast<std::size_t>(std::lround(f * branch.nx));
  };
  for (double f : outer) upper_movable.push_back({gb[col(f)][static_cast<std::size_t>(n)], across});
  for (double f : inner) upper_movable.push_back({gb[col(f)][0], -across});
  for (const auto& [v, nrm] : upper_movable) {
    cps.positions.push_back(mesh.nodes[v]);
    cps.movable.push_back(true);
    cps.normals.push_back(nrm);
  }
  for (const auto& [v, nrm] : upper_movable) {
    cps.positions.push_back(mesh.nodes[mirror[v]]);
    cps.movable.push_back(true);
    cps.normals.emplace_back(nrm.x(), -nrm.y());
  }
  auto add_fixed = [&](std::size_t v) {
    cps.positions.push_back(mesh.nodes[v]);
    cps.movable.push_back(false);
    cps.normals.push_back(Vec2::Zero());
  };
  for (int j = n; j >= 0; --j) add_fixed(gt[0][static_cast<std::size_t>(j)]);
  for (int j = 1; j <= n; ++j) add_fixed(mirror[gt[0][static_cast<std::size_t>(j)]]);
  for (int j = 0; j <= n; ++j) add_fixed(gb.back()[static_cast<std::size_t>(j)]);
  for (int j = 0; j <= n; ++j) add_fixed(mirror[gb.back()[static_cast<std::size_t>(j)]]);
  return dom;
}

Mesh generate_bifurcation_mesh(const BifurcationGeometry& geometry) {
  return generate_bifurcation(geometry).mesh;
}

Mesh generate_channel_mesh(double length, double height, int nx, int ny) {
  if (!(length > 0.0) || !(height > 0.0)) throw ConfigError("channel dimensions must be positive");
  if (nx < 7 || ny < 1) throw ConfigError("channel needs nx >= 7 and ny >= 1");
  Mesh mesh;
  Grid g(static_cast<std::size_t>(nx + 1), std::vector<std::size_t>(static_cast<std::size_t>(ny + 1)));
  for (int i = 0; i <= nx; ++i)
    for (int j = 0; j <= ny; ++j) {
      g[static_cast<std::size_t>(i)][static_cast<std::size_t>(j)] = mesh.nodes.size();
      mesh.nodes.emplace_back(length * i / nx, height * j / ny);
    }
  triangulate_block(g, nx, ny, mesh);
  add_boundary(mesh, column_edges(g, 0, ny), BoundaryTag::inlet);
  add_boundary(mesh, column_edges(g, nx, ny), BoundaryTag::outlet_left);
  add_boundary(mesh, row_edges(g, 0, nx), BoundaryTag::wall);
  add_boundary(mesh, row_edges(g, ny, nx), BoundaryTag::wall);
  for (std::size_t s = 0; s < kSectionCount; ++s)
    mesh.sections[s] = column_edges(g, static_cast<int>(std::lround((s + 1.0) * nx / 7.0)), ny);
  return mesh;
}

double aspect_ratio(const Vec2& a, const Vec2& b, const Vec2& c) {
  const double la = (b - c).norm(), lb = (c - a).norm(), lc = (a - b).norm();
  const Vec2 e1 = b - a, e2 = c - a;
  const double area = 0.5 * std::abs(e1.x() * e2.y() - e1.y() * e2.x());
  if (area <= 0.0) return std::numeric_limits<double>::infinity();
  const double s = 0.5 * (la + lb + lc);
  return la * lb * lc * s / (8.0 * area * area);
}

AspectRatioReport aspect_ratio_report(const Mesh& mesh, std::optional<double> reference_max) {
  AspectRatioReport r;
  r.ratios.reserve(mesh.triangles.size());
  double sum = 0.0;
  std::size_t above = 0;
  r.min = std::numeric_limits<double>::infinity();
  r.max = 0.0;
  for (const auto& t : mesh.triangles) {
    const double q = aspect_ratio(mesh.nodes[t[0]], mesh.nodes[t[1]], mesh.nodes[t[2]]);
    r.ratios.push_back(q);
    r.min = std::min(r.min, q);
    r.max = std::max(r.max, q);
    sum += q;
    if (reference_max && q > *reference_max) ++above;
  }
  if (!r.ratios.empty()) {
    r.mean = sum / static_cast<double>(r.ratios.size());
    r.fraction_above_reference = static_cast<double>(above) / static_cast<double>(r.ratios.size());
  }
  return r;
}

}  // namespace asrom::geometry
