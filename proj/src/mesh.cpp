#include <algorithm>
#include <cmath>
#include <fstream>
#include <map>
#include <set>
#include <sstream>

#include "asrom/error.hpp"
#include "asrom/format.hpp"
#include "asrom/geometry.hpp"

namespace asrom::geometry {

std::string to_string(BoundaryTag tag) {
  switch (tag) {
    case BoundaryTag::inlet: return "inlet";
    case BoundaryTag::wall: return "wall";
    case BoundaryTag::outlet_left: return "outlet_left";
    case BoundaryTag::outlet_right: return "outlet_right";
  }
  return "?";
}

BoundaryTag boundary_tag_from_string(const std::string& s) {
  if (s == "inlet") return BoundaryTag::inlet;
  if (s == "wall") return BoundaryTag::wall;
  if (s == "outlet_left") return BoundaryTag::outlet_left;
  if (s == "outlet_right") return BoundaryTag::outlet_right;
  throw ConfigError("unknown boundary tag '" + s + "'");
}

double Mesh::signed_area(std::size_t cell) const {
  const auto& t = triangles[cell];
  const Vec2 e1 = nodes[t[1]] - nodes[t[0]];
  const Vec2 e2 = nodes[t[2]] - nodes[t[0]];
  return 0.5 * (e1.x() * e2.y() - e1.y() * e2.x());
}

namespace {

Edge sorted(Edge e) {
  if (e[0] > e[1]) std::swap(e[0], e[1]);
  return e;
}

std::map<Edge, int> edge_cell_counts(const Mesh& mesh) {
  std::map<Edge, int> counts;
  for (const auto& t : mesh.triangles)
    for (int k = 0; k < 3; ++k) ++counts[sorted({t[k], t[(k + 1) % 3]})];
  return counts;
}

}  // namespace

void validate(const Mesh& mesh) {
  const std::size_t n = mesh.nodes.size();
  for (std::size_t c = 0; c < mesh.triangles.size(); ++c) {
    for (auto v : mesh.triangles[c])
      if (v >= n) throw ConfigError("cell " + std::to_string(c) + " references missing node");
    if (!(mesh.signed_area(c) > 0.0))
      throw ConfigError("cell " + std::to_string(c) + " has nonpositive area");
  }
  const auto counts = edge_cell_counts(mesh);
  std::set<Edge> tagged;
  for (const auto& be : mesh.boundary) {
    const Edge e = sorted(be.nodes);
    if (e[1] >= n) throw ConfigError("boundary edge references missing node");
    auto it = counts.find(e);
    if (it == counts.end() || it->second != 1)
      throw ConfigError("boundary edge " + std::to_string(e[0]) + "-" + std::to_string(e[1]) +
                        " does not belong to exactly one cell");
    if (!tagged.insert(e).second) throw ConfigError("boundary edge tagged twice");
  }
  for (const auto& [e, c] : counts) {
    if (c > 2) throw ConfigError("non-manifold edge");
    if (c == 1 && !tagged.count(e)) throw ConfigError("untagged boundary edge");
  }
  std::set<std::size_t> boundary_nodes;
  for (const auto& e : tagged) boundary_nodes.insert({e[0], e[1]});

  std::set<Edge> used;
  for (std::size_t s = 0; s < kSectionCount; ++s) {
    const auto& sec = mesh.sections[s];
    const std::string name = "section S" + std::to_string(s);
    if (sec.empty()) throw ConfigError(name + " is empty");
    std::map<std::size_t, std::vector<std::size_t>> adj;
    for (const auto& raw : sec) {
      const Edge e = sorted(raw);
      if (!counts.count(e)) throw ConfigError(name + " contains a non-mesh edge");
      if (!used.insert(e).second) throw ConfigError(name + " shares an edge with another section");
      adj[e[0]].push_back(e[1]);
      adj[e[1]].push_back(e[0]);
    }
    std::vector<std::size_t> ends;
    for (const auto& [v, nb] : adj) {
      if (nb.size() > 2) throw ConfigError(name + " branches");
      if (nb.size() == 1) ends.push_back(v);
    }
    if (ends.size() != 2) throw ConfigError(name + " is not an open polyline");
    std::set<std::size_t> seen{ends[0]};
    std::vector<std::size_t> stack{ends[0]};
    while (!stack.empty()) {
      const auto v = stack.back();
      stack.pop_back();
      for (auto w : adj[v])
        if (seen.insert(w).second) stack.push_back(w);
    }
    if (seen.size() != adj.size()) throw ConfigError(name + " is disconnected");
    if (!boundary_nodes.count(ends[0]) || !boundary_nodes.count(ends[1]))
      throw ConfigError(name + " does not span the channel");
  }
}

void write_mesh(std::ostream& os, const Mesh& mesh) {
  os << "MESH2D v1\n";
  os << "NODES " << mesh.nodes.size() << '\n';
  for (std::size_t i = 0; i < mesh.nodes.size(); ++i)
    os << i << ' ' << fmt17(mesh.nodes[i].x()) << ' ' << fmt17(mesh.nodes[i].y()) << '\n';
  os << "CELLS " << mesh.triangles.size() << '\n';
  for (std::size_t i = 0; i < mesh.triangles.size(); ++i) {
    const auto& t = mesh.triangles[i];
    os << i << ' ' << t[0] << ' ' << t[1] << ' ' << t[2] << '\n';
  }
  os << "BOUNDARY " << mesh.boundary.size() << '\n';
  for (const auto& be : mesh.boundary)
    os << be.nodes[0] << ' ' << be.nodes[1] << ' ' << to_string(be.tag) << '\n';
  os << "SECTIONS " << kSectionCount << '\n';
  for (std::size_t s = 0; s < kSectionCount; ++s)
    for (const auto& e : mesh.sections[s]) os << 'S' << s << ' ' << e[0] << ' ' << e[1] << '\n';
}

namespace {

void expect_word(std::istream& is, const std::string& word) {
  std::string w;
  if (!(is >> w) || w != word) throw ConfigError("mesh file: expected '" + word + "'");
}

}  // namespace

Mesh read_mesh(std::istream& is) {
  Mesh mesh;
  std::string magic, version;
  is >> magic >> version;
  if (magic != "MESH2D" || version != "v1") throw ConfigError("mesh file: bad header");
  std::size_t n = 0;
  expect_word(is, "NODES");
  is >> n;
  mesh.nodes.resize(n);
  for (std::size_t i = 0; i < n; ++i) {
    std::size_t id;
    double x, y;
    if (!(is >> id >> x >> y) || id != i) throw ConfigError("mesh file: bad node line");
    mesh.nodes[i] = Vec2(x, y);
  }
  expect_word(is, "CELLS");
  is >> n;
  mesh.triangles.resize(n);
  for (std::size_t i = 0; i < n; ++i) {
    std::size_t id;
    auto& t = mesh.triangles[i];
    if (!(is >> id >> t[0] >> t[1] >> t[2]) || id != i)
      throw ConfigError("mesh file: bad cell line");
  }
  expect_word(is, "BOUNDARY");
  is >> n;
  mesh.boundary.resize(n);
  for (std::size_t i = 0; i < n; ++i) {
    std::string tag;
    auto& be = mesh.boundary[i];
    if (!(is >> be.nodes[0] >> be.nodes[1] >> tag)) throw ConfigError("mesh file: bad boundary line");
    be.tag = boundary_tag_from_string(tag);
  }
  expect_word(is, "SECTIONS");
  is >> n;
  if (n != kSectionCount) throw ConfigError("mesh file: expected 6 sections");
  std::string label;
  while (is >> label) {
    if (label.size() != 2 || label[0] != 'S' || label[1] < '0' || label[1] > '5')
      throw ConfigError("mesh file: bad section label '" + label + "'");
    Edge e;
    if (!(is >> e[0] >> e[1])) throw ConfigError("mesh file: bad section line");
    mesh.sections[static_cast<std::size_t>(label[1] - '0')].push_back(e);
  }
  return mesh;
}

void write_mesh_file(const std::string& path, const Mesh& mesh) {
  std::ofstream out(path);
  if (!out) throw ConfigError("cannot write " + path);
  write_mesh(out, mesh);
}

Mesh read_mesh_file(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw ConfigError("cannot open mesh file " + path);
  return read_mesh(in);
}

std::vector<Edge> vertical_section(const Mesh& mesh, double x, double tol) {
  std::set<Edge> edges;
  for (const auto& t : mesh.triangles)
    for (int k = 0; k < 3; ++k) {
      const Edge e = sorted({t[k], t[(k + 1) % 3]});
      if (std::abs(mesh.nodes[e[0]].x() - x) <= tol && std::abs(mesh.nodes[e[1]].x() - x) <= tol)
        edges.insert(e);
    }
  return {edges.begin(), edges.end()};
}

}  // namespace asrom::geometry
