#pragma once

#include <Eigen/Dense>
#include <array>
#include <cstddef>
#include <iosfwd>
#include <optional>
#include <string>
#include <vector>

namespace asrom::geometry {

using Vec2 = Eigen::Vector2d;
using Edge = std::array<std::size_t, 2>;
using Triangle = std::array<std::size_t, 3>;

enum class BoundaryTag { inlet, wall, outlet_left, outlet_right };

std::string to_string(BoundaryTag tag);
BoundaryTag boundary_tag_from_string(const std::string& s);

struct BoundaryEdge {
  Edge nodes;
  BoundaryTag tag;
};

/// Number of transverse measurement sections. S0 inlet side, S1/S2 outlet side
/// (left/right branch), S3 before the stenoses, S4/S5 after them (left/right).
inline constexpr std::size_t kSectionCount = 6;

/// 2D triangulation with tagged boundary edges and measurement sections.
struct Mesh {
  std::vector<Vec2> nodes;
  std::vector<Triangle> triangles;  ///< counterclockwise
  std::vector<BoundaryEdge> boundary;
  std::array<std::vector<Edge>, kSectionCount> sections;

  std::size_t node_count() const { return nodes.size(); }
  std::size_t cell_count() const { return triangles.size(); }
  double signed_area(std::size_t cell) const;
};

/// Throws ConfigError describing the first violated mesh invariant.
void validate(const Mesh& mesh);

void write_mesh(std::ostream& os, const Mesh& mesh);
Mesh read_mesh(std::istream& is);
void write_mesh_file(const std::string& path, const Mesh& mesh);
Mesh read_mesh_file(const std::string& path);

/// Edges of `mesh` lying on the vertical line x = `x` (within `tol`), as a section.
std::vector<Edge> vertical_section(const Mesh& mesh, double x, double tol = 1e-12);

// ---------------------------------------------------------------------------
// RBF control points and morphing

/// RBF control points; the first `m` flagged movable entries are driven by mu_1..mu_m
/// in the order they appear.
struct ControlPointSet {
  std::vector<Vec2> positions;
  std::vector<bool> movable;
  std::vector<Vec2> normals;  ///< outward unit wall normal (zero for fixed points)

  std::size_t size() const { return positions.size(); }
  std::size_t movable_count() const;
  std::size_t fixed_count() const { return size() - movable_count(); }
};

void write_control_points_file(const std::string& path, const ControlPointSet& cps);
ControlPointSet read_control_points_file(const std::string& path);

struct MorphConfig {
  double radius = 1.0;
  Eigen::VectorXd box_low;
  Eigen::VectorXd box_high;

  /// Default box [0, 0.3]^m.
  static MorphConfig with_default_box(std::size_t m, double radius = 1.0);
  std::size_t dimension() const { return static_cast<std::size_t>(box_low.size()); }
  bool contains(const Eigen::VectorXd& mu) const;
  void validate() const;
};

/// Solved map x -> c + Q x + G^T d(x).
struct RBFCoefficients {
  Vec2 c = Vec2::Zero();
  Eigen::Matrix2d Q = Eigen::Matrix2d::Identity();
  Eigen::MatrixX2d G;

  static RBFCoefficients identity(std::size_t control_points);
};

/// (r/R)^2 ln(r/R), with the analytic limit 0 at r = 0.
double thin_plate_spline(double r, double R);

/// Fixed points map to themselves; the i-th movable point moves by -mu_i n_i.
Eigen::MatrixX2d control_point_targets(const ControlPointSet& cps, const Eigen::VectorXd& mu,
                                       const MorphConfig& config);

/// Solves the (N_C+3)-square interpolation system (one right-hand side per coordinate)
/// with partial pivoting. Throws SingularSystem when rcond < 1e-12.
RBFCoefficients solve_rbf(const ControlPointSet& cps, const Eigen::MatrixX2d& targets, double R);

Vec2 evaluate_map(const RBFCoefficients& coeffs, const ControlPointSet& cps, double R,
                  const Vec2& x);

/// Replaces every node by its image; throws InvertedCell on a nonpositive area.
Mesh apply_morph(const Mesh& mesh, const RBFCoefficients& coeffs, const ControlPointSet& cps,
                 double R);

/// targets + solve + apply in one call.
Mesh morph(const Mesh& mesh, const ControlPointSet& cps, const MorphConfig& config,
           const Eigen::VectorXd& mu);

/// Residuals of a solved map: interpolation max-norm and the two moment constraints.
struct RBFResiduals {
  double interpolation = 0.0;
  double force = 0.0;   ///< max |sum_i G_i|
  double moment = 0.0;  ///< max |G^T x_C|
};
RBFResiduals rbf_residuals(const RBFCoefficients& coeffs, const ControlPointSet& cps,
                           const Eigen::MatrixX2d& targets, double R);

// ---------------------------------------------------------------------------
// Mesh generation

struct BifurcationGeometry {
  double inlet_length = 10.0;
  double branch_length = 15.0;
  double channel_width = 2.5;  ///< branch width; the trunk is twice as wide
  double branch_angle_deg = 30.0;
  int resolution = 8;          ///< elements across one branch / one trunk half

  void validate() const;
};

struct BifurcationDomain {
  Mesh mesh;
  ControlPointSet control_points;
};

/// Symmetric Y-bifurcation: trunk [-L_in, 0] x [-W, W], a transition block per branch,
/// then a straight strip of width W at +/- angle. Upper half is the left branch; the
/// lower half is its exact mirror image. Ten movable control points (five per branch,
/// on both walls just after the bifurcation), fixed points on the inlet and outlets.
BifurcationDomain generate_bifurcation(const BifurcationGeometry& geometry);
Mesh generate_bifurcation_mesh(const BifurcationGeometry& geometry);

/// Straight channel [0, L] x [0, H]: inlet at x = 0, outlet (tagged outlet_left) at x = L.
Mesh generate_channel_mesh(double length, double height, int nx, int ny);

// ---------------------------------------------------------------------------
// Quality

/// circumradius / (2 * inradius); 1 for equilateral, +inf when degenerate.
double aspect_ratio(const Vec2& a, const Vec2& b, const Vec2& c);

struct AspectRatioReport {
  std::vector<double> ratios;
  double min = 0.0;
  double max = 0.0;
  double mean = 0.0;
  double fraction_above_reference = 0.0;  ///< 0 when no reference is given
};

AspectRatioReport aspect_ratio_report(const Mesh& mesh,
                                      std::optional<double> reference_max = std::nullopt);

}  // namespace asrom::geometry
