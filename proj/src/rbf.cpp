#include <cmath>
#include <fstream>
#include <sstream>

#include "asrom/csv.hpp"
#include "asrom/error.hpp"
#include "asrom/format.hpp"
#include "asrom/geometry.hpp"

namespace asrom::geometry {

std::size_t ControlPointSet::movable_count() const {
  std::size_t m = 0;
  for (bool b : movable) m += b ? 1 : 0;
  return m;
}

void write_control_points_file(const std::string& path, const ControlPointSet& cps) {
  Eigen::MatrixXd rows(cps.size(), 5);
  for (std::size_t i = 0; i < cps.size(); ++i)
    rows.row(i) << cps.positions[i].x(), cps.positions[i].y(), cps.movable[i] ? 1.0 : 0.0,
        cps.normals[i].x(), cps.normals[i].y();
  write_csv(path, {"x", "y", "movable", "nx", "ny"}, rows);
}

ControlPointSet read_control_points_file(const std::string& path) {
  const auto table = read_csv(path);
  const auto cx = table.column("x"), cy = table.column("y"), cm = table.column("movable"),
             cnx = table.column("nx"), cny = table.column("ny");
  ControlPointSet cps;
  for (const auto& r : table.rows) {
    cps.positions.emplace_back(r[cx], r[cy]);
    cps.movable.push_back(r[cm] != 0.0);
    cps.normals.emplace_back(r[cnx], r[cny]);
  }
  return cps;
}

MorphConfig MorphConfig::with_default_box(std::size_t m, double radius) {
  MorphConfig c;
  c.radius = radius;
  c.box_low = Eigen::VectorXd::Zero(static_cast<Eigen::Index>(m));
  c.box_high = Eigen::VectorXd::Constant(static_cast<Eigen::Index>(m), 0.3);
  return c;
}

bool MorphConfig::contains(const Eigen::VectorXd& mu) const {
  if (mu.size() != box_low.size()) return false;
  return ((mu - box_low).array() >= 0.0).all() && ((box_high - mu).array() >= 0.0).all();
}

void MorphConfig::validate() const {
  if (!(radius > 0.0)) throw ConfigError("morph radius must be positive");
  if (box_low.size() != box_high.size() || box_low.size() == 0)
    throw ConfigError("parameter box bounds must have equal, nonzero length");
  for (Eigen::Index i = 0; i < box_low.size(); ++i)
    if (!(box_low[i] < box_high[i])) throw ConfigError("parameter box requires low < high");
}

RBFCoefficients RBFCoefficients::identity(std::size_t control_points) {
  RBFCoefficients r;
  r.G = Eigen::MatrixX2d::Zero(static_cast<Eigen::Index>(control_points), 2);
  return r;
}

double thin_plate_spline(double r, double R) {
  if (!(R > 0.0)) throw ConfigError("thin plate spline radius must be positive");
  if (r <= 0.0) return 0.0;
  const double s = r / R;
  return s * s * std::log(s);
}

Eigen::MatrixX2d control_point_targets(const ControlPointSet& cps, const Eigen::VectorXd& mu,
                                       const MorphConfig& config) {
  if (static_cast<std::size_t>(mu.size()) != cps.movable_count())
    throw ConfigError("parameter dimension does not match the movable control points");
  if (!config.contains(mu)) throw ConfigError("parameter outside the box D");
  Eigen::MatrixX2d y(static_cast<Eigen::Index>(cps.size()), 2);
  Eigen::Index k = 0;
  for (std::size_t i = 0; i < cps.size(); ++i) {
    Vec2 p = cps.positions[i];
    if (cps.movable[i]) p -= mu[k++] * cps.normals[i];
    y.row(static_cast<Eigen::Index>(i)) = p.transpose();
  }
  return y;
}

namespace {

void check_layout(const ControlPointSet& cps) {
  const std::size_t n = cps.size();
  if (n < 3) throw SingularSystem("RBF needs at least three control points", 0.0);
  for (std::size_t i = 0; i < n; ++i)
    for (std::size_t j = i + 1; j < n; ++j)
      if ((cps.positions[i] - cps.positions[j]).norm() == 0.0)
        throw SingularSystem("duplicate control points " + std::to_string(i) + " and " +
                                 std::to_string(j),
                             0.0);
  // Not all collinear: some triple with nonzero area relative to the spread.
  double scale = 0.0;
  for (std::size_t i = 1; i < n; ++i)
    scale = std::max(scale, (cps.positions[i] - cps.positions[0]).norm());
  const Vec2 a = cps.positions[0];
  std::size_t far = 1;
  for (std::size_t i = 1; i < n; ++i)
    if ((cps.positions[i] - a).norm() > (cps.positions[far] - a).norm()) far = i;
  const Vec2 d = cps.positions[far] - a;
  double worst = 0.0;
  for (std::size_t i = 0; i < n; ++i) {
    const Vec2 e = cps.positions[i] - a;
    worst = std::max(worst, std::abs(d.x() * e.y() - d.y() * e.x()));
  }
  if (worst <= 1e-12 * scale * scale)
    throw SingularSystem("control points are collinear; affine part is not unique", 0.0);
}

}  // namespace

RBFCoefficients solve_rbf(const ControlPointSet& cps, const Eigen::MatrixX2d& targets, double R) {
  if (!(R > 0.0)) throw ConfigError("RBF radius must be positive");
  const auto n = static_cast<Eigen::Index>(cps.size());
  if (targets.rows() != n) throw ConfigError("target count does not match control points");
  check_layout(cps);

  bool unchanged = true;
  for (Eigen::Index i = 0; i < n && unchanged; ++i)
    unchanged = targets(i, 0) == cps.positions[i].x() && targets(i, 1) == cps.positions[i].y();
  if (unchanged) return RBFCoefficients::identity(cps.size());

  Eigen::MatrixXd K = Eigen::MatrixXd::Zero(n + 3, n + 3);
  for (Eigen::Index i = 0; i < n; ++i) {
    for (Eigen::Index j = 0; j < n; ++j)
      K(i, j) = thin_plate_spline((cps.positions[i] - cps.positions[j]).norm(), R);
    K(i, n) = K(n, i) = 1.0;
    K(i, n + 1) = K(n + 1, i) = cps.positions[i].x();
    K(i, n + 2) = K(n + 2, i) = cps.positions[i].y();
  }
  Eigen::MatrixXd rhs = Eigen::MatrixXd::Zero(n + 3, 2);
  rhs.topRows(n) = targets;

  Eigen::PartialPivLU<Eigen::MatrixXd> lu(K);
  const double rcond = lu.rcond();
  if (!(rcond >= 1e-12))
    throw SingularSystem("RBF system is ill-conditioned (rcond " + fmt17(rcond) + ")", rcond);
  const Eigen::MatrixXd sol = lu.solve(rhs);

  RBFCoefficients out;
  out.G = sol.topRows(n);
  out.c = sol.row(n).transpose();
  out.Q.col(0) = sol.row(n + 1).transpose();
  out.Q.col(1) = sol.row(n + 2).transpose();
  return out;
}

Vec2 evaluate_map(const RBFCoefficients& coeffs, const ControlPointSet& cps, double R,
                  const Vec2& x) {
  Vec2 y = coeffs.c + coeffs.Q * x;
  for (std::size_t i = 0; i < cps.size(); ++i) {
    const auto row = coeffs.G.row(static_cast<Eigen::Index>(i));
    if (row(0) == 0.0 && row(1) == 0.0) continue;
    y += thin_plate_spline((x - cps.positions[i]).norm(), R) * row.transpose();
  }
  return y;
}

Mesh apply_morph(const Mesh& mesh, const RBFCoefficients& coeffs, const ControlPointSet& cps,
                 double R) {
  if (static_cast<std::size_t>(coeffs.G.rows()) != cps.size())
    throw ConfigError("RBF coefficients do not match the control point set");
  Mesh out = mesh;
  for (auto& p : out.nodes) p = evaluate_map(coeffs, cps, R, p);
  for (std::size_t c = 0; c < out.triangles.size(); ++c)
    if (!(out.signed_area(c) > 0.0))
      throw InvertedCell("morph inverted cell " + std::to_string(c), c);
  return out;
}

Mesh morph(const Mesh& mesh, const ControlPointSet& cps, const MorphConfig& config,
           const Eigen::VectorXd& mu) {
  const auto targets = control_point_targets(cps, mu, config);
  return apply_morph(mesh, solve_rbf(cps, targets, config.radius), cps, config.radius);
}

RBFResiduals rbf_residuals(const RBFCoefficients& coeffs, const ControlPointSet& cps,
                           const Eigen::MatrixX2d& targets, double R) {
  RBFResiduals r;
  Eigen::Matrix2d moment = Eigen::Matrix2d::Zero();
  for (std::size_t i = 0; i < cps.size(); ++i) {
    const auto k = static_cast<Eigen::Index>(i);
    const Vec2 y = evaluate_map(coeffs, cps, R, cps.positions[i]);
    r.interpolation = std::max(r.interpolation, (y - targets.row(k).transpose()).cwiseAbs().maxCoeff());
    moment += cps.positions[i] * coeffs.G.row(k);
  }
  r.force = coeffs.G.colwise().sum().cwiseAbs().maxCoeff();
  r.moment = moment.cwiseAbs().maxCoeff();
  return r;
}

}  // namespace asrom::geometry
