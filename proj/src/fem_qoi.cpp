#include <algorithm>
#include <cmath>
#include <istream>
#include <ostream>

#include "asrom/error.hpp"
#include "asrom/fem.hpp"
#include "asrom/format.hpp"
#include "asrom/rng.hpp"
#include "fem_internal.hpp"

namespace asrom::fem {

double section_pressure_average(const VectorXd& p, const geometry::Mesh& mesh,
                                const std::vector<geometry::Edge>& section) {
  if (section.empty()) throw ConfigError("empty section");
  double integral = 0.0, length = 0.0;
  for (const auto& e : section) {
    if (e[0] >= mesh.nodes.size() || e[1] >= mesh.nodes.size() ||
        static_cast<Eigen::Index>(std::max(e[0], e[1])) >= p.size())
      throw ConfigError("section edge references a missing node");
    const double h = (mesh.nodes[e[0]] - mesh.nodes[e[1]]).norm();
    integral += 0.5 * h * (p[static_cast<Eigen::Index>(e[0])] + p[static_cast<Eigen::Index>(e[1])]);
    length += h;
  }
  return integral / length;
}

std::array<double, geometry::kSectionCount> section_pressures(const VectorXd& p,
                                                              const geometry::Mesh& mesh) {
  std::array<double, geometry::kSectionCount> out{};
  for (std::size_t s = 0; s < geometry::kSectionCount; ++s)
    out[s] = section_pressure_average(p, mesh, mesh.sections[s]);
  return out;
}

QoIParts qoi_parts(const VectorXd& p, const geometry::Mesh& mesh) {
  const auto P = section_pressures(p, mesh);
  const double dl = P[0] - P[1], dr = P[0] - P[2];
  if (dl == 0.0 || dr == 0.0) throw NumericalError("zero total pressure drop");
  return {(P[3] - P[4]) / dl, (P[3] - P[5]) / dr};
}

double qoi(const VectorXd& p, const geometry::Mesh& mesh) { return qoi_parts(p, mesh).total(); }

// ---------------------------------------------------------------------------

namespace {

SpMat free_block(const SpMat& m, const TaylorHoodSpace& s) {
  std::vector<Eigen::Triplet<double>> trip;
  trip.reserve(static_cast<std::size_t>(m.nonZeros()));
  for (int k = 0; k < m.outerSize(); ++k)
    for (SpMat::InnerIterator it(m, k); it; ++it) {
      const auto r = s.free_index[static_cast<std::size_t>(it.row())];
      const auto c = s.free_index[static_cast<std::size_t>(it.col())];
      if (r >= 0 && c >= 0) trip.emplace_back(static_cast<int>(r), static_cast<int>(c), it.value());
    }
  const auto nf = static_cast<Eigen::Index>(s.free_count());
  SpMat out(nf, nf);
  out.setFromTriplets(trip.begin(), trip.end());
  return out;
}

}  // namespace

SupremizerSolver::SupremizerSolver(const SpMat& X_u, std::shared_ptr<const TaylorHoodSpace> space)
    : space_(std::move(space)) {
  ldlt_.compute(free_block(X_u, *space_));
  if (ldlt_.info() != Eigen::Success) throw NumericalError("inner product factorization failed");
}

MatrixXd SupremizerSolver::solve(const SpMat& B, const MatrixXd& P) const {
  const auto& s = *space_;
  const MatrixXd rhs_full = B.transpose() * P;
  MatrixXd rhs(static_cast<Eigen::Index>(s.free_count()), P.cols());
  for (std::size_t i = 0; i < s.free_dofs.size(); ++i)
    rhs.row(static_cast<Eigen::Index>(i)) = rhs_full.row(static_cast<Eigen::Index>(s.free_dofs[i]));
  const MatrixXd x = ldlt_.solve(rhs);
  MatrixXd out = MatrixXd::Zero(rhs_full.rows(), P.cols());
  for (std::size_t i = 0; i < s.free_dofs.size(); ++i)
    out.row(static_cast<Eigen::Index>(s.free_dofs[i])) = x.row(static_cast<Eigen::Index>(i));
  return out;
}

VectorXd SupremizerSolver::solve(const SpMat& B, const VectorXd& p) const {
  return solve(B, MatrixXd(p)).col(0);
}

VectorXd supremizer(const OperatorSet& ops, const VectorXd& p) {
  return SupremizerSolver(ops.X_u, ops.space).solve(ops.B, p);
}

double inf_sup_constant(const OperatorSet& ops, const InfSupOptions& options) {
  const auto& s = *ops.space;
  const SpMat X = free_block(ops.X_u, s);
  std::vector<Eigen::Triplet<double>> trip;
  for (int k = 0; k < ops.B.outerSize(); ++k)
    for (SpMat::InnerIterator it(ops.B, k); it; ++it) {
      const auto c = s.free_index[static_cast<std::size_t>(it.col())];
      if (c >= 0) trip.emplace_back(static_cast<int>(it.row()), static_cast<int>(c), it.value());
    }
  const auto nf = X.rows();
  const auto np = ops.B.rows();
  for (int k = 0; k < X.outerSize(); ++k)
    for (SpMat::InnerIterator it(X, k); it; ++it)
      trip.emplace_back(static_cast<int>(it.row() + np), static_cast<int>(it.col() + np), it.value());
  // Saddle matrix ordered [pressure; velocity]: [[0, B], [B^T, X]].
  const std::size_t b_count = trip.size() - static_cast<std::size_t>(X.nonZeros());
  for (std::size_t i = 0; i < b_count; ++i) {
    const auto t = trip[i];
    trip[i] = Eigen::Triplet<double>(t.row(), t.col() + static_cast<int>(np), t.value());
    trip.emplace_back(t.col() + static_cast<int>(np), t.row(), t.value());
  }
  SpMat K(np + nf, np + nf);
  K.setFromTriplets(trip.begin(), trip.end());
  K.makeCompressed();
  detail::SparseLUSolver lu;
  lu.compute(K);
  if (lu.info() != Eigen::Success) throw SingularSystem("inf-sup saddle matrix is singular", 0.0);
  const SpMat& M = ops.X_p;

  // T = S^{-1} M is self-adjoint in the M inner product; its top eigenvalue is 1/beta^2.
  auto apply_T = [&](const VectorXd& v) {
    VectorXd rhs = VectorXd::Zero(np + nf);
    rhs.head(np) = M * v;
    const VectorXd z = lu.solve(rhs);
    return VectorXd(-z.head(np));
  };
  auto m_norm = [&](const VectorXd& v) { return std::sqrt(v.dot(M * v)); };

  const int kmax = std::max(2, std::min<int>(options.krylov_dimension, static_cast<int>(np)));
  Rng rng(options.seed);
  VectorXd start(np);
  for (Eigen::Index i = 0; i < np; ++i) start[i] = rng.uniform(-1.0, 1.0);
  start /= m_norm(start);
  double theta = 0.0;
  for (int restart = 0; restart <= options.max_restarts; ++restart) {
    MatrixXd V(np, kmax);
    MatrixXd MV(np, kmax);
    Eigen::VectorXd alpha(kmax), beta(kmax);
    V.col(0) = start;
    MV.col(0) = M * start;
    int k = 0;
    for (; k < kmax; ++k) {
      VectorXd w = apply_T(V.col(k));
      alpha[k] = MV.col(k).dot(w);
      // Full reorthogonalization in the M inner product (twice for stability).
      for (int pass = 0; pass < 2; ++pass) w -= V.leftCols(k + 1) * (MV.leftCols(k + 1).transpose() * w);
      const double b = m_norm(w);
      beta[k] = b;
      if (k + 1 == kmax || b < 1e-14 * std::abs(alpha[k])) {
        ++k;
        break;
      }
      V.col(k + 1) = w / b;
      MV.col(k + 1) = M * V.col(k + 1);
    }
    MatrixXd Tk = MatrixXd::Zero(k, k);
    for (int i = 0; i < k; ++i) {
      Tk(i, i) = alpha[i];
      if (i + 1 < k) Tk(i, i + 1) = Tk(i + 1, i) = beta[i];
    }
    Eigen::SelfAdjointEigenSolver<MatrixXd> es(Tk);
    const VectorXd y = es.eigenvectors().col(k - 1);
    theta = es.eigenvalues()[k - 1];
    const double residual = std::abs(beta[k - 1] * y[k - 1]);
    start = V.leftCols(k) * y;
    start /= m_norm(start);
    if (residual <= options.tolerance * std::abs(theta)) break;
  }
  if (!(theta > 0.0)) throw NumericalError("inf-sup eigenvalue estimate is not positive");
  return 1.0 / std::sqrt(theta);
}

// ---------------------------------------------------------------------------

namespace {

void expect(std::istream& is, const std::string& token) {
  std::string got;
  if (!(is >> got) || got != token) throw ConfigError("expected '" + token + "', got '" + got + "'");
}

template <class T>
T read_value(std::istream& is, const char* what) {
  T v{};
  if (!(is >> v)) throw ConfigError(std::string("malformed ") + what);
  return v;
}

void write_vector(std::ostream& os, const char* name, const VectorXd& v) {
  os << name << ' ' << v.size() << '\n';
  for (Eigen::Index i = 0; i < v.size(); ++i) os << fmt17(v[i]) << '\n';
}

VectorXd read_vector(std::istream& is, const char* name) {
  expect(is, name);
  const auto n = read_value<long long>(is, name);
  if (n < 0) throw ConfigError(std::string("negative length for ") + name);
  VectorXd v(n);
  for (long long i = 0; i < n; ++i) v[i] = read_value<double>(is, name);
  return v;
}

}  // namespace

void write_solution(std::ostream& os, const HFSolution& sol) {
  os << "HFSOL v1\n";
  os << "MU " << sol.mu.size();
  for (Eigen::Index i = 0; i < sol.mu.size(); ++i) os << ' ' << fmt17(sol.mu[i]);
  os << "\nQOI " << fmt17(sol.qoi) << '\n';
  write_vector(os, "U", sol.u);
  write_vector(os, "P", sol.p);
  os << "NEWTON " << sol.newton_iterations << ' ' << sol.continuation_steps << ' '
     << fmt17(sol.residual_norm) << '\n';
  write_vector(os, "HISTORY",
               Eigen::Map<const VectorXd>(sol.residual_history.data(),
                                          static_cast<Eigen::Index>(sol.residual_history.size())));
}

HFSolution read_solution(std::istream& is) {
  expect(is, "HFSOL");
  expect(is, "v1");
  HFSolution sol;
  sol.mu = read_vector(is, "MU");
  expect(is, "QOI");
  sol.qoi = read_value<double>(is, "qoi");
  sol.u = read_vector(is, "U");
  sol.p = read_vector(is, "P");
  expect(is, "NEWTON");
  sol.newton_iterations = read_value<int>(is, "iteration count");
  sol.continuation_steps = read_value<int>(is, "continuation count");
  sol.residual_norm = read_value<double>(is, "residual norm");
  const VectorXd h = read_vector(is, "HISTORY");
  sol.residual_history.assign(h.data(), h.data() + h.size());
  return sol;
}

void write_matrix(std::ostream& os, const SpMat& m) {
  std::vector<Eigen::Triplet<double>> entries;
  for (int k = 0; k < m.outerSize(); ++k)
    for (SpMat::InnerIterator it(m, k); it; ++it)
      entries.emplace_back(static_cast<int>(it.row()), static_cast<int>(it.col()), it.value());
  std::sort(entries.begin(), entries.end(), [](const auto& a, const auto& b) {
    return a.row() != b.row() ? a.row() < b.row() : a.col() < b.col();
  });
  os << "MATRIX v1\n" << m.rows() << ' ' << m.cols() << ' ' << entries.size() << '\n';
  for (const auto& e : entries) os << e.row() << ' ' << e.col() << ' ' << fmt17(e.value()) << '\n';
}

SpMat read_matrix(std::istream& is) {
  expect(is, "MATRIX");
  expect(is, "v1");
  const auto rows = read_value<long long>(is, "row count");
  const auto cols = read_value<long long>(is, "column count");
  const auto nnz = read_value<long long>(is, "entry count");
  if (rows < 0 || cols < 0 || nnz < 0) throw ConfigError("negative matrix dimensions");
  std::vector<Eigen::Triplet<double>> trip;
  trip.reserve(static_cast<std::size_t>(nnz));
  for (long long k = 0; k < nnz; ++k) {
    const auto i = read_value<long long>(is, "row index");
    const auto j = read_value<long long>(is, "column index");
    const auto v = read_value<double>(is, "entry");
    if (i < 0 || i >= rows || j < 0 || j >= cols) throw ConfigError("matrix index out of range");
    trip.emplace_back(static_cast<int>(i), static_cast<int>(j), v);
  }
  SpMat m(rows, cols);
  m.setFromTriplets(trip.begin(), trip.end());
  m.makeCompressed();
  return m;
}

}  // namespace asrom::fem
