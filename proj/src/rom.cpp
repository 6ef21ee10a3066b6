#include "asrom/rom.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <optional>

#include "asrom/error.hpp"
#include "asrom/format.hpp"
#include "asrom/parallel.hpp"

namespace asrom::rom {

SnapshotSet collect_snapshots(const MatrixXd& params, const SnapshotSolver& solver,
                              const VectorXd& lifting, unsigned threads) {
  const auto n = static_cast<std::size_t>(params.rows());
  std::vector<std::optional<SnapshotSample>> results(n);
  parallel_for(n, [&](std::size_t i) {
    try {
      results[i] = solver(params.row(static_cast<Eigen::Index>(i)).transpose());
    } catch (const NumericalError&) {
      results[i].reset();
    }
  }, threads);
  SnapshotSet out;
  std::vector<std::size_t> ok;
  for (std::size_t i = 0; i < n; ++i) (results[i] ? ok : out.failed).push_back(i);
  if (ok.size() < std::min<std::size_t>(2, n) || ok.empty())
    throw NumericalError("only " + std::to_string(ok.size()) + " of " + std::to_string(n) + " snapshots solved");
  const auto k = static_cast<Eigen::Index>(ok.size());
  const auto& first = results[ok[0]]->solution;
  out.S_u.resize(first.u.size(), k);
  out.S_p.resize(first.p.size(), k);
  out.S_s.resize(first.u.size(), k);
  out.parameters.resize(k, params.cols());
  out.qoi.resize(k);
  for (Eigen::Index j = 0; j < k; ++j) {
    const auto i = ok[static_cast<std::size_t>(j)];
    const auto& r = *results[i];
    out.S_u.col(j) = r.solution.u - lifting;
    out.S_p.col(j) = r.solution.p;
    out.S_s.col(j) = r.supremizer;
    out.parameters.row(j) = params.row(static_cast<Eigen::Index>(i));
    out.qoi[j] = r.solution.qoi;
    out.newton_iterations.push_back(r.solution.newton_iterations);
  }
  return out;
}

VectorXd reference_lifting(const fem::OperatorSet& reference_ops) {
  return fem::stokes_solve(reference_ops).u;
}

PODResult pod(const MatrixXd& S, const SpMat& X, int max_modes) {
  if (S.cols() == 0 || S.rows() == 0) throw ConfigError("empty snapshot matrix");
  if (X.rows() != S.rows() || X.cols() != S.rows()) throw ConfigError("inner product does not match snapshots");
  // With X = P^T L L^T P the X-weighted snapshots Y = L^T P S have the same singular
  // values as S in the X norm. Householder QR of Y and an SVD of the small R stay
  // backward stable on rank-deficient sets, where Gram and Gram-Schmidt routes do not.
  Eigen::SimplicialLLT<SpMat> llt(X);
  if (llt.info() != Eigen::Success) throw NumericalError("inner-product matrix is not positive definite");
  const MatrixXd Y = llt.matrixU() * (llt.permutationP() * S);
  const Eigen::Index k = S.cols(), r = std::min(S.rows(), k);
  Eigen::HouseholderQR<MatrixXd> qr(Y);
  const MatrixXd R = qr.matrixQR().topRows(r).triangularView<Eigen::Upper>();
  Eigen::JacobiSVD<MatrixXd> svd(R, Eigen::ComputeFullU);
  PODResult out;
  out.singular_values = VectorXd::Zero(k);
  out.singular_values.head(svd.singularValues().size()) = svd.singularValues();
  if (!(out.singular_values[0] > 0.0)) throw NumericalError("zero snapshot matrix");
  const double floor = 1e-10 * out.singular_values[0];
  Eigen::Index rank = 0;
  while (rank < r && out.singular_values[rank] > floor) ++rank;
  const Eigen::Index keep = max_modes < 0 ? rank : std::min<Eigen::Index>(rank, max_modes);
  MatrixXd W = MatrixXd::Zero(S.rows(), keep);
  W.topRows(r) = svd.matrixU().leftCols(keep);
  W = qr.householderQ() * W;
  out.modes = llt.permutationPinv() * MatrixXd(llt.matrixU().solve(W));
  // modes lie in the range of S: rows where every snapshot vanishes (Dirichlet dofs) are exactly zero
  for (Eigen::Index i = 0; i < S.rows(); ++i)
    if (S.row(i).cwiseAbs().maxCoeff() == 0.0) out.modes.row(i).setZero();
  return out;
}

int modes_for_tolerance(const VectorXd& singular_values, double tolerance) {
  const double total = singular_values.squaredNorm();
  if (!(total > 0.0)) throw ConfigError("all singular values vanish");
  double acc = 0.0;
  for (Eigen::Index i = 0; i < singular_values.size(); ++i) {
    acc += singular_values[i] * singular_values[i];
    if (acc / total >= 1.0 - tolerance * tolerance) return static_cast<int>(i + 1);
  }
  return static_cast<int>(singular_values.size());
}

MatrixXd orthonormalize(const MatrixXd& V, const SpMat& X, double drop_tolerance) {
  MatrixXd Q(V.rows(), V.cols()), XQ(V.rows(), V.cols());
  Eigen::Index kept = 0;
  for (Eigen::Index j = 0; j < V.cols(); ++j) {
    VectorXd v = V.col(j);
    const double original = std::sqrt(v.dot(X * v));
    for (int pass = 0; pass < 2 && kept > 0; ++pass) v -= Q.leftCols(kept) * (XQ.leftCols(kept).transpose() * v);
    const VectorXd Xv = X * v;
    const double norm = std::sqrt(std::max(v.dot(Xv), 0.0));
    if (!(norm > drop_tolerance * original) || norm == 0.0) continue;
    Q.col(kept) = v / norm;
    XQ.col(kept) = Xv / norm;
    ++kept;
  }
  return Q.leftCols(kept);
}

PODBasis truncate(const PODBasis& basis, int N_u, int N_s, int N_p, const SpMat& X_u) {
  if (N_u < 1 || N_s < 0 || N_p < 1) throw ConfigError("reduced dimensions must be positive");
  if (N_u > basis.velocity_modes.cols() || N_s > basis.supremizer_modes.cols() ||
      N_p > basis.pressure_modes.cols())
    throw ConfigError("requested more modes than the basis holds");
  PODBasis out = basis;
  MatrixXd V(basis.velocity_modes.rows(), N_u + N_s);
  V << basis.velocity_modes.leftCols(N_u), basis.supremizer_modes.leftCols(N_s);
  out.Z_us = orthonormalize(V, X_u);
  out.Z_p = basis.pressure_modes.leftCols(N_p);
  out.N_u = N_u;
  out.N_s = N_s;
  out.N_p = N_p;
  return out;
}

PODBasis build_reduced_spaces(const SnapshotSet& snapshots, const VectorXd& lifting,
                              const SpMat& X_u, const SpMat& X_p, int max_modes) {
  if (lifting.size() != snapshots.S_u.rows()) throw ConfigError("lifting does not match the snapshots");
  PODBasis b;
  b.lifting = lifting;
  auto pu = pod(snapshots.S_u, X_u, max_modes);
  auto ps = pod(snapshots.S_s, X_u, max_modes);
  auto pp = pod(snapshots.S_p, X_p, max_modes);
  b.velocity_modes = std::move(pu.modes);
  b.supremizer_modes = std::move(ps.modes);
  b.pressure_modes = std::move(pp.modes);
  b.sigma_u = std::move(pu.singular_values);
  b.sigma_s = std::move(ps.singular_values);
  b.sigma_p = std::move(pp.singular_values);
  const int n = static_cast<int>(std::min({b.velocity_modes.cols(), b.supremizer_modes.cols(),
                                           b.pressure_modes.cols()}));
  return truncate(b, n, n, n, X_u);
}

// ---------------------------------------------------------------------------

ReducedOperators project_operators(const fem::OperatorSet& ops, const PODBasis& basis) {
  if (basis.Z_us.rows() != ops.A.rows() || basis.Z_p.rows() != ops.B.rows())
    throw ConfigError("basis does not match the operators");
  if (basis.Z_us.cols() < 1 || basis.Z_p.cols() < 1) throw ConfigError("empty reduced basis");
  if (basis.lifting.size() != ops.lifting.size()) throw ConfigError("basis lifting has the wrong length");
  const auto& s = *ops.space;
  double mismatch = 0.0, scale = 0.0;
  for (std::size_t d = 0; d < s.velocity_dofs(); ++d) {
    const auto i = static_cast<Eigen::Index>(d);
    scale = std::max(scale, std::abs(ops.lifting[i]));
    if (s.is_dirichlet(d)) mismatch = std::max(mismatch, std::abs(basis.lifting[i] - ops.lifting[i]));
  }
  if (mismatch > 1e-12 * std::max(scale, 1.0)) throw ConfigError("basis lifting does not match the Dirichlet data");
  ReducedOperators red;
  red.full = &ops;
  red.Z_us = basis.Z_us;
  red.Z_p = basis.Z_p;
  red.lifting = basis.lifting;
  red.A_N = red.Z_us.transpose() * (ops.A * red.Z_us);
  red.B_N = red.Z_p.transpose() * (ops.B * red.Z_us);
  red.Al_N = red.Z_us.transpose() * (ops.A * red.lifting);
  red.Bl_N = red.Z_p.transpose() * (ops.B * red.lifting);
  return red;
}

namespace {

VectorXd reconstruct_velocity(const ReducedOperators& red, const VectorXd& w) {
  if (w.size() != red.Z_us.cols()) throw ConfigError("reduced velocity has the wrong length");
  return red.lifting + red.Z_us * w;
}

}  // namespace

MatrixXd project_convection(const ReducedOperators& red, const VectorXd& w) {
  const SpMat C = red.full->convection(reconstruct_velocity(red, w));
  return red.Z_us.transpose() * (C * red.Z_us);
}

VectorXd reduced_residual(const ReducedOperators& red, const VectorXd& w, const VectorXd& q) {
  if (q.size() != red.Z_p.cols()) throw ConfigError("reduced pressure has the wrong length");
  const VectorXd u = reconstruct_velocity(red, w);
  const auto nu = red.Z_us.cols(), np = red.Z_p.cols();
  VectorXd r(nu + np);
  r.head(nu) = red.A_N * w + red.Al_N + red.Z_us.transpose() * red.full->convection_action(u) +
               red.B_N.transpose() * q;
  r.tail(np) = red.B_N * w + red.Bl_N;
  return r;
}

MatrixXd reduced_jacobian(const ReducedOperators& red, const VectorXd& w) {
  const auto nu = red.Z_us.cols(), np = red.Z_p.cols();
  const SpMat Jc = red.full->convection_jacobian(reconstruct_velocity(red, w));
  MatrixXd J = MatrixXd::Zero(nu + np, nu + np);
  J.topLeftCorner(nu, nu) = red.A_N + red.Z_us.transpose() * (Jc * red.Z_us);
  J.topRightCorner(nu, np) = red.B_N.transpose();
  J.bottomLeftCorner(np, nu) = red.B_N;
  return J;
}

namespace {

VectorXd dense_solve(const MatrixXd& J, const VectorXd& rhs, const char* what) {
  Eigen::FullPivLU<MatrixXd> lu(J);
  if (!lu.isInvertible()) throw SingularSystem(std::string(what) + ": reduced matrix is singular", lu.rcond());
  return lu.solve(rhs);
}

ROMSolution finish(const ReducedOperators& red, const VectorXd& x) {
  const auto nu = red.Z_us.cols();
  ROMSolution s;
  s.w = x.head(nu);
  s.q = x.tail(x.size() - nu);
  s.u = reconstruct_velocity(red, s.w);
  s.p = red.Z_p * s.q;
  return s;
}

}  // namespace

ROMSolution reduced_stokes(const ReducedOperators& red) {
  const auto nu = red.Z_us.cols(), np = red.Z_p.cols();
  MatrixXd K = MatrixXd::Zero(nu + np, nu + np);
  K.topLeftCorner(nu, nu) = red.A_N;
  K.topRightCorner(nu, np) = red.B_N.transpose();
  K.bottomLeftCorner(np, nu) = red.B_N;
  VectorXd rhs(nu + np);
  rhs << -red.Al_N, -red.Bl_N;
  return finish(red, dense_solve(K, rhs, "reduced Stokes"));
}

ROMSolution rom_solve(const ReducedOperators& red, const geometry::Mesh& mesh,
                      const fem::NewtonOptions& options) {
  ROMSolution s = reduced_stokes(red);
  const auto nu = red.Z_us.cols();
  VectorXd x(s.w.size() + s.q.size());
  x << s.w, s.q;
  VectorXd r = reduced_residual(red, s.w, s.q);
  const double r0 = r.norm();
  std::vector<double> history{r0};
  double rn = r0;
  int it = 0;
  auto done = [&](double v) {
    return v <= options.absolute_tolerance || v <= options.relative_tolerance * r0;
  };
  while (!done(rn)) {
    if (it == options.max_iterations || !std::isfinite(rn))
      throw NonConvergence("reduced Newton did not converge", history);
    const VectorXd dx = dense_solve(reduced_jacobian(red, x.head(nu)), r, "reduced Newton");
    // backtracking on the residual norm; the full step is taken whenever it reduces it enough
    double step = 1.0;
    VectorXd trial, rt;
    for (;;) {
      trial = x - step * dx;
      rt = reduced_residual(red, trial.head(nu), trial.tail(trial.size() - nu));
      if (rt.norm() <= (1.0 - 1e-4 * step) * rn || step <= 1.0 / 64.0) break;
      step *= 0.5;
    }
    x = std::move(trial);
    r = std::move(rt);
    ++it;
    rn = r.norm();
    history.push_back(rn);
  }
  s = finish(red, x);
  s.newton_iterations = it;
  s.residual_norm = rn;
  s.residual_history = std::move(history);
  s.qoi = fem::qoi(s.p, mesh);
  return s;
}

double reduced_inf_sup(const ReducedOperators& red) {
  Eigen::JacobiSVD<MatrixXd> svd(red.B_N);
  const auto& sv = svd.singularValues();
  if (red.B_N.rows() > red.B_N.cols()) return 0.0;
  return sv[sv.size() - 1];
}

double x_norm(const VectorXd& v, const SpMat& X) { return std::sqrt(std::max(v.dot(X * v), 0.0)); }

PointErrors compare(const ROMSolution& rom, const fem::HFSolution& hf, const SpMat& X_u,
                    const SpMat& X_p) {
  PointErrors e;
  e.ok = true;
  e.err_u = x_norm(hf.u - rom.u, X_u) / x_norm(hf.u, X_u);
  e.err_p = x_norm(hf.p - rom.p, X_p) / x_norm(hf.p, X_p);
  e.err_qoi = std::abs(hf.qoi - rom.qoi) / std::abs(hf.qoi);
  return e;
}

std::vector<ErrorRow> aggregate_errors(const std::vector<int>& Ns,
                                       const std::vector<std::vector<PointErrors>>& errors) {
  std::vector<ErrorRow> rows;
  for (std::size_t j = 0; j < Ns.size(); ++j) {
    ErrorRow row;
    row.N = Ns[j];
    for (const auto& point : errors) {
      if (j >= point.size()) throw ConfigError("error table is ragged");
      const auto& e = point[j];
      if (!e.ok) {
        ++row.failed;
        continue;
      }
      ++row.evaluated;
      row.err_u += e.err_u;
      row.err_p += e.err_p;
      row.err_qoi += e.err_qoi;
    }
    if (row.evaluated > 0) {
      row.err_u /= row.evaluated;
      row.err_p /= row.evaluated;
      row.err_qoi /= row.evaluated;
    } else {
      row.err_u = row.err_p = row.err_qoi = std::nan("");
    }
    rows.push_back(row);
  }
  return rows;
}

void write_error_report(const std::string& path, const std::vector<ErrorRow>& rows,
                        const std::string& variant) {
  std::ofstream out(path);
  if (!out) throw ConfigError("cannot write " + path);
  out << "N,err_u,err_p,err_qoi,variant\n";
  for (const auto& r : rows)
    out << r.N << ',' << fmt17(r.err_u) << ',' << fmt17(r.err_p) << ',' << fmt17(r.err_qoi) << ','
        << variant << '\n';
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

constexpr const char* kFamilies[3] = {"velocity", "supremizer", "pressure"};

}  // namespace

void write_basis(std::ostream& os, const PODBasis& b) {
  const MatrixXd* modes[3] = {&b.velocity_modes, &b.supremizer_modes, &b.pressure_modes};
  const VectorXd* sigma[3] = {&b.sigma_u, &b.sigma_s, &b.sigma_p};
  os << "PODBASIS v1\n";
  os << "RETAINED " << b.N_u << ' ' << b.N_s << ' ' << b.N_p << '\n';
  for (int f = 0; f < 3; ++f)
    os << "FAMILY " << kFamilies[f] << ' ' << modes[f]->rows() << ' ' << modes[f]->cols() << ' '
       << sigma[f]->size() << '\n';
  for (int f = 0; f < 3; ++f) {
    os << "SV " << kFamilies[f];
    for (Eigen::Index i = 0; i < sigma[f]->size(); ++i) os << ' ' << fmt17((*sigma[f])[i]);
    os << '\n';
  }
  os << "LIFTING " << b.lifting.size() << '\n';
  for (Eigen::Index i = 0; i < b.lifting.size(); ++i) os << fmt17(b.lifting[i]) << '\n';
  for (int f = 0; f < 3; ++f)
    for (Eigen::Index j = 0; j < modes[f]->cols(); ++j) {
      os << "COLUMN " << kFamilies[f] << ' ' << j << '\n';
      for (Eigen::Index i = 0; i < modes[f]->rows(); ++i) os << fmt17((*modes[f])(i, j)) << '\n';
    }
}

PODBasis read_basis(std::istream& is) {
  expect(is, "PODBASIS");
  expect(is, "v1");
  PODBasis b;
  expect(is, "RETAINED");
  b.N_u = read_value<int>(is, "retained count");
  b.N_s = read_value<int>(is, "retained count");
  b.N_p = read_value<int>(is, "retained count");
  MatrixXd* modes[3] = {&b.velocity_modes, &b.supremizer_modes, &b.pressure_modes};
  VectorXd* sigma[3] = {&b.sigma_u, &b.sigma_s, &b.sigma_p};
  for (int f = 0; f < 3; ++f) {
    expect(is, "FAMILY");
    expect(is, kFamilies[f]);
    const auto rows = read_value<long long>(is, "row count");
    const auto cols = read_value<long long>(is, "column count");
    const auto nsv = read_value<long long>(is, "singular value count");
    if (rows < 0 || cols < 0 || nsv < 0) throw ConfigError("negative basis dimensions");
    modes[f]->resize(rows, cols);
    sigma[f]->resize(nsv);
  }
  for (int f = 0; f < 3; ++f) {
    expect(is, "SV");
    expect(is, kFamilies[f]);
    for (Eigen::Index i = 0; i < sigma[f]->size(); ++i) (*sigma[f])[i] = read_value<double>(is, "singular value");
  }
  expect(is, "LIFTING");
  const auto nl = read_value<long long>(is, "lifting length");
  if (nl < 0) throw ConfigError("negative lifting length");
  b.lifting.resize(nl);
  for (Eigen::Index i = 0; i < nl; ++i) b.lifting[i] = read_value<double>(is, "lifting entry");
  for (int f = 0; f < 3; ++f)
    for (Eigen::Index j = 0; j < modes[f]->cols(); ++j) {
      expect(is, "COLUMN");
      expect(is, kFamilies[f]);
      if (read_value<long long>(is, "column index") != j) throw ConfigError("basis columns out of order");
      for (Eigen::Index i = 0; i < modes[f]->rows(); ++i) (*modes[f])(i, j) = read_value<double>(is, "mode entry");
    }
  if (b.N_u > b.velocity_modes.cols() || b.N_s > b.supremizer_modes.cols() || b.N_p > b.pressure_modes.cols())
    throw ConfigError("retained counts exceed stored modes");
  // Z matrices are rebuilt by truncate(); the stored prefix counts say how.
  return b;
}

void write_basis_file(const std::string& path, const PODBasis& basis) {
  std::ofstream out(path);
  if (!out) throw ConfigError("cannot write " + path);
  write_basis(out, basis);
}

PODBasis read_basis_file(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw ConfigError("cannot read " + path);
  return read_basis(in);
}

void write_singular_values(const std::string& path, const PODBasis& b) {
  const auto n = b.sigma_u.size();
  if (b.sigma_s.size() != n || b.sigma_p.size() != n)
    throw ConfigError("singular value families differ in length");
  std::ofstream out(path);
  if (!out) throw ConfigError("cannot write " + path);
  out << "index,sigma_u,sigma_s,sigma_p\n";
  for (Eigen::Index i = 0; i < n; ++i)
    out << (i + 1) << ',' << fmt17(b.sigma_u[i]) << ',' << fmt17(b.sigma_s[i]) << ','
        << fmt17(b.sigma_p[i]) << '\n';
}

}  // namespace asrom::rom
