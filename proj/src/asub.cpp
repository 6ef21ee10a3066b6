#include "asrom/asub.hpp"

#include <algorithm>
#include <cmath>
#include <functional>
#include <numeric>

#include "asrom/csv.hpp"
#include "asrom/error.hpp"
#include "asrom/parallel.hpp"
#include "asrom/rng.hpp"

namespace asrom::asub {

Box Box::uniform(std::size_t m, double lo, double hi) {
  const auto n = static_cast<Eigen::Index>(m);
  return {VectorXd::Constant(n, lo), VectorXd::Constant(n, hi)};
}

bool Box::contains(const VectorXd& mu) const {
  if (mu.size() != low.size()) return false;
  return (mu.array() >= low.array()).all() && (mu.array() <= high.array()).all();
}

void Box::validate() const {
  if (low.size() == 0 || low.size() != high.size()) throw ConfigError("box bounds have inconsistent sizes");
  if (!(low.array() < high.array()).all()) throw ConfigError("box lower bounds must be below upper bounds");
}

MatrixXd sample_parameters(std::size_t n, const Box& box, std::uint64_t seed) {
  box.validate();
  Rng rng(seed);
  MatrixXd out(static_cast<Eigen::Index>(n), box.low.size());
  for (Eigen::Index i = 0; i < out.rows(); ++i)
    for (Eigen::Index j = 0; j < out.cols(); ++j) out(i, j) = rng.uniform(box.low[j], box.high[j]);
  return out;
}

GradientSet local_linear_gradients(const SampleSet& samples, int k) {
  const auto& X = samples.parameters;
  const Eigen::Index n = X.rows(), m = X.cols();
  if (samples.values.size() != n) throw ConfigError("sample values and parameters disagree in count");
  if (k < m + 1) throw ConfigError("neighborhood size must be at least m + 1");
  if (k > n) throw ConfigError("neighborhood size exceeds the sample count");
  GradientSet out;
  out.k = k;
  out.gradients.resize(n, m);
  std::vector<int> enlarged(static_cast<std::size_t>(n), 0);
  parallel_for(static_cast<std::size_t>(n), [&](std::size_t si) {
    const auto i = static_cast<Eigen::Index>(si);
    std::vector<std::pair<double, Eigen::Index>> dist(static_cast<std::size_t>(n));
    for (Eigen::Index j = 0; j < n; ++j) dist[static_cast<std::size_t>(j)] = {(X.row(j) - X.row(i)).squaredNorm(), j};
    std::sort(dist.begin(), dist.end());
    for (Eigen::Index kk = k;; kk = std::min<Eigen::Index>(kk + 5, n)) {
      MatrixXd D(kk, m + 1);
      VectorXd y(kk);
      for (Eigen::Index r = 0; r < kk; ++r) {
        const auto j = dist[static_cast<std::size_t>(r)].second;
        D(r, 0) = 1.0;
        D.row(r).tail(m) = X.row(j) - X.row(i);
        y[r] = samples.values[j];
      }
      Eigen::ColPivHouseholderQR<MatrixXd> qr(D);
      if (qr.rank() == m + 1) {
        out.gradients.row(i) = qr.solve(y).tail(m).transpose();
        break;
      }
      if (kk == n) throw NumericalError("sample set too degenerate for local linear gradients");
      enlarged[si] = 1;
    }
  });
  out.enlarged = std::accumulate(enlarged.begin(), enlarged.end(), 0);
  return out;
}

MatrixXd covariance(const MatrixXd& gradients) {
  if (gradients.rows() == 0) throw ConfigError("no gradients");
  MatrixXd s = gradients.transpose() * gradients / static_cast<double>(gradients.rows());
  return 0.5 * (s + s.transpose());
}

Eigendecomposition eigendecompose(const MatrixXd& sigma) {
  if (sigma.rows() != sigma.cols()) throw ConfigError("matrix is not square");
  const MatrixXd sym = 0.5 * (sigma + sigma.transpose());
  Eigen::SelfAdjointEigenSolver<MatrixXd> es(sym);
  if (es.info() != Eigen::Success) throw NumericalError("eigendecomposition failed");
  const Eigen::Index m = sym.rows();
  Eigendecomposition out;
  out.values = es.eigenvalues().reverse();
  out.vectors = es.eigenvectors().rowwise().reverse();
  for (Eigen::Index j = 0; j < m; ++j) {
    Eigen::Index arg = 0;
    out.vectors.col(j).cwiseAbs().maxCoeff(&arg);
    if (out.vectors(arg, j) < 0.0) out.vectors.col(j) *= -1.0;
  }
  return out;
}

BootstrapIntervals bootstrap_eigenvalues(const MatrixXd& gradients, int n_boot, std::uint64_t seed) {
  if (n_boot < 1) throw ConfigError("n_boot must be positive");
  const Eigen::Index n = gradients.rows(), m = gradients.cols();
  if (n == 0) throw ConfigError("no gradients");
  MatrixXd values(m, n_boot);
  parallel_for(static_cast<std::size_t>(n_boot), [&](std::size_t b) {
    Rng rng(derive_seed(seed, b));
    MatrixXd resampled(n, m);
    for (Eigen::Index i = 0; i < n; ++i)
      resampled.row(i) = gradients.row(static_cast<Eigen::Index>(rng.below(static_cast<std::uint64_t>(n))));
    Eigen::SelfAdjointEigenSolver<MatrixXd> es(covariance(resampled), Eigen::EigenvaluesOnly);
    values.col(static_cast<Eigen::Index>(b)) = es.eigenvalues().reverse();
  });
  return {values.rowwise().minCoeff(), values.rowwise().maxCoeff()};
}

int spectral_gap_dimension(const VectorXd& eigenvalues) {
  const Eigen::Index m = eigenvalues.size();
  if (m < 2) throw ConfigError("need at least two eigenvalues");
  int best = 1;
  double best_ratio = -1.0;
  const double floor = std::max(std::abs(eigenvalues[0]), 1e-300) * 1e-300;
  for (Eigen::Index i = 0; i + 1 < m; ++i) {
    const double ratio = std::max(eigenvalues[i], floor) / std::max(eigenvalues[i + 1], floor);
    if (ratio > best_ratio) {
      best_ratio = ratio;
      best = static_cast<int>(i + 1);
    }
  }
  return best;
}

void partition(ActiveSubspace& as, int M) {
  const auto m = static_cast<int>(as.W.cols());
  if (M < 1 || M >= m) throw ConfigError("active dimension must satisfy 1 <= M < m");
  as.M = M;
  as.W1 = as.W.leftCols(M);
  as.W2 = as.W.rightCols(m - M);
}

ActiveSubspace compute_active_subspace(const MatrixXd& gradients, int n_boot, std::uint64_t seed,
                                       int M_override) {
  ActiveSubspace as;
  as.sigma = covariance(gradients);
  const auto ed = eigendecompose(as.sigma);
  as.eigenvalues = ed.values;
  as.W = ed.vectors;
  const auto b = bootstrap_eigenvalues(gradients, n_boot, seed);
  // The point estimate is always inside its band.
  as.bootstrap_lo = b.lo.cwiseMin(as.eigenvalues);
  as.bootstrap_hi = b.hi.cwiseMax(as.eigenvalues);
  partition(as, M_override > 0 ? M_override : spectral_gap_dimension(as.eigenvalues));
  return as;
}

VectorXd project_active(const MatrixXd& W1, const VectorXd& mu) {
  if (mu.size() != W1.rows()) throw ConfigError("parameter has the wrong dimension");
  return W1.transpose() * mu;
}

LiftResult lift(const MatrixXd& W1, const VectorXd& mu_M, const Box& box) {
  if (mu_M.size() != W1.cols() || W1.rows() != box.low.size())
    throw ConfigError("active coordinates have the wrong dimension");
  const VectorXd c = box.center();
  LiftResult out;
  out.mu = c + W1 * (mu_M - W1.transpose() * c);
  for (Eigen::Index j = 0; j < out.mu.size(); ++j) {
    const double v = std::clamp(out.mu[j], box.low[j], box.high[j]);
    if (v != out.mu[j]) ++out.clamped;
    out.mu[j] = v;
  }
  return out;
}

std::vector<std::vector<int>> total_degree_exponents(int dimension, int order) {
  if (dimension < 1 || order < 0) throw ConfigError("invalid polynomial dimension or order");
  std::vector<std::vector<int>> out;
  std::vector<int> e(static_cast<std::size_t>(dimension), 0);
  for (int degree = 0; degree <= order; ++degree) {
    // Enumerate compositions of `degree` into `dimension` parts, lexicographically descending.
    std::function<void(int, int)> rec = [&](int pos, int left) {
      if (pos == dimension - 1) {
        e[static_cast<std::size_t>(pos)] = left;
        out.push_back(e);
        return;
      }
      for (int v = left; v >= 0; --v) {
        e[static_cast<std::size_t>(pos)] = v;
        rec(pos + 1, left - v);
      }
    };
    rec(0, degree);
  }
  return out;
}

namespace {

MatrixXd design_matrix(const MatrixXd& Y, const std::vector<std::vector<int>>& exponents) {
  MatrixXd D(Y.rows(), static_cast<Eigen::Index>(exponents.size()));
  for (Eigen::Index i = 0; i < Y.rows(); ++i)
    for (std::size_t t = 0; t < exponents.size(); ++t) {
      double v = 1.0;
      for (Eigen::Index j = 0; j < Y.cols(); ++j)
        for (int p = 0; p < exponents[t][static_cast<std::size_t>(j)]; ++p) v *= Y(i, j);
      D(i, static_cast<Eigen::Index>(t)) = v;
    }
  return D;
}

double relative_norm(const VectorXd& diff, const VectorXd& ref) {
  const double r = ref.norm();
  return r > 0.0 ? diff.norm() / r : diff.norm();
}

}  // namespace

ResponseSurface fit_response_surface(const SampleSet& train, const MatrixXd& W1, int order) {
  if (train.parameters.cols() != W1.rows()) throw ConfigError("W1 does not match the parameter dimension");
  ResponseSurface rs;
  rs.dimension = static_cast<int>(W1.cols());
  rs.order = order;
  rs.W1 = W1;
  rs.exponents = total_degree_exponents(rs.dimension, order);
  const auto terms = static_cast<Eigen::Index>(rs.exponents.size());
  if (train.parameters.rows() < terms)
    throw ConfigError("response surface is underdetermined: " + std::to_string(terms) +
                      " terms, " + std::to_string(train.parameters.rows()) + " samples");
  const MatrixXd D = design_matrix(train.parameters * W1, rs.exponents);
  rs.coefficients = D.colPivHouseholderQr().solve(train.values);
  rs.training_error = relative_norm(D * rs.coefficients - train.values, train.values);
  return rs;
}

double eval_surface(const ResponseSurface& rs, const VectorXd& mu) {
  const MatrixXd y = project_active(rs.W1, mu).transpose();
  return (design_matrix(y, rs.exponents) * rs.coefficients)(0, 0);
}

double relative_error(const ResponseSurface& rs, const SampleSet& test) {
  const MatrixXd D = design_matrix(test.parameters * rs.W1, rs.exponents);
  return relative_norm(D * rs.coefficients - test.values, test.values);
}

MatrixXd surrogate_error_grid(const SampleSet& train, const SampleSet& test, const MatrixXd& W,
                              int max_M, int max_order) {
  if (max_M < 1 || max_M > W.cols() || max_order < 1) throw ConfigError("invalid error-grid extent");
  MatrixXd grid(max_M, max_order);
  for (int M = 1; M <= max_M; ++M)
    for (int order = 1; order <= max_order; ++order)
      grid(M - 1, order - 1) = relative_error(fit_response_surface(train, W.leftCols(M), order), test);
  return grid;
}

MatrixXd sufficient_summary(const SampleSet& samples, const MatrixXd& W1) {
  if (W1.cols() < 1 || W1.cols() > 2) throw ConfigError("sufficient summary needs M = 1 or 2");
  MatrixXd out(samples.parameters.rows(), W1.cols() + 1);
  out.leftCols(W1.cols()) = samples.parameters * W1;
  out.col(W1.cols()) = samples.values;
  return out;
}

// ---------------------------------------------------------------------------

void write_samples(const std::string& path, const SampleSet& s) {
  auto header = prefixed_names("mu_", static_cast<std::size_t>(s.parameters.cols()));
  header.push_back("f");
  MatrixXd rows(s.parameters.rows(), s.parameters.cols() + 1);
  rows << s.parameters, s.values;
  write_csv(path, header, rows);
}

SampleSet read_samples(const std::string& path) {
  const auto t = read_csv(path);
  const std::size_t fcol = t.column("f");
  if (fcol + 1 != t.header.size()) throw ConfigError(path + ": column 'f' must be last");
  for (std::size_t j = 0; j < fcol; ++j) t.column("mu_" + std::to_string(j + 1));
  const MatrixXd m = t.matrix();
  return {m.leftCols(m.cols() - 1), m.col(m.cols() - 1)};
}

void write_gradients(const std::string& path, const MatrixXd& g) {
  write_csv(path, prefixed_names("g_", static_cast<std::size_t>(g.cols())), g);
}

MatrixXd read_gradients(const std::string& path) {
  const auto t = read_csv(path);
  for (std::size_t j = 0; j < t.header.size(); ++j) t.column("g_" + std::to_string(j + 1));
  return t.matrix();
}

void write_eigenvalues(const std::string& path, const ActiveSubspace& as) {
  const Eigen::Index m = as.eigenvalues.size();
  MatrixXd rows(m, 4);
  for (Eigen::Index i = 0; i < m; ++i)
    rows.row(i) << static_cast<double>(i + 1), as.eigenvalues[i], as.bootstrap_lo[i], as.bootstrap_hi[i];
  write_csv(path, {"index", "lambda", "lo", "hi"}, rows);
}

void write_eigenvectors(const std::string& path, const MatrixXd& W) {
  write_csv(path, prefixed_names("w_", static_cast<std::size_t>(W.cols())), W);
}

ActiveSubspace read_active_subspace(const std::string& eigenvalues_path,
                                    const std::string& eigenvectors_path, int M) {
  const auto ev = read_csv(eigenvalues_path);
  const auto cl = ev.column("lambda"), clo = ev.column("lo"), chi = ev.column("hi");
  const auto vt = read_csv(eigenvectors_path);
  ActiveSubspace as;
  as.W = vt.matrix();
  const auto m = static_cast<Eigen::Index>(ev.rows.size());
  if (as.W.rows() != m || as.W.cols() != m) throw ConfigError("eigenvector table does not match eigenvalues");
  as.eigenvalues.resize(m);
  as.bootstrap_lo.resize(m);
  as.bootstrap_hi.resize(m);
  for (Eigen::Index i = 0; i < m; ++i) {
    const auto& r = ev.rows[static_cast<std::size_t>(i)];
    as.eigenvalues[i] = r[cl];
    as.bootstrap_lo[i] = r[clo];
    as.bootstrap_hi[i] = r[chi];
  }
  as.sigma = as.W * as.eigenvalues.asDiagonal() * as.W.transpose();
  partition(as, M);
  return as;
}

}  // namespace asrom::asub
