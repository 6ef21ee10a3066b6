#include <cmath>

#include "asrom/error.hpp"
#include "asrom/fem.hpp"
#include "fem_internal.hpp"

namespace asrom::fem {

namespace {

double effective_viscosity(const OperatorSet& ops, double viscosity) {
  return viscosity > 0.0 ? viscosity : ops.viscosity;
}

/// Rows of m restricted to the free velocity dofs (columns optionally too).
SpMat restrict_velocity(const SpMat& m, const TaylorHoodSpace& s, bool rows, bool cols) {
  std::vector<Eigen::Triplet<double>> trip;
  trip.reserve(static_cast<std::size_t>(m.nonZeros()));
  for (int k = 0; k < m.outerSize(); ++k)
    for (SpMat::InnerIterator it(m, k); it; ++it) {
      std::ptrdiff_t r = it.row(), c = it.col();
      if (rows) {
        r = s.free_index[static_cast<std::size_t>(r)];
        if (r < 0) continue;
      }
      if (cols) {
        c = s.free_index[static_cast<std::size_t>(c)];
        if (c < 0) continue;
      }
      trip.emplace_back(static_cast<int>(r), static_cast<int>(c), it.value());
    }
  const auto nf = static_cast<Eigen::Index>(s.free_count());
  SpMat out(rows ? nf : m.rows(), cols ? nf : m.cols());
  out.setFromTriplets(trip.begin(), trip.end());
  return out;
}

/// [[K, B_f^T], [B_f, 0]] with K on the free velocity block.
SpMat saddle_matrix(const SpMat& K_ff, const SpMat& B_f) {
  const auto nf = K_ff.rows();
  const auto np = B_f.rows();
  std::vector<Eigen::Triplet<double>> trip;
  trip.reserve(static_cast<std::size_t>(K_ff.nonZeros() + 2 * B_f.nonZeros()));
  for (int k = 0; k < K_ff.outerSize(); ++k)
    for (SpMat::InnerIterator it(K_ff, k); it; ++it)
      trip.emplace_back(static_cast<int>(it.row()), static_cast<int>(it.col()), it.value());
  for (int k = 0; k < B_f.outerSize(); ++k)
    for (SpMat::InnerIterator it(B_f, k); it; ++it) {
      trip.emplace_back(static_cast<int>(nf + it.row()), static_cast<int>(it.col()), it.value());
      trip.emplace_back(static_cast<int>(it.col()), static_cast<int>(nf + it.row()), it.value());
    }
  SpMat out(nf + np, nf + np);
  out.setFromTriplets(trip.begin(), trip.end());
  out.makeCompressed();
  return out;
}

VectorXd sparse_solve(const SpMat& m, const VectorXd& rhs, const char* what) {
  detail::SparseLUSolver lu;
  lu.compute(m);
  if (lu.info() != Eigen::Success) throw NumericalError(std::string(what) + ": factorization failed");
  VectorXd x = lu.solve(rhs);
  if (lu.info() != Eigen::Success || !x.allFinite())
    throw NumericalError(std::string(what) + ": solve failed");
  return x;
}

HFSolution split(const OperatorSet& ops, const VectorXd& x) {
  const auto nf = static_cast<Eigen::Index>(ops.space->free_count());
  HFSolution sol;
  sol.u = expand_velocity(ops, x.head(nf));
  sol.p = x.tail(x.size() - nf);
  return sol;
}

VectorXd free_part(const OperatorSet& ops, const VectorXd& u) {
  const auto& s = *ops.space;
  VectorXd out(static_cast<Eigen::Index>(s.free_count()));
  for (std::size_t i = 0; i < s.free_dofs.size(); ++i)
    out[static_cast<Eigen::Index>(i)] = u[static_cast<Eigen::Index>(s.free_dofs[i])];
  return out;
}

struct NewtonRun {
  HFSolution sol;
  bool converged = false;
};

NewtonRun newton_iterate(const OperatorSet& ops, double viscosity, const NewtonOptions& opt,
                         HFSolution start) {
  NewtonRun run;
  run.sol = std::move(start);
  auto& sol = run.sol;
  sol.residual_history.clear();
  const auto nf = static_cast<Eigen::Index>(ops.space->free_count());
  VectorXd r = nonlinear_residual(ops, sol.u, sol.p, viscosity);
  double r0 = r.norm();
  sol.residual_history.push_back(r0);
  sol.newton_iterations = 0;
  auto done = [&](double rn) {
    return rn <= opt.absolute_tolerance || rn <= opt.relative_tolerance * r0;
  };
  if (done(r0)) {
    sol.residual_norm = r0;
    run.converged = true;
    return run;
  }
  // The Jacobian sparsity is fixed, so the symbolic analysis is shared across steps.
  detail::SparseLUSolver lu;
  for (int it = 1; it <= opt.max_iterations; ++it) {
    const SpMat J = newton_jacobian(ops, sol.u, viscosity);
    if (it == 1) lu.analyzePattern(J);
    lu.factorize(J);
    if (lu.info() != Eigen::Success) break;
    const VectorXd dx = lu.solve(-r);
    if (!dx.allFinite()) break;
    sol.u += expand_velocity(ops, dx.head(nf)) - ops.lifting;
    sol.p += dx.tail(dx.size() - nf);
    r = nonlinear_residual(ops, sol.u, sol.p, viscosity);
    const double rn = r.norm();
    sol.residual_history.push_back(rn);
    sol.newton_iterations = it;
    sol.residual_norm = rn;
    if (!std::isfinite(rn) || rn > 1e8 * std::max(r0, 1.0)) break;
    if (done(rn)) {
      run.converged = true;
      return run;
    }
  }
  return run;
}

}  // namespace

VectorXd expand_velocity(const OperatorSet& ops, const VectorXd& free_values) {
  const auto& s = *ops.space;
  if (free_values.size() != static_cast<Eigen::Index>(s.free_count()))
    throw ConfigError("free velocity vector has the wrong length");
  VectorXd u = ops.lifting;
  for (std::size_t i = 0; i < s.free_dofs.size(); ++i)
    u[static_cast<Eigen::Index>(s.free_dofs[i])] = free_values[static_cast<Eigen::Index>(i)];
  return u;
}

VectorXd nonlinear_residual(const OperatorSet& ops, const VectorXd& u, const VectorXd& p,
                            double viscosity) {
  const double nu = effective_viscosity(ops, viscosity);
  const auto& s = *ops.space;
  const VectorXd full = nu * (ops.stiffness * u) + ops.convection_action(u) + ops.B.transpose() * p;
  const auto nf = static_cast<Eigen::Index>(s.free_count());
  VectorXd r(nf + ops.B.rows());
  r.head(nf) = free_part(ops, full);
  r.tail(ops.B.rows()) = ops.B * u;
  return r;
}

SpMat newton_jacobian(const OperatorSet& ops, const VectorXd& u, double viscosity) {
  const double nu = effective_viscosity(ops, viscosity);
  const auto& s = *ops.space;
  SpMat K = ops.convection_jacobian(u);
  K += nu * ops.stiffness;
  return saddle_matrix(restrict_velocity(K, s, true, true), restrict_velocity(ops.B, s, false, true));
}

HFSolution stokes_solve(const OperatorSet& ops, double viscosity) {
  const double nu = effective_viscosity(ops, viscosity);
  const auto& s = *ops.space;
  const SpMat K = restrict_velocity(nu * ops.stiffness, s, true, true);
  const SpMat Bf = restrict_velocity(ops.B, s, false, true);
  const auto nf = static_cast<Eigen::Index>(s.free_count());
  VectorXd rhs(nf + ops.B.rows());
  rhs.head(nf) = -free_part(ops, nu * (ops.stiffness * ops.lifting));
  rhs.tail(ops.B.rows()) = ops.g;
  HFSolution sol = split(ops, sparse_solve(saddle_matrix(K, Bf), rhs, "Stokes solve"));
  sol.residual_norm = 0.0;
  return sol;
}

HFSolution newton_solve(const OperatorSet& ops, const NewtonOptions& options,
                        const HFSolution* initial) {
  if (options.max_iterations < 1) throw ConfigError("max_iterations must be at least 1");
  const double nu = ops.viscosity;
  HFSolution start = initial ? *initial : stokes_solve(ops, nu);
  if (start.u.size() != ops.lifting.size() || start.p.size() != ops.B.rows())
    throw ConfigError("initial guess has the wrong size");
  NewtonRun run = newton_iterate(ops, nu, options, start);
  if (run.converged) return run.sol;
  std::vector<double> history = run.sol.residual_history;
  if (options.reynolds_continuation) {
    const double ladder[] = {2.0 * nu, std::sqrt(2.0) * nu, nu};
    HFSolution current = stokes_solve(ops, ladder[0]);
    bool ok = true;
    for (double v : ladder) {
      NewtonRun step = newton_iterate(ops, v, options, current);
      history.insert(history.end(), step.sol.residual_history.begin(),
                     step.sol.residual_history.end());
      if (!step.converged) {
        ok = false;
        break;
      }
      current = std::move(step.sol);
    }
    if (ok) {
      current.continuation_steps = 2;
      return current;
    }
  }
  throw NonConvergence("Newton did not converge", std::move(history));
}

}  // namespace asrom::fem
