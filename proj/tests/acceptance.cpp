// Acceptance checks: one PASS/FAIL line per criterion; exit status 1 if any fails.
//
//   acceptance [--work DIR] [--keep]
//
// The study, audit and determinism checks run the full pipeline with the default
// configuration in DIR (a fresh temporary directory by default).

#include <chrono>
#include <cmath>
#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <functional>
#include <iomanip>
#include <iostream>
#include <map>
#include <random>
#include <sstream>
#include <string>
#include <unistd.h>

#include <nlohmann/json.hpp>

#include "asrom/asub.hpp"
#include "asrom/csv.hpp"
#include "asrom/error.hpp"
#include "asrom/fem.hpp"
#include "asrom/geometry.hpp"
#include "asrom/pipeline.hpp"
#include "asrom/rom.hpp"

using namespace asrom;
using Eigen::MatrixXd;
using Eigen::VectorXd;
namespace fs = std::filesystem;

namespace {

struct Outcome {
  bool pass = false;
  std::string detail;
};

std::string fmt(double v) {
  std::ostringstream ss;
  ss << std::setprecision(3) << std::scientific << v;
  return ss.str();
}

class Runner {
 public:
  void check(const std::string& name, const std::function<Outcome()>& body) {
    const auto t0 = std::chrono::steady_clock::now();
    Outcome o;
    try {
      o = body();
    } catch (const std::exception& e) {
      o = {false, std::string("exception: ") + e.what()};
    }
    const double dt = std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
    std::cout << (o.pass ? "PASS " : "FAIL ") << name << ": " << o.detail << " [" << std::fixed
              << std::setprecision(2) << dt << " s]" << std::defaultfloat << std::endl;
    failures_ += o.pass ? 0 : 1;
  }
  int failures() const { return failures_; }

 private:
  int failures_ = 0;
};

double seconds_since(std::chrono::steady_clock::time_point t0) {
  return std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
}

MatrixXd random_matrix(Eigen::Index r, Eigen::Index c, std::mt19937_64& gen) {
  std::normal_distribution<double> n;
  MatrixXd m(r, c);
  for (Eigen::Index i = 0; i < m.size(); ++i) m.data()[i] = n(gen);
  return m;
}

// ---------------------------------------------------------------------------

Outcome rbf_exactness() {
  const auto t0 = std::chrono::steady_clock::now();
  std::mt19937_64 gen(101);
  std::uniform_real_distribution<double> u(-3.0, 3.0), d(-0.5, 0.5);
  double interp = 0.0, constraint = 0.0, affine_g = 0.0;
  for (int trial = 0; trial < 20; ++trial) {
    geometry::ControlPointSet cps;
    const int n = 6 + trial % 10;
    for (int i = 0; i < n; ++i) {
      cps.positions.emplace_back(u(gen), u(gen));
      cps.movable.push_back(false);
      cps.normals.emplace_back(0.0, 0.0);
    }
    Eigen::MatrixX2d X(n, 2);
    for (int i = 0; i < n; ++i) X.row(i) = cps.positions[static_cast<std::size_t>(i)].transpose();
    Eigen::MatrixX2d Y = X;
    for (int i = 0; i < n; ++i) Y.row(i) += Eigen::RowVector2d(d(gen), d(gen));
    const double R = 0.5 + 0.1 * trial;
    const auto res = geometry::rbf_residuals(geometry::solve_rbf(cps, Y, R), cps, Y, R);
    interp = std::max(interp, res.interpolation);
    constraint = std::max({constraint, res.force, res.moment});
    Eigen::Matrix2d A;
    A << 1.0 + 0.2 * d(gen), 0.2 * d(gen), 0.2 * d(gen), 1.0 + 0.2 * d(gen);
    const Eigen::MatrixX2d Ya = (X * A.transpose()).rowwise() + Eigen::RowVector2d(d(gen), d(gen));
    affine_g = std::max(affine_g, geometry::solve_rbf(cps, Ya, R).G.cwiseAbs().maxCoeff());
  }
  const double dt = seconds_since(t0);
  return {interp <= 1e-9 && constraint <= 1e-9 && affine_g <= 1e-9 && dt < 1.0,
          "20 sets, interpolation " + fmt(interp) + ", constraints " + fmt(constraint) + ", affine G " +
              fmt(affine_g) + ", runtime " + fmt(dt) + " s"};
}

Outcome identity_morph() {
  const auto dom = geometry::generate_bifurcation(geometry::BifurcationGeometry{});
  const auto mc = geometry::MorphConfig::with_default_box(10, 2.5);
  const auto m = geometry::morph(dom.mesh, dom.control_points, mc, VectorXd::Zero(10));
  double err = 0.0;
  for (std::size_t i = 0; i < m.nodes.size(); ++i) err = std::max(err, (m.nodes[i] - dom.mesh.nodes[i]).norm());
  return {err <= 1e-10, std::to_string(m.nodes.size()) + " nodes, max displacement " + fmt(err)};
}

Outcome poiseuille() {
  const auto t0 = std::chrono::steady_clock::now();
  constexpr double nu = 0.1, U = 1.0, L = 10.0, H = 1.0;
  const auto mesh = geometry::generate_channel_mesh(L, H, 70, 10);
  auto space = std::make_shared<fem::TaylorHoodSpace>(fem::build_space(mesh));
  fem::PhysicsConfig ph;
  ph.viscosity = nu;
  ph.inlet_velocity = U;
  ph.reference_width = H;
  const auto ops = fem::assemble_operators(mesh, space, ph);
  const auto sol = fem::newton_solve(ops);
  const auto pos = fem::p2_node_positions(mesh, *space);
  const auto ns = static_cast<Eigen::Index>(space->scalar_count());
  VectorXd exact = VectorXd::Zero(2 * ns);
  for (Eigen::Index a = 0; a < ns; ++a) {
    const double y = pos[static_cast<std::size_t>(a)].y();
    exact[a] = U * 4.0 * y * (H - y) / (H * H);
  }
  const VectorXd e = sol.u - exact;
  const double err = std::sqrt(e.dot(ops.X_u * e));
  const double drop = fem::section_pressure_average(sol.p, mesh, geometry::vertical_section(mesh, 0.0)) -
                      fem::section_pressure_average(sol.p, mesh, geometry::vertical_section(mesh, L));
  const double analytic = 8.0 * nu * U * L / (H * H);
  const double drop_err = std::abs(drop - analytic) / analytic;
  const double dt = seconds_since(t0);
  return {err <= 1e-9 && drop_err <= 1e-8 && sol.newton_iterations <= 5 && dt < 30.0,
          "X_u error " + fmt(err) + ", pressure-drop error " + fmt(drop_err) + ", Newton iterations " +
              std::to_string(sol.newton_iterations) + ", runtime " + fmt(dt) + " s"};
}

Outcome jacobian() {
  const auto mesh = geometry::generate_bifurcation_mesh(geometry::BifurcationGeometry{});
  auto space = std::make_shared<fem::TaylorHoodSpace>(fem::build_space(mesh));
  const auto ops = fem::assemble_operators(mesh, space, fem::PhysicsConfig{});
  const auto nf = static_cast<Eigen::Index>(space->free_count());
  const auto np = static_cast<Eigen::Index>(space->pressure_dofs());
  std::mt19937_64 gen(202);
  std::uniform_real_distribution<double> uni(-1.0, 1.0);
  auto rnd = [&](Eigen::Index n) {
    VectorXd v(n);
    for (auto& x : v) x = uni(gen);
    return v;
  };
  double worst = 0.0;
  for (int trial = 0; trial < 5; ++trial) {
    const VectorXd u = fem::expand_velocity(ops, rnd(nf));
    const VectorXd p = rnd(np);
    const VectorXd dir = rnd(nf + np);
    const double h = 1e-6;
    const VectorXd du = fem::expand_velocity(ops, dir.head(nf)) - ops.lifting;
    const VectorXd fd =
        (fem::nonlinear_residual(ops, u + h * du, p + h * dir.tail(np)) - fem::nonlinear_residual(ops, u, p)) / h;
    const VectorXd jv = fem::newton_jacobian(ops, u) * dir;
    worst = std::max(worst, (fd - jv).norm() / jv.norm());
  }
  return {worst <= 1e-5, "5 random states, worst relative error " + fmt(worst)};
}

Outcome ridge() {
  const auto t0 = std::chrono::steady_clock::now();
  const asub::Box box = asub::Box::uniform(10, 0.0, 0.3);
  VectorXd a(10);
  for (int j = 0; j < 10; ++j) a[j] = (j + 1) / 10.0;
  asub::SampleSet s;
  s.parameters = asub::sample_parameters(1000, box, 303);
  s.values.resize(1000);
  for (Eigen::Index i = 0; i < 1000; ++i) s.values[i] = std::exp(a.dot(s.parameters.row(i).transpose()));
  const auto g = asub::local_linear_gradients(s, 17);
  const auto eig = asub::eigendecompose(asub::covariance(g.gradients));
  const double align = std::abs(eig.vectors.col(0).dot(a.normalized()));
  const double ratio = eig.values[0] / eig.values[1];
  const double dt = seconds_since(t0);
  return {align >= 0.99 && ratio >= 1e2 && dt < 5.0,
          "|<w1, a>| " + fmt(align) + ", lambda1/lambda2 " + fmt(ratio) + ", runtime " + fmt(dt) + " s"};
}

Outcome covariance_oracle() {
  std::mt19937_64 gen(404);
  double cov_err = 0.0, residual = 0.0;
  for (int trial = 0; trial < 10; ++trial) {
    const MatrixXd G = random_matrix(10, 10, gen);
    MatrixXd brute = MatrixXd::Zero(10, 10);
    for (int i = 0; i < 10; ++i)
      for (int r = 0; r < 10; ++r)
        for (int c = 0; c < 10; ++c) brute(r, c) += G(i, r) * G(i, c) / 10.0;
    const MatrixXd S = asub::covariance(G);
    cov_err = std::max(cov_err, (S - brute).cwiseAbs().maxCoeff());
    const auto e = asub::eigendecompose(S);
    residual = std::max(residual, (S * e.vectors - e.vectors * e.values.asDiagonal()).cwiseAbs().maxCoeff());
  }
  return {cov_err <= 1e-12 && residual <= 1e-10,
          "10 random 10x10 inputs, covariance mismatch " + fmt(cov_err) + ", eigen residual " + fmt(residual)};
}

Outcome pod_identity() {
  std::mt19937_64 gen(505);
  double tail_err = 0.0, ortho = 0.0;
  for (int trial = 0; trial < 5; ++trial) {
    const Eigen::Index n = 60, k = 15 + 5 * trial;
    std::vector<Eigen::Triplet<double>> t;
    std::uniform_real_distribution<double> u(-1.0, 1.0);
    for (Eigen::Index i = 0; i < n; ++i) {
      t.emplace_back(i, i, 4.0 + u(gen));
      if (i + 1 < n) {
        const double v = 0.5 * u(gen);
        t.emplace_back(i, i + 1, v);
        t.emplace_back(i + 1, i, v);
      }
    }
    fem::SpMat X(n, n);
    X.setFromTriplets(t.begin(), t.end());
    const MatrixXd S = random_matrix(n, k, gen);
    const auto r = rom::pod(S, X);
    const MatrixXd& Z = r.modes;
    ortho = std::max(ortho, (Z.transpose() * (X * Z) - MatrixXd::Identity(Z.cols(), Z.cols())).cwiseAbs().maxCoeff());
    for (Eigen::Index N = 0; N < k; ++N) {
      const MatrixXd Zn = Z.leftCols(N);
      const MatrixXd E = S - Zn * (Zn.transpose() * (X * S));
      const double err = (E.transpose() * (X * E)).trace();
      const double tail = r.singular_values.tail(k - N).squaredNorm();
      tail_err = std::max(tail_err, std::abs(err - tail) / tail);
    }
  }
  return {tail_err <= 1e-8 && ortho <= 1e-8,
          "5 random matrices, tail identity error " + fmt(tail_err) + ", orthonormality " + fmt(ortho)};
}

Outcome rom_consistency() {
  geometry::BifurcationGeometry g;
  g.resolution = 4;
  const auto dom = geometry::generate_bifurcation(g);
  const auto mc = geometry::MorphConfig::with_default_box(10, g.channel_width);
  auto space = std::make_shared<fem::TaylorHoodSpace>(fem::build_space(dom.mesh));
  const auto ip = fem::assemble_inner_products(dom.mesh, *space);
  const fem::SupremizerSolver sup(ip.X_u, space);
  const auto ref = fem::assemble_operators(dom.mesh, space, fem::PhysicsConfig{});
  const VectorXd lifting = rom::reference_lifting(ref);
  const MatrixXd params = asub::sample_parameters(12, asub::Box::uniform(10, 0.0, 0.3), 606);
  auto solve = [&](const VectorXd& mu) {
    const auto mesh = geometry::morph(dom.mesh, dom.control_points, mc, mu);
    const auto ops = fem::assemble_operators(mesh, space, fem::PhysicsConfig{});
    rom::SnapshotSample s;
    s.solution = fem::newton_solve(ops);
    s.solution.qoi = fem::qoi(s.solution.p, mesh);
    s.supremizer = sup.solve(ops.B, s.solution.p);
    return s;
  };
  const auto snaps = rom::collect_snapshots(params, solve, lifting);
  const auto basis = rom::build_reduced_spaces(snaps, lifting, ip.X_u, ip.X_p, -1);
  const int n = basis.N_u;
  double qoi_err = 0.0;
  for (Eigen::Index i : {0, 6, 11}) {
    const VectorXd mu = snaps.parameters.row(i).transpose();
    const auto mesh = geometry::morph(dom.mesh, dom.control_points, mc, mu);
    const auto ops = fem::assemble_operators(mesh, space, fem::PhysicsConfig{});
    const auto sol = rom::rom_solve(rom::project_operators(ops, basis), mesh);
    qoi_err = std::max(qoi_err, std::abs(sol.qoi - snaps.qoi[i]) / std::abs(snaps.qoi[i]));
  }
  std::ostringstream betas;
  bool stable = true;
  for (int N : {1, 2, 4, n / 2}) {
    const double with = rom::reduced_inf_sup(rom::project_operators(ref, rom::truncate(basis, N, N, N, ip.X_u)));
    const double without = rom::reduced_inf_sup(rom::project_operators(ref, rom::truncate(basis, N, 0, N, ip.X_u)));
    stable = stable && with > 0.0 && with > without;
    betas << " N=" << N << ": " << fmt(with) << " vs " << fmt(without) << ";";
  }
  return {qoi_err <= 1e-6 && stable,
          std::to_string(n) + " modes, worst training QoI error " + fmt(qoi_err) + "; beta with vs without" +
              betas.str()};
}

// ---------------------------------------------------------------------------

struct Study {
  fs::path dir;
  pipeline::StudyConfig config;
  pipeline::AuditSummary audit;
  bool ran = false;
  std::string error;
  double seconds = 0.0;
  int active_dimension = 0;
};

void run_all_stages(const pipeline::StudyConfig& c, const fs::path& dir, pipeline::AuditSummary* audit, int* M) {
  fs::create_directories(dir);
  pipeline::run_mesh(c, dir.string());
  const auto a = pipeline::run_morph(c, dir.string());
  if (audit) *audit = a;
  const auto as = pipeline::run_train_as(c, dir.string());
  if (M) *M = as.subspace.M;
  pipeline::run_train_rom(c, dir.string(), "rom");
  pipeline::run_train_rom(c, dir.string(), "rom_as");
  pipeline::run_evaluate(c, dir.string());
}

/// Error reports end in a string variant column; keep only the numeric ones.
CsvTable read_error_report(const fs::path& p) {
  std::ifstream in(p);
  if (!in) throw ConfigError("cannot open " + p.string());
  CsvTable t;
  std::string line;
  std::getline(in, line);
  std::stringstream hs(line);
  for (std::string cell; std::getline(hs, cell, ',');)
    if (cell != "variant") t.header.push_back(cell);
  while (std::getline(in, line)) {
    if (line.empty()) continue;
    std::stringstream ls(line);
    std::vector<double> row;
    std::string cell;
    for (std::size_t j = 0; j < t.header.size() && std::getline(ls, cell, ','); ++j) row.push_back(std::stod(cell));
    t.rows.push_back(std::move(row));
  }
  return t;
}

Outcome scaled_study(const Study& s) {
  if (!s.ran) return {false, "pipeline failed: " + s.error};
  const auto svr = read_csv((s.dir / "singular_values_rom.csv").string());
  const auto sva = read_csv((s.dir / "singular_values_rom_as.csv").string());
  std::ostringstream detail;
  detail << "M = " << s.active_dimension << ", pipeline " << fmt(s.seconds) << " s; ";
  bool decay = true;
  for (const std::string fam : {"sigma_u", "sigma_s", "sigma_p"}) {
    const auto cr = svr.column(fam), ca = sva.column(fam);
    const double r1 = svr.rows[0][cr], a1 = sva.rows[0][ca];
    const std::size_t common = std::min(svr.rows.size(), sva.rows.size());
    int violations = 0;
    for (std::size_t i = 0; i < common; ++i)
      if (sva.rows[i][ca] / a1 > svr.rows[i][cr] / r1) ++violations;
    decay = decay && violations == 0;
    detail << fam << " sigma_20/sigma_1 rom " << fmt(svr.rows[19][cr] / r1) << " rom_as "
           << fmt(sva.rows[19][ca] / a1) << " (" << violations << " violations); ";
  }
  // errors_rom_as_test.csv is the rom basis evaluated on the same lifted test parameters
  const auto er = read_error_report(s.dir / "errors_rom_as_test.csv");
  const auto ea = read_error_report(s.dir / "errors_rom_as.csv");
  const auto raw = read_error_report(s.dir / "errors_rom.csv");
  auto row_of = [](const CsvTable& t, int N) -> const std::vector<double>& {
    for (const auto& r : t.rows)
      if (static_cast<int>(r[0]) == N) return r;
    throw NumericalError("no row with N = " + std::to_string(N));
  };
  const auto& r20 = row_of(er, 20);
  const auto& a20 = row_of(ea, 20);
  const auto& w20 = row_of(raw, 20);
  bool errors = true;
  for (const std::string q : {"err_u", "err_p", "err_qoi"}) {
    const double vr = r20[er.column(q)], va = a20[ea.column(q)], vw = w20[raw.column(q)];
    errors = errors && std::isfinite(va) && std::isfinite(vr) && va <= vr;
    detail << q << " at N=20 rom_as " << fmt(va) << " rom " << fmt(vr) << " ratio " << fmt(va / vr)
           << " (rom on raw test " << fmt(vw) << "); ";
  }
  detail << "(a) " << (decay ? "holds" : "fails") << ", (b) " << (errors ? "holds" : "fails");
  return {decay && errors && s.seconds < 7200.0, detail.str()};
}

Outcome mesh_audit(const Study& s) {
  if (!s.ran) return {false, "pipeline failed: " + s.error};
  return {s.audit.morphs == 250 && s.audit.pooled_fraction <= 0.01,
          std::to_string(s.audit.morphs) + " morphs, reference max aspect ratio " + fmt(s.audit.reference_max) +
              ", cells above it " + fmt(100.0 * s.audit.pooled_fraction) + "% pooled, worst single morph " +
              fmt(100.0 * s.audit.worst_fraction) + "%"};
}

std::string read_file(const fs::path& p) {
  std::ifstream in(p, std::ios::binary);
  std::ostringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

/// File contents with manifest timings removed.
std::map<std::string, std::string> snapshot_dir(const fs::path& dir) {
  std::map<std::string, std::string> out;
  for (const auto& e : fs::directory_iterator(dir)) {
    const auto name = e.path().filename().string();
    auto text = read_file(e.path());
    if (name.rfind("manifest_", 0) == 0) {
      auto j = nlohmann::json::parse(text);
      j.erase("wall_clock_seconds");
      text = j.dump();
    }
    out[name] = std::move(text);
  }
  return out;
}

Outcome determinism(const Study& s) {
  if (!s.ran) return {false, "pipeline failed: " + s.error};
  const fs::path again = s.dir.string() + "_rerun";
  fs::remove_all(again);
  run_all_stages(s.config, again, nullptr, nullptr);
  const auto a = snapshot_dir(s.dir), b = snapshot_dir(again);
  std::vector<std::string> differ;
  for (const auto& [name, text] : a) {
    const auto it = b.find(name);
    if (it == b.end() || it->second != text) differ.push_back(name);
  }
  for (const auto& [name, text] : b)
    if (!a.count(name)) differ.push_back(name);
  fs::remove_all(again);
  std::string detail = std::to_string(a.size()) + " files from a full rerun of every stage";
  if (differ.empty()) return {true, detail + " byte-identical (manifest timings excluded)"};
  detail += "; differing:";
  for (const auto& d : differ) detail += " " + d;
  return {false, detail};
}

}  // namespace

int main(int argc, char** argv) {
  fs::path work;
  bool keep = false;
  for (int i = 1; i < argc; ++i) {
    const std::string arg = argv[i];
    if (arg == "--work" && i + 1 < argc) {
      work = argv[++i];
    } else if (arg == "--keep") {
      keep = true;
    } else {
      std::cerr << "usage: acceptance [--work DIR] [--keep]\n";
      return 2;
    }
  }
  const bool temporary = work.empty();
  if (temporary) work = fs::temp_directory_path() / ("asrom_acceptance_" + std::to_string(::getpid()));

  Runner run;
  run.check("rbf-exactness", rbf_exactness);
  run.check("identity-morph", identity_morph);
  run.check("poiseuille", poiseuille);
  run.check("jacobian", jacobian);
  run.check("ridge-oracle", ridge);
  run.check("covariance-oracle", covariance_oracle);
  run.check("pod-identity", pod_identity);
  run.check("rom-consistency", rom_consistency);

  Study study;
  study.dir = work / "study";
  study.config = pipeline::parse_config("{}");
  fs::remove_all(study.dir);
  const auto t0 = std::chrono::steady_clock::now();
  try {
    run_all_stages(study.config, study.dir, &study.audit, &study.active_dimension);
    study.ran = true;
  } catch (const std::exception& e) {
    study.error = e.what();
  }
  study.seconds = seconds_since(t0);
  run.check("scaled-study", [&] { return scaled_study(study); });
  run.check("mesh-audit", [&] { return mesh_audit(study); });
  run.check("determinism", [&] { return determinism(study); });

  if (temporary && !keep) fs::remove_all(work);
  std::cout << (run.failures() == 0 ? "all criteria passed" : std::to_string(run.failures()) + " criteria failed")
            << std::endl;
  return run.failures() == 0 ? 0 : 1;
}
