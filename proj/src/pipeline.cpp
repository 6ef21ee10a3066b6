#include "asrom/pipeline.hpp"

#include <chrono>
#include <cmath>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <cstdio>
#include <optional>

#include "asrom/csv.hpp"
#include "asrom/error.hpp"
#include "asrom/format.hpp"
#include "asrom/parallel.hpp"
#include "json.hpp"

namespace asrom::pipeline {

namespace fs = std::filesystem;
using Eigen::MatrixXd;
using Eigen::VectorXd;
using nlohmann::json;

// ---------------------------------------------------------------------------
// Synthetic QoIs

VectorXd synthetic_direction(std::size_t m) {
  VectorXd a(static_cast<Eigen::Index>(m));
  for (Eigen::Index j = 0; j < a.size(); ++j) a[j] = static_cast<double>(j + 1) / static_cast<double>(m);
  return a;
}

double synthetic_qoi(const std::string& name, const VectorXd& mu) {
  const double t = synthetic_direction(static_cast<std::size_t>(mu.size())).dot(mu);
  if (name == "ridge_quadratic") return t * t;
  if (name == "ridge_exp") return std::exp(t);
  if (name == "linear") return t;
  throw ConfigError("unknown synthetic QoI '" + name + "' (ridge_quadratic, ridge_exp, linear)");
}

// ---------------------------------------------------------------------------
// HF problem

HFProblem::HFProblem(const StudyConfig& config, geometry::Mesh mesh, geometry::ControlPointSet cps)
    : config_(config), mesh_(std::move(mesh)), cps_(std::move(cps)) {
  if (cps_.movable_count() != config_.box.dimension())
    throw ConfigError("control points do not match the parameter dimension");
  morph_.radius = config_.morph_radius;
  morph_.box_low = config_.box.low;
  morph_.box_high = config_.box.high;
  morph_.validate();
  space_ = std::make_shared<fem::TaylorHoodSpace>(fem::build_space(mesh_));
  inner_ = fem::assemble_inner_products(mesh_, *space_);
  supremizer_ = std::make_shared<fem::SupremizerSolver>(inner_.X_u, space_);
  lifting_ = rom::reference_lifting(*operators(mesh_));
}

geometry::Mesh HFProblem::morph(const VectorXd& mu) const {
  if (!config_.box.contains(mu)) throw ConfigError("parameter outside the box");
  return geometry::morph(mesh_, cps_, morph_, mu);
}

std::unique_ptr<fem::OperatorSet> HFProblem::operators(const geometry::Mesh& mesh) const {
  return std::make_unique<fem::OperatorSet>(fem::assemble_operators(mesh, space_, config_.physics));
}

HFProblem::Solve HFProblem::solve(const VectorXd& mu) const {
  Solve s;
  s.mesh = morph(mu);
  s.ops = operators(s.mesh);
  s.solution = fem::newton_solve(*s.ops, config_.newton);
  s.solution.mu = mu;
  s.solution.qoi = fem::qoi(s.solution.p, s.mesh);
  return s;
}

namespace {

std::string join(const std::string& dir, const std::string& name) { return (fs::path(dir) / name).string(); }

void require(const std::string& path, const std::string& producer) {
  if (!fs::exists(path)) throw ConfigError("missing input " + path + " (run '" + producer + "' first)");
}

std::pair<geometry::Mesh, geometry::ControlPointSet> load_reference(const std::string& out_dir) {
  const auto mesh_path = join(out_dir, "mesh.txt");
  const auto cps_path = join(out_dir, "control_points.csv");
  require(mesh_path, "mesh");
  require(cps_path, "mesh");
  return {geometry::read_mesh_file(mesh_path), geometry::read_control_points_file(cps_path)};
}

/// Stage bookkeeping written to manifest_<stage>.json.
class Manifest {
 public:
  Manifest(const StudyConfig& config, std::string out_dir, std::string stage)
      : out_dir_(std::move(out_dir)), stage_(std::move(stage)), start_(std::chrono::steady_clock::now()) {
    fs::create_directories(out_dir_);
    char hash[17];
    std::snprintf(hash, sizeof hash, "%016llx", static_cast<unsigned long long>(config_hash(config)));
    doc_["stage"] = stage_;
    doc_["config_hash"] = hash;
    doc_["inputs"] = json::array();
    doc_["outputs"] = json::array();
  }

  std::string input(const std::string& name) {
    doc_["inputs"].push_back(name);
    return join(out_dir_, name);
  }
  std::string output(const std::string& name) {
    doc_["outputs"].push_back(name);
    return join(out_dir_, name);
  }
  json& operator[](const std::string& key) { return doc_[key]; }

  void write() {
    for (const auto& f : doc_["outputs"])
      if (!fs::exists(join(out_dir_, f.get<std::string>())))
        throw NumericalError("stage " + stage_ + " did not produce " + f.get<std::string>());
    doc_["wall_clock_seconds"] =
        std::chrono::duration<double>(std::chrono::steady_clock::now() - start_).count();
    std::ofstream out(join(out_dir_, "manifest_" + stage_ + ".json"));
    out << doc_.dump(2) << '\n';
  }

 private:
  std::string out_dir_, stage_;
  std::chrono::steady_clock::time_point start_;
  json doc_;
};

struct HFStats {
  int solved = 0, failed = 0, continuation = 0;
  double mean_iterations = 0.0;

  json to_json() const {
    return {{"solved", solved}, {"failed", failed}, {"continuation_solves", continuation},
            {"mean_newton_iterations", mean_iterations}};
  }
};

/// Aborts when more than 10% of the requested HF solves failed.
void check_failures(int failed, int total, const std::string& what) {
  if (failed * 10 > total)
    throw NumericalError(what + ": " + std::to_string(failed) + " of " + std::to_string(total) +
                         " high-fidelity solves failed (limit 10%)");
  if (failed > 0)
    std::cerr << what << ": " << failed << " of " << total << " high-fidelity solves failed; excluded\n";
}

asub::ActiveSubspace load_active_subspace(Manifest& manifest, const std::string& out_dir) {
  const auto ev = join(out_dir, "eigenvalues.csv");
  const auto evec = join(out_dir, "eigenvectors.csv");
  const auto dim = join(out_dir, "active_dimension.txt");
  for (const auto& p : {ev, evec, dim}) require(p, "train-as");
  manifest.input("eigenvalues.csv");
  manifest.input("eigenvectors.csv");
  manifest.input("active_dimension.txt");
  std::ifstream in(dim);
  int M = 0;
  if (!(in >> M)) throw ConfigError("malformed " + dim);
  return asub::read_active_subspace(ev, evec, M);
}

struct LiftedSet {
  MatrixXd params;
  int clamped_coordinates = 0;
  int clamped_points = 0;
};

LiftedSet lift_rows(const MatrixXd& raw, const asub::ActiveSubspace& as, const asub::Box& box) {
  LiftedSet out;
  out.params.resize(raw.rows(), raw.cols());
  for (Eigen::Index i = 0; i < raw.rows(); ++i) {
    const auto l = asub::lift(as.W1, asub::project_active(as.W1, raw.row(i).transpose()), box);
    out.params.row(i) = l.mu.transpose();
    out.clamped_coordinates += l.clamped;
    out.clamped_points += l.clamped > 0 ? 1 : 0;
  }
  return out;
}

}  // namespace

HFProblem load_problem(const StudyConfig& config, const std::string& out_dir) {
  auto [mesh, cps] = load_reference(out_dir);
  return HFProblem(config, std::move(mesh), std::move(cps));
}

// ---------------------------------------------------------------------------

void run_mesh(const StudyConfig& config, const std::string& out_dir) {
  config.validate();
  Manifest manifest(config, out_dir, "mesh");
  const auto dom = geometry::generate_bifurcation(config.geometry);
  geometry::write_mesh_file(manifest.output("mesh.txt"), dom.mesh);
  geometry::write_control_points_file(manifest.output("control_points.csv"), dom.control_points);
  manifest["nodes"] = dom.mesh.nodes.size();
  manifest["cells"] = dom.mesh.triangles.size();
  manifest.write();
}

AuditSummary run_morph(const StudyConfig& config, const std::string& out_dir,
                       const std::optional<VectorXd>& mu) {
  config.validate();
  Manifest manifest(config, out_dir, "morph");
  manifest.input("mesh.txt");
  manifest.input("control_points.csv");
  const auto [mesh, cps] = load_reference(out_dir);
  geometry::MorphConfig mc;
  mc.radius = config.morph_radius;
  mc.box_low = config.box.low;
  mc.box_high = config.box.high;
  const double ref_max = geometry::aspect_ratio_report(mesh).max;

  MatrixXd params;
  if (mu) {
    if (!config.box.contains(*mu)) throw ConfigError("--mu lies outside the parameter box");
    params = mu->transpose();
  } else {
    params = asub::sample_parameters(static_cast<std::size_t>(config.n_train_as), config.box,
                                     stream_seed(config, Stream::as_train));
  }
  const auto n = static_cast<std::size_t>(params.rows());
  MatrixXd rows(params.rows(), 5);
  std::vector<std::size_t> cells_above(n, 0);
  std::vector<std::optional<geometry::Mesh>> single(1);
  parallel_for(n, [&](std::size_t i) {
    const auto k = static_cast<Eigen::Index>(i);
    auto morphed = geometry::morph(mesh, cps, mc, params.row(k).transpose());
    const auto report = geometry::aspect_ratio_report(morphed, ref_max);
    rows.row(k) << static_cast<double>(i), report.min, report.max, report.mean, report.fraction_above_reference;
    cells_above[i] = static_cast<std::size_t>(std::llround(report.fraction_above_reference *
                                                           static_cast<double>(morphed.triangles.size())));
    if (mu) single[0] = std::move(morphed);
  }, config.threads);
  if (mu) geometry::write_mesh_file(manifest.output("morphed_mesh.txt"), *single[0]);
  write_csv(manifest.output("aspect_ratio.csv"), {"sample", "min", "max", "mean", "frac_above_ref_max"}, rows);

  AuditSummary summary;
  summary.morphs = static_cast<int>(n);
  summary.reference_max = ref_max;
  std::size_t above = 0;
  for (auto c : cells_above) above += c;
  summary.pooled_fraction = static_cast<double>(above) / static_cast<double>(n * mesh.triangles.size());
  summary.worst_fraction = rows.col(4).maxCoeff();
  MatrixXd srow(1, 5);
  srow << summary.morphs, ref_max, summary.pooled_fraction, summary.worst_fraction, rows.col(2).maxCoeff();
  write_csv(manifest.output("aspect_ratio_summary.csv"),
            {"morphs", "ref_max", "pooled_frac_above_ref_max", "worst_frac_above_ref_max", "max"}, srow);
  manifest["morphs"] = summary.morphs;
  manifest.write();
  return summary;
}

// ---------------------------------------------------------------------------

namespace {

struct Evaluated {
  asub::SampleSet samples;
  HFStats stats;
};

Evaluated evaluate_qoi(const StudyConfig& config, const MatrixXd& params, const std::string& synthetic,
                       const HFProblem* problem, const std::string& what) {
  const auto n = static_cast<std::size_t>(params.rows());
  std::vector<std::optional<fem::HFSolution>> sols(n);
  std::vector<double> values(n, 0.0);
  std::vector<char> ok(n, 0);
  parallel_for(n, [&](std::size_t i) {
    const VectorXd mu = params.row(static_cast<Eigen::Index>(i)).transpose();
    if (!synthetic.empty()) {
      values[i] = synthetic_qoi(synthetic, mu);
      ok[i] = 1;
      return;
    }
    try {
      auto s = problem->solve(mu);
      values[i] = s.solution.qoi;
      sols[i] = std::move(s.solution);
      sols[i]->u.resize(0);  // only the statistics are kept
      sols[i]->p.resize(0);
      ok[i] = 1;
    } catch (const NumericalError&) {
    }
  }, config.threads);
  Evaluated out;
  std::vector<Eigen::Index> keep;
  double iters = 0.0;
  for (std::size_t i = 0; i < n; ++i) {
    if (!ok[i]) {
      ++out.stats.failed;
      continue;
    }
    keep.push_back(static_cast<Eigen::Index>(i));
    if (sols[i]) {
      iters += sols[i]->newton_iterations;
      if (sols[i]->continuation_steps > 0) ++out.stats.continuation;
    }
  }
  out.stats.solved = static_cast<int>(keep.size());
  out.stats.mean_iterations = keep.empty() || !synthetic.empty() ? 0.0 : iters / static_cast<double>(keep.size());
  check_failures(out.stats.failed, static_cast<int>(n), what);
  out.samples.parameters.resize(static_cast<Eigen::Index>(keep.size()), params.cols());
  out.samples.values.resize(static_cast<Eigen::Index>(keep.size()));
  for (std::size_t r = 0; r < keep.size(); ++r) {
    out.samples.parameters.row(static_cast<Eigen::Index>(r)) = params.row(keep[r]);
    out.samples.values[static_cast<Eigen::Index>(r)] = values[static_cast<std::size_t>(keep[r])];
  }
  return out;
}

}  // namespace

TrainASSummary run_train_as(const StudyConfig& config, const std::string& out_dir,
                            const std::string& synthetic) {
  config.validate();
  if (!synthetic.empty()) synthetic_qoi(synthetic, config.box.center());  // validates the name
  Manifest manifest(config, out_dir, "train_as");
  std::optional<HFProblem> problem;
  if (synthetic.empty()) {
    manifest.input("mesh.txt");
    manifest.input("control_points.csv");
    problem.emplace(load_problem(config, out_dir));
  }
  const MatrixXd train_params = asub::sample_parameters(static_cast<std::size_t>(config.n_train_as), config.box,
                                                        stream_seed(config, Stream::as_train));
  const MatrixXd test_params = asub::sample_parameters(static_cast<std::size_t>(config.n_test_as), config.box,
                                                       stream_seed(config, Stream::as_test));
  const auto train = evaluate_qoi(config, train_params, synthetic, problem ? &*problem : nullptr, "train-as");
  const auto test = evaluate_qoi(config, test_params, synthetic, problem ? &*problem : nullptr, "train-as test set");

  const auto grads = asub::local_linear_gradients(train.samples, config.k);
  TrainASSummary summary;
  summary.subspace = asub::compute_active_subspace(grads.gradients, config.n_boot,
                                                   stream_seed(config, Stream::bootstrap), config.active_dimension);
  summary.hf_failures = train.stats.failed + test.stats.failed;
  const auto& as = summary.subspace;

  const auto max_M = config.max_surface_dimension, max_order = config.max_surface_order;
  const auto terms = asub::total_degree_exponents(max_M, max_order).size();
  if (static_cast<Eigen::Index>(terms) > train.samples.parameters.rows())
    throw ConfigError("response-surface grid needs " + std::to_string(terms) + " training samples");
  const MatrixXd grid = asub::surrogate_error_grid(train.samples, test.samples, as.W, max_M, max_order);
  MatrixXd grid_rows(max_M, max_order + 1);
  for (int M = 1; M <= max_M; ++M) {
    grid_rows(M - 1, 0) = M;
    grid_rows.row(M - 1).tail(max_order) = grid.row(M - 1);
  }
  std::vector<std::string> grid_header{"M"};
  for (const auto& h : prefixed_names("order_", static_cast<std::size_t>(max_order))) grid_header.push_back(h);

  asub::write_samples(manifest.output("samples.csv"), train.samples);
  asub::write_samples(manifest.output("samples_test.csv"), test.samples);
  asub::write_gradients(manifest.output("gradients.csv"), grads.gradients);
  asub::write_eigenvalues(manifest.output("eigenvalues.csv"), as);
  asub::write_eigenvectors(manifest.output("eigenvectors.csv"), as.W);
  {
    std::ofstream out(manifest.output("active_dimension.txt"));
    out << as.M << '\n';
  }
  write_csv(manifest.output("summary_1d.csv"), {"y_1", "f"}, asub::sufficient_summary(train.samples, as.W.leftCols(1)));
  write_csv(manifest.output("summary_2d.csv"), {"y_1", "y_2", "f"},
            asub::sufficient_summary(train.samples, as.W.leftCols(2)));
  write_csv(manifest.output("error_grid.csv"), grid_header, grid_rows);

  manifest["qoi"] = synthetic.empty() ? "hf" : synthetic;
  manifest["active_dimension"] = as.M;
  manifest["enlarged_neighborhoods"] = grads.enlarged;
  manifest["hf_train"] = train.stats.to_json();
  manifest["hf_test"] = test.stats.to_json();
  manifest.write();
  return summary;
}

TrainROMSummary run_train_rom(const StudyConfig& config, const std::string& out_dir,
                              const std::string& variant) {
  config.validate();
  if (variant != "rom" && variant != "rom_as") throw ConfigError("--variant must be rom or rom_as");
  Manifest manifest(config, out_dir, "train_rom_" + variant);
  manifest.input("mesh.txt");
  manifest.input("control_points.csv");
  const HFProblem problem = load_problem(config, out_dir);
  TrainROMSummary summary;
  MatrixXd params;
  if (variant == "rom") {
    params = asub::sample_parameters(static_cast<std::size_t>(config.rom_train_count()), config.box,
                                     stream_seed(config, Stream::rom_train));
  } else {
    const auto as = load_active_subspace(manifest, out_dir);
    const MatrixXd raw = asub::sample_parameters(static_cast<std::size_t>(config.n_train_rom_as), config.box,
                                                 stream_seed(config, Stream::rom_as_train));
    auto lifted = lift_rows(raw, as, config.box);
    params = std::move(lifted.params);
    summary.clamped_coordinates = lifted.clamped_coordinates;
    manifest["clamped_points"] = lifted.clamped_points;
  }
  manifest["clamped_coordinates"] = summary.clamped_coordinates;

  const rom::SnapshotSolver solver = [&](const VectorXd& mu) {
    auto s = problem.solve(mu);
    rom::SnapshotSample out;
    out.supremizer = problem.supremizers().solve(s.ops->B, s.solution.p);
    out.solution = std::move(s.solution);
    return out;
  };
  const auto snaps = rom::collect_snapshots(params, solver, problem.rom_lifting(), config.threads);
  summary.failures = static_cast<int>(snaps.failed.size());
  summary.snapshots = static_cast<int>(snaps.parameters.rows());
  check_failures(summary.failures, static_cast<int>(params.rows()), "train-rom " + variant);
  const int keep = config.max_modes();
  summary.basis = rom::build_reduced_spaces(snaps, problem.rom_lifting(), problem.inner_products().X_u,
                                            problem.inner_products().X_p, keep);
  // a low-dimensional training family can have fewer significant modes than requested
  if (summary.basis.N_u < keep)
    std::cerr << "train-rom " << variant << ": numerical rank " << summary.basis.N_u << " below the requested "
              << keep << " modes; keeping " << summary.basis.N_u << "\n";

  rom::write_basis_file(manifest.output("basis_" + variant + ".txt"), summary.basis);
  rom::write_singular_values(manifest.output("singular_values_" + variant + ".csv"), summary.basis);
  {
    auto header = prefixed_names("mu_", static_cast<std::size_t>(snaps.parameters.cols()));
    header.push_back("f");
    header.push_back("newton_iterations");
    MatrixXd rows(snaps.parameters.rows(), snaps.parameters.cols() + 2);
    for (Eigen::Index i = 0; i < rows.rows(); ++i) {
      rows.row(i).head(snaps.parameters.cols()) = snaps.parameters.row(i);
      rows(i, snaps.parameters.cols()) = snaps.qoi[i];
      rows(i, snaps.parameters.cols() + 1) = snaps.newton_iterations[static_cast<std::size_t>(i)];
    }
    write_csv(manifest.output("snapshots_" + variant + ".csv"), header, rows);
  }
  manifest["snapshots"] = summary.snapshots;
  manifest["failed"] = summary.failures;
  manifest["retained_modes"] = {summary.basis.N_u, summary.basis.N_s, summary.basis.N_p};
  manifest.write();
  return summary;
}

// ---------------------------------------------------------------------------

namespace {

/// Errors of one basis family (truncated once per N) at one HF solve.
std::vector<rom::PointErrors> rom_errors(const std::vector<rom::PODBasis>& bases, const HFProblem::Solve& hf,
                                         const fem::InnerProducts& ip, const fem::NewtonOptions& newton) {
  std::vector<rom::PointErrors> out(bases.size());
  for (std::size_t j = 0; j < bases.size(); ++j) {
    try {
      const auto red = rom::project_operators(*hf.ops, bases[j]);
      const auto sol = rom::rom_solve(red, hf.mesh, newton);
      out[j] = rom::compare(sol, hf.solution, ip.X_u, ip.X_p);
      if (!std::isfinite(out[j].err_u) || !std::isfinite(out[j].err_p) || !std::isfinite(out[j].err_qoi))
        out[j].ok = false;
    } catch (const NumericalError&) {
      out[j].ok = false;
    }
  }
  return out;
}

}  // namespace

EvaluateSummary run_evaluate(const StudyConfig& config, const std::string& out_dir) {
  config.validate();
  Manifest manifest(config, out_dir, "evaluate");
  manifest.input("mesh.txt");
  manifest.input("control_points.csv");
  const HFProblem problem = load_problem(config, out_dir);
  const auto as = load_active_subspace(manifest, out_dir);
  const auto& ip = problem.inner_products();

  std::vector<rom::PODBasis> rom_bases, rom_as_bases;
  for (const std::string variant : {"rom", "rom_as"}) {
    const auto path = join(out_dir, "basis_" + variant + ".txt");
    require(path, "train-rom --variant " + variant);
    manifest.input("basis_" + variant + ".txt");
    const auto stored = rom::read_basis_file(path);
    if (stored.lifting.size() != problem.rom_lifting().size() ||
        (stored.lifting - problem.rom_lifting()).cwiseAbs().maxCoeff() > 1e-12 * problem.rom_lifting().cwiseAbs().maxCoeff())
      throw ConfigError(path + " was trained on a different reference problem");
    auto& target = variant == "rom" ? rom_bases : rom_as_bases;
    json dims = json::array();
    for (int N : config.modes) {
      // N beyond the stored numerical rank uses every stored mode
      const int nu = std::min<int>(N, static_cast<int>(stored.velocity_modes.cols()));
      const int ns = std::min<int>(N, static_cast<int>(stored.supremizer_modes.cols()));
      const int np = std::min<int>(N, static_cast<int>(stored.pressure_modes.cols()));
      target.push_back(rom::truncate(stored, nu, ns, np, ip.X_u));
      dims.push_back({{"N", N}, {"N_u", nu}, {"N_s", ns}, {"N_p", np}});
    }
    manifest["effective_modes_" + variant] = dims;
  }

  const MatrixXd raw = asub::sample_parameters(static_cast<std::size_t>(config.n_test_rom), config.box,
                                               stream_seed(config, Stream::rom_test));
  const auto lifted = lift_rows(raw, as, config.box);
  const auto n = static_cast<std::size_t>(raw.rows());
  std::vector<std::vector<rom::PointErrors>> e_rom(n), e_rom_as(n), e_rom_as_test(n);
  std::vector<char> hf_raw_ok(n, 0), hf_lifted_ok(n, 0);
  const std::vector<rom::PointErrors> failed_row(config.modes.size());
  parallel_for(n, [&](std::size_t i) {
    const auto k = static_cast<Eigen::Index>(i);
    try {
      const auto hf = problem.solve(raw.row(k).transpose());
      e_rom[i] = rom_errors(rom_bases, hf, ip, config.newton);
      hf_raw_ok[i] = 1;
    } catch (const NumericalError&) {
      e_rom[i] = failed_row;
    }
    try {
      const auto hf = problem.solve(lifted.params.row(k).transpose());
      e_rom_as[i] = rom_errors(rom_as_bases, hf, ip, config.newton);
      e_rom_as_test[i] = rom_errors(rom_bases, hf, ip, config.newton);
      hf_lifted_ok[i] = 1;
    } catch (const NumericalError&) {
      e_rom_as[i] = e_rom_as_test[i] = failed_row;
    }
  }, config.threads);
  int hf_failed = 0;
  for (std::size_t i = 0; i < n; ++i) hf_failed += (hf_raw_ok[i] ? 0 : 1) + (hf_lifted_ok[i] ? 0 : 1);
  check_failures(hf_failed, static_cast<int>(2 * n), "evaluate");

  EvaluateSummary summary;
  summary.rom = rom::aggregate_errors(config.modes, e_rom);
  summary.rom_as = rom::aggregate_errors(config.modes, e_rom_as);
  summary.rom_on_as_test = rom::aggregate_errors(config.modes, e_rom_as_test);
  rom::write_error_report(manifest.output("errors_rom.csv"), summary.rom, "rom");
  rom::write_error_report(manifest.output("errors_rom_as.csv"), summary.rom_as, "rom_as");
  rom::write_error_report(manifest.output("errors_rom_as_test.csv"), summary.rom_on_as_test, "rom");
  {
    std::ofstream out(manifest.output("qoi_errors.csv"));
    out << "N,rom,rom_as,rom_on_as_test\n";
    for (std::size_t j = 0; j < config.modes.size(); ++j)
      out << config.modes[j] << ',' << fmt17(summary.rom[j].err_qoi) << ',' << fmt17(summary.rom_as[j].err_qoi)
          << ',' << fmt17(summary.rom_on_as_test[j].err_qoi) << '\n';
  }
  {
    const auto m = static_cast<std::size_t>(raw.cols());
    auto header = prefixed_names("mu_", m);
    for (const auto& h : prefixed_names("lifted_", m)) header.push_back(h);
    MatrixXd rows(raw.rows(), 2 * raw.cols());
    rows << raw, lifted.params;
    write_csv(manifest.output("test_parameters.csv"), header, rows);
  }
  auto failures = [](const std::vector<rom::ErrorRow>& rows) {
    json j = json::array();
    for (const auto& r : rows) j.push_back({{"N", r.N}, {"evaluated", r.evaluated}, {"failed", r.failed}});
    return j;
  };
  manifest["hf_failed"] = hf_failed;
  manifest["clamped_points"] = lifted.clamped_points;
  manifest["clamped_coordinates"] = lifted.clamped_coordinates;
  manifest["rom_points"] = failures(summary.rom);
  manifest["rom_as_points"] = failures(summary.rom_as);
  manifest["rom_on_as_test_points"] = failures(summary.rom_on_as_test);
  manifest.write();
  return summary;
}

}  // namespace asrom::pipeline
