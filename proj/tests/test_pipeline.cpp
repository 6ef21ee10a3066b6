#include <gtest/gtest.h>

#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <set>
#include <sstream>

#include <nlohmann/json.hpp>

#include "asrom/csv.hpp"
#include "asrom/error.hpp"
#include "asrom/pipeline.hpp"

using namespace asrom;
using namespace asrom::pipeline;
namespace fs = std::filesystem;

namespace {

fs::path fresh_dir(const std::string& name) {
  const auto d = fs::temp_directory_path() / ("asrom_pipeline_" + name);
  fs::remove_all(d);
  fs::create_directories(d);
  return d;
}

std::string slurp(const fs::path& p) {
  std::ifstream in(p, std::ios::binary);
  EXPECT_TRUE(in.good()) << p;
  std::ostringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

nlohmann::json manifest(const fs::path& dir, const std::string& stage) {
  return nlohmann::json::parse(slurp(dir / ("manifest_" + stage + ".json")));
}

/// Every regular file except manifests (which carry wall-clock timings).
std::map<std::string, std::string> artifacts(const fs::path& dir) {
  std::map<std::string, std::string> out;
  for (const auto& e : fs::directory_iterator(dir)) {
    const auto name = e.path().filename().string();
    if (name.rfind("manifest_", 0) != 0) out[name] = slurp(e.path());
  }
  return out;
}

StudyConfig tiny_config() {
  return parse_config(R"({
    "geometry": {"resolution": 4},
    "active_subspace": {"n_train": 24, "n_test": 8, "n_boot": 50, "max_surface_dimension": 1, "max_surface_order": 2},
    "rom": {"n_train": 10, "n_train_as": 6, "n_test": 3, "modes": [1, 2, 4]},
    "seed": 11
  })");
}

}  // namespace

TEST(Config, Defaults) {
  const auto c = parse_config("{}");
  EXPECT_EQ(c.n_train_as, 250);
  EXPECT_EQ(c.k, 17);
  EXPECT_EQ(c.rom_train_count(), 250);
  EXPECT_EQ(c.n_train_rom_as, 100);
  EXPECT_EQ(c.n_test_rom, 100);
  EXPECT_EQ(c.box.dimension(), 10u);
  EXPECT_DOUBLE_EQ(c.box.low.minCoeff(), 0.0);
  EXPECT_DOUBLE_EQ(c.box.high.maxCoeff(), 0.3);
  EXPECT_EQ(c.max_modes(), 20);
  EXPECT_EQ(c.active_dimension, 0);
  EXPECT_NO_THROW(c.validate());
}

TEST(Config, OverridesAndCanonicalForm) {
  const auto c = parse_config(R"({"active_subspace": {"n_train": 40, "k": 11}, "rom": {"modes": [3, 7]}, "seed": 5})");
  EXPECT_EQ(c.n_train_as, 40);
  EXPECT_EQ(c.k, 11);
  EXPECT_EQ(c.rom_train_count(), 40);
  EXPECT_EQ(c.max_modes(), 7);
  EXPECT_EQ(c.seed, 5u);
  const auto back = parse_config(config_to_json(c));
  EXPECT_EQ(config_to_json(back), config_to_json(c));
  EXPECT_EQ(config_hash(back), config_hash(c));
  auto other = c;
  other.seed = 6;
  EXPECT_NE(config_hash(other), config_hash(c));
}

TEST(Config, RejectsUnknownKeysAndBadValues) {
  EXPECT_THROW(parse_config(R"({"sed": 1})"), ConfigError);
  EXPECT_THROW(parse_config(R"({"rom": {"n_tset": 5}})"), ConfigError);
  EXPECT_THROW(parse_config(R"({"active_subspace": {"k": "many"}})"), ConfigError);
  EXPECT_THROW(parse_config(R"({"geometry": {"resolution": 2.5}})"), ConfigError);
  EXPECT_THROW(parse_config(R"({"morph": {"radius": -1}})"), ConfigError);
  EXPECT_THROW(parse_config("not json"), ConfigError);
  EXPECT_THROW(parse_config(R"({"active_subspace": {"k": 0}})").validate(), ConfigError);
  EXPECT_THROW(load_config("/nonexistent/config.json"), ConfigError);
}

TEST(Seeds, StreamsAreDistinctAndReproducible) {
  const auto c = parse_config("{}");
  std::set<std::uint64_t> seen;
  for (auto s : {Stream::as_train, Stream::as_test, Stream::bootstrap, Stream::rom_train, Stream::rom_as_train,
                 Stream::rom_test})
    seen.insert(stream_seed(c, s));
  EXPECT_EQ(seen.size(), 6u);
  EXPECT_EQ(stream_seed(c, Stream::rom_test), stream_seed(parse_config("{}"), Stream::rom_test));
}

TEST(Synthetic, ClosedForms) {
  const auto a = synthetic_direction(4);
  EXPECT_DOUBLE_EQ(a[0], 0.25);
  EXPECT_DOUBLE_EQ(a[3], 1.0);
  const Eigen::VectorXd mu = (Eigen::VectorXd(4) << 1.0, 0.0, 0.0, 2.0).finished();
  EXPECT_DOUBLE_EQ(synthetic_qoi("linear", mu), 2.25);
  EXPECT_DOUBLE_EQ(synthetic_qoi("ridge_quadratic", mu), 2.25 * 2.25);
  EXPECT_DOUBLE_EQ(synthetic_qoi("ridge_exp", mu), std::exp(2.25));
  EXPECT_THROW(synthetic_qoi("sombrero", mu), ConfigError);
}

TEST(Stages, MeshIsDeterministicAndReadable) {
  const auto c = tiny_config();
  const auto a = fresh_dir("mesh_a"), b = fresh_dir("mesh_b");
  run_mesh(c, a.string());
  run_mesh(c, b.string());
  EXPECT_EQ(artifacts(a), artifacts(b));
  const auto mesh = geometry::read_mesh_file((a / "mesh.txt").string());
  EXPECT_NO_THROW(geometry::validate(mesh));
  const auto cps = geometry::read_control_points_file((a / "control_points.csv").string());
  EXPECT_EQ(cps.movable_count(), 10u);
  const auto m = manifest(a, "mesh");
  EXPECT_EQ(m["stage"], "mesh");
  EXPECT_EQ(m["config_hash"].get<std::string>().size(), 16u);
  EXPECT_EQ(m["outputs"].size(), 2u);
  EXPECT_TRUE(m.contains("wall_clock_seconds"));
}

TEST(Stages, IdentityMorphAndAudit) {
  // study resolution: the audit bound is a property of the default mesh
  const auto c = parse_config(R"({"active_subspace": {"n_train": 24}})");
  const auto d = fresh_dir("morph");
  run_mesh(c, d.string());
  run_morph(c, d.string(), Eigen::VectorXd::Zero(10));
  EXPECT_EQ(slurp(d / "morphed_mesh.txt"), slurp(d / "mesh.txt"));
  EXPECT_THROW(run_morph(c, d.string(), Eigen::VectorXd::Constant(10, 0.5)), ConfigError);
  const auto audit = run_morph(c, d.string());
  EXPECT_EQ(audit.morphs, c.n_train_as);
  EXPECT_GT(audit.reference_max, 1.0);
  EXPECT_LE(audit.pooled_fraction, 0.01);
  EXPECT_GE(audit.worst_fraction, audit.pooled_fraction);
  const auto t = read_csv((d / "aspect_ratio.csv").string());
  EXPECT_EQ(t.rows.size(), static_cast<std::size_t>(c.n_train_as));
  EXPECT_EQ(t.header.back(), "frac_above_ref_max");
}

TEST(Stages, MissingInputsNameTheProducer) {
  const auto c = tiny_config();
  const auto d = fresh_dir("missing");
  try {
    run_morph(c, d.string());
    FAIL() << "expected ConfigError";
  } catch (const ConfigError& e) {
    EXPECT_NE(std::string(e.what()).find("mesh"), std::string::npos);
  }
  EXPECT_THROW(run_train_as(c, d.string()), ConfigError);
  EXPECT_THROW(run_train_rom(c, d.string(), "rom"), ConfigError);
  EXPECT_THROW(run_evaluate(c, d.string()), ConfigError);
  run_mesh(c, d.string());
  // rom_as needs the active subspace
  EXPECT_THROW(run_train_rom(c, d.string(), "rom_as"), ConfigError);
  EXPECT_THROW(run_train_rom(c, d.string(), "greedy"), ConfigError);
}

TEST(Stages, SyntheticActiveSubspaceIsDeterministic) {
  auto c = parse_config(R"({"active_subspace": {"n_train": 300, "n_test": 50, "n_boot": 100}, "seed": 3})");
  const auto a = fresh_dir("syn_a"), b = fresh_dir("syn_b");
  const auto ra = run_train_as(c, a.string(), "ridge_quadratic");
  run_train_as(c, b.string(), "ridge_quadratic");
  EXPECT_EQ(ra.subspace.M, 1);
  EXPECT_GE(std::abs(ra.subspace.W1.col(0).dot(synthetic_direction(10).normalized())), 0.99);
  const auto fa = artifacts(a);
  EXPECT_EQ(fa, artifacts(b));
  for (const char* f : {"samples.csv", "samples_test.csv", "gradients.csv", "eigenvalues.csv", "eigenvectors.csv",
                        "active_dimension.txt", "summary_1d.csv", "summary_2d.csv", "error_grid.csv"})
    EXPECT_EQ(fa.count(f), 1u) << f;
  EXPECT_EQ(manifest(a, "train_as")["active_dimension"], 1);
  const auto grid = read_csv((a / "error_grid.csv").string());
  EXPECT_EQ(grid.header.front(), "M");
  c.seed = 4;
  const auto cdir = fresh_dir("syn_c");
  run_train_as(c, cdir.string(), "ridge_quadratic");
  EXPECT_NE(slurp(cdir / "samples.csv"), fa.at("samples.csv"));
  EXPECT_THROW(run_train_as(c, cdir.string(), "unknown"), ConfigError);
}

TEST(Stages, EndToEndOnCoarseMesh) {
  const auto c = tiny_config();
  const auto d = fresh_dir("e2e");
  run_mesh(c, d.string());
  const auto as = run_train_as(c, d.string());
  EXPECT_EQ(as.hf_failures, 0);
  EXPECT_GE(as.subspace.M, 1);
  const auto rom = run_train_rom(c, d.string(), "rom");
  EXPECT_EQ(rom.snapshots, 10);
  EXPECT_EQ(rom.clamped_coordinates, 0);
  const auto rom_as = run_train_rom(c, d.string(), "rom_as");
  EXPECT_EQ(rom_as.snapshots, 6);
  const auto ev = run_evaluate(c, d.string());
  ASSERT_EQ(ev.rom.size(), 3u);
  ASSERT_EQ(ev.rom_as.size(), 3u);
  for (const auto* rows : {&ev.rom, &ev.rom_as, &ev.rom_on_as_test})
    for (const auto& r : *rows) {
      EXPECT_EQ(r.evaluated + r.failed, 3);
      EXPECT_TRUE(std::isfinite(r.err_u));
      EXPECT_LT(r.err_u, 1.0);
    }
  EXPECT_LE(ev.rom.back().err_u, ev.rom.front().err_u);
  for (const char* f : {"basis_rom.txt", "basis_rom_as.txt", "singular_values_rom.csv", "singular_values_rom_as.csv",
                        "snapshots_rom.csv", "snapshots_rom_as.csv", "errors_rom.csv", "errors_rom_as.csv",
                        "errors_rom_as_test.csv", "qoi_errors.csv", "test_parameters.csv"})
    EXPECT_TRUE(fs::exists(d / f)) << f;
  // lifted test parameters lie in the box
  const auto tp = read_csv((d / "test_parameters.csv").string()).matrix();
  EXPECT_GE(tp.rightCols(10).minCoeff(), 0.0);
  EXPECT_LE(tp.rightCols(10).maxCoeff(), 0.3);
  const auto m = manifest(d, "evaluate");
  EXPECT_EQ(m["config_hash"], manifest(d, "mesh")["config_hash"]);
  EXPECT_TRUE(m.contains("effective_modes_rom_as"));
  // rerunning a stage reproduces its artifacts
  const auto before = artifacts(d);
  run_train_rom(c, d.string(), "rom");
  EXPECT_EQ(artifacts(d), before);
}

#ifdef ASROM_CLI
namespace {

int run_cli(const std::string& args) {
  const std::string cmd = std::string(ASROM_CLI) + " " + args + " >/dev/null 2>&1";
  const int status = std::system(cmd.c_str());
  return WIFEXITED(status) ? WEXITSTATUS(status) : -1;
}

}  // namespace

TEST(Cli, ExitCodes) {
  const auto d = fresh_dir("cli");
  EXPECT_EQ(run_cli("--help"), 0);
  EXPECT_EQ(run_cli(""), 2);
  EXPECT_EQ(run_cli("frobnicate"), 2);
  EXPECT_EQ(run_cli("train-rom --out " + d.string()), 2);
  EXPECT_EQ(run_cli("evaluate --out " + d.string()), 2);
  EXPECT_EQ(run_cli("train-as --synthetic-qoi sombrero --out " + d.string()), 2);
  EXPECT_EQ(run_cli("--config /nonexistent.json mesh --out " + d.string()), 2);
  {
    std::ofstream cfg(d / "small.json");
    cfg << R"({"geometry": {"resolution": 4}, "active_subspace": {"n_train": 30, "n_test": 10, "n_boot": 20,
              "max_surface_dimension": 1, "max_surface_order": 2}})";
  }
  const std::string small = "--config " + (d / "small.json").string() + " ";
  EXPECT_EQ(run_cli("mesh " + small + "--out " + d.string()), 0);
  EXPECT_TRUE(fs::exists(d / "mesh.txt"));
  EXPECT_EQ(run_cli("morph " + small + "--out " + d.string() + " --mu 0,0,0,0,0,0,0,0,0,0"), 0);
  EXPECT_EQ(run_cli("morph " + small + "--out " + d.string() + " --mu 0,0"), 2);
  EXPECT_EQ(run_cli("train-as " + small + "--synthetic-qoi ridge_exp --seed 9 --out " + d.string()), 0);
  EXPECT_EQ(manifest(d, "train_as")["active_dimension"], 1);
  // Newton cannot converge in one step without continuation: most HF solves fail
  {
    std::ofstream cfg(d / "hard.json");
    cfg << R"({"geometry": {"resolution": 4}, "physics": {"viscosity": 0.002},
              "newton": {"max_iterations": 1, "reynolds_continuation": false},
              "active_subspace": {"n_train": 20, "n_test": 5, "max_surface_dimension": 1, "max_surface_order": 1}})";
  }
  EXPECT_EQ(run_cli("train-as --config " + (d / "hard.json").string() + " --out " + d.string()), 3);
}
#endif
