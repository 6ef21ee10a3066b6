#pragma once

#include <Eigen/Dense>
#include <cstdint>
#include <memory>
#include <optional>
#include <string>
#include <vector>

#include "asrom/asub.hpp"
#include "asrom/fem.hpp"
#include "asrom/geometry.hpp"
#include "asrom/rom.hpp"

namespace asrom::pipeline {

struct StudyConfig {
  geometry::BifurcationGeometry geometry;
  double morph_radius = 2.5;
  asub::Box box = asub::Box::uniform(10, 0.0, 0.3);
  fem::PhysicsConfig physics;  ///< reference_width follows geometry.channel_width
  fem::NewtonOptions newton;

  int n_train_as = 250;
  int n_test_as = 100;  ///< response-surface test set
  int k = 17;
  int n_boot = 500;
  int active_dimension = 0;  ///< 0 = spectral gap
  int max_surface_dimension = 4;
  int max_surface_order = 5;

  int n_train_rom = 0;  ///< 0 = n_train_as
  int n_train_rom_as = 100;
  int n_test_rom = 100;
  std::vector<int> modes = {2, 5, 10, 15, 20};

  std::uint64_t seed = 2019;
  unsigned threads = 0;

  int rom_train_count() const { return n_train_rom > 0 ? n_train_rom : n_train_as; }
  int max_modes() const;
  void validate() const;
};

/// Parses a JSON document; unknown keys and ill-typed values raise ConfigError.
StudyConfig parse_config(const std::string& json_text);
StudyConfig load_config(const std::string& path);
/// Canonical JSON with every field spelled out.
std::string config_to_json(const StudyConfig& config);
/// FNV-1a of the canonical JSON.
std::uint64_t config_hash(const StudyConfig& config);

/// Seed streams; every stage draws from derive_seed(config.seed, stream).
enum class Stream : std::uint64_t {
  as_train = 1,
  as_test = 2,
  bootstrap = 3,
  rom_train = 4,
  rom_as_train = 5,
  rom_test = 6,
};
std::uint64_t stream_seed(const StudyConfig& config, Stream stream);

/// Synthetic QoIs that stand in for the PDE: ridge_quadratic (a^T mu)^2, ridge_exp
/// exp(a^T mu), linear a^T mu, with a_j = j / m.
double synthetic_qoi(const std::string& name, const Eigen::VectorXd& mu);
Eigen::VectorXd synthetic_direction(std::size_t m);

/// Reference problem shared by every HF solve of a study.
class HFProblem {
 public:
  HFProblem(const StudyConfig& config, geometry::Mesh mesh, geometry::ControlPointSet cps);

  struct Solve {
    geometry::Mesh mesh;
    std::unique_ptr<fem::OperatorSet> ops;
    fem::HFSolution solution;
  };
  /// Morph, assemble, Newton, QoI.
  Solve solve(const Eigen::VectorXd& mu) const;
  geometry::Mesh morph(const Eigen::VectorXd& mu) const;
  std::unique_ptr<fem::OperatorSet> operators(const geometry::Mesh& mesh) const;

  const geometry::Mesh& reference_mesh() const { return mesh_; }
  const geometry::ControlPointSet& control_points() const { return cps_; }
  const std::shared_ptr<const fem::TaylorHoodSpace>& space() const { return space_; }
  const fem::InnerProducts& inner_products() const { return inner_; }
  const fem::SupremizerSolver& supremizers() const { return *supremizer_; }
  const Eigen::VectorXd& rom_lifting() const { return lifting_; }

 private:
  StudyConfig config_;
  geometry::Mesh mesh_;
  geometry::ControlPointSet cps_;
  geometry::MorphConfig morph_;
  std::shared_ptr<const fem::TaylorHoodSpace> space_;
  fem::InnerProducts inner_;
  std::shared_ptr<fem::SupremizerSolver> supremizer_;
  Eigen::VectorXd lifting_;
};

/// Loads mesh.txt and control_points.csv written by run_mesh.
HFProblem load_problem(const StudyConfig& config, const std::string& out_dir);

// ---------------------------------------------------------------------------
// Stages. Each writes its outputs plus manifest_<stage>.json into out_dir.

void run_mesh(const StudyConfig& config, const std::string& out_dir);

struct AuditSummary {
  int morphs = 0;
  double reference_max = 0.0;
  double pooled_fraction = 0.0;  ///< cells above reference_max over all cells of all morphs
  double worst_fraction = 0.0;   ///< largest per-morph fraction
};
/// With `mu`, writes morphed_mesh.txt and a one-row aspect_ratio.csv; otherwise audits
/// the n_train_as training parameters.
AuditSummary run_morph(const StudyConfig& config, const std::string& out_dir,
                       const std::optional<Eigen::VectorXd>& mu = std::nullopt);

struct TrainASSummary {
  asub::ActiveSubspace subspace;
  int hf_failures = 0;
};
TrainASSummary run_train_as(const StudyConfig& config, const std::string& out_dir,
                            const std::string& synthetic = "");

struct TrainROMSummary {
  rom::PODBasis basis;
  int snapshots = 0;
  int failures = 0;
  int clamped_coordinates = 0;
};
TrainROMSummary run_train_rom(const StudyConfig& config, const std::string& out_dir,
                              const std::string& variant);

struct EvaluateSummary {
  std::vector<rom::ErrorRow> rom;            ///< raw test parameters
  std::vector<rom::ErrorRow> rom_as;         ///< lifted test parameters
  std::vector<rom::ErrorRow> rom_on_as_test; ///< rom basis on the lifted test parameters
};
EvaluateSummary run_evaluate(const StudyConfig& config, const std::string& out_dir);

}  // namespace asrom::pipeline
