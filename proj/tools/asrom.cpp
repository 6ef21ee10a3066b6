#include <CLI11.hpp>

#include <iostream>
#include <optional>
#include <sstream>
#include <string>

#include "asrom/error.hpp"
#include "asrom/pipeline.hpp"

namespace {

using namespace asrom;

Eigen::VectorXd parse_mu(const std::string& text) {
  std::vector<double> values;
  std::stringstream ss(text);
  std::string item;
  while (std::getline(ss, item, ',')) {
    try {
      std::size_t used = 0;
      values.push_back(std::stod(item, &used));
      if (used != item.size()) throw std::invalid_argument(item);
    } catch (const std::exception&) {
      throw ConfigError("--mu expects comma-separated numbers, got '" + item + "'");
    }
  }
  return Eigen::Map<Eigen::VectorXd>(values.data(), static_cast<Eigen::Index>(values.size()));
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Active-subspace reduced-order modeling of a parametrized bifurcation flow"};
  app.require_subcommand(1);

  std::string config_path, out_dir = "out", variant, synthetic, mu_text;
  std::optional<std::uint64_t> seed;
  auto common = [&](CLI::App* sub) {
    sub->add_option("--config", config_path, "JSON study configuration (defaults when omitted)");
    sub->add_option("--out", out_dir, "output directory")->capture_default_str();
    sub->add_option("--seed", seed, "override the configuration seed");
  };
  auto* mesh = app.add_subcommand("mesh", "generate the reference mesh and control points");
  auto* morph = app.add_subcommand("morph", "morph one parameter or audit the training morphs");
  auto* train_as = app.add_subcommand("train-as", "sample, estimate gradients, build the active subspace");
  auto* train_rom = app.add_subcommand("train-rom", "collect snapshots and build POD bases");
  auto* evaluate = app.add_subcommand("evaluate", "compare ROM and ROM+AS on the shared test set");
  for (auto* sub : {mesh, morph, train_as, train_rom, evaluate}) common(sub);
  morph->add_option("--mu", mu_text, "comma-separated parameter; omitted = audit the training set");
  train_as->add_option("--synthetic-qoi", synthetic, "analytic QoI instead of the PDE")
      ->check(CLI::IsMember({"ridge_quadratic", "ridge_exp", "linear"}));
  train_rom->add_option("--variant", variant, "rom or rom_as")
      ->required()
      ->check(CLI::IsMember({"rom", "rom_as"}));

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int code = app.exit(e);
    return code == 0 ? 0 : 2;
  }

  try {
    auto config = config_path.empty() ? pipeline::parse_config("{}") : pipeline::load_config(config_path);
    if (seed) config.seed = *seed;
    if (mesh->parsed()) {
      pipeline::run_mesh(config, out_dir);
    } else if (morph->parsed()) {
      std::optional<Eigen::VectorXd> mu;
      if (!mu_text.empty()) mu = parse_mu(mu_text);
      const auto audit = pipeline::run_morph(config, out_dir, mu);
      std::cout << "morphs " << audit.morphs << "  reference max aspect ratio " << audit.reference_max
                << "  pooled fraction above " << audit.pooled_fraction << "  worst " << audit.worst_fraction
                << '\n';
    } else if (train_as->parsed()) {
      const auto s = pipeline::run_train_as(config, out_dir, synthetic);
      std::cout << "active dimension M = " << s.subspace.M << '\n';
    } else if (train_rom->parsed()) {
      const auto s = pipeline::run_train_rom(config, out_dir, variant);
      std::cout << variant << ": " << s.snapshots << " snapshots, modes " << s.basis.N_u << '/' << s.basis.N_s
                << '/' << s.basis.N_p << ", clamped coordinates " << s.clamped_coordinates << '\n';
    } else if (evaluate->parsed()) {
      const auto s = pipeline::run_evaluate(config, out_dir);
      const auto& a = s.rom_on_as_test.back();
      const auto& b = s.rom_as.back();
      std::cout << "N = " << a.N << " on the AS-consistent test set: velocity " << a.err_u << " (rom) vs "
                << b.err_u << " (rom_as)\n";
    }
  } catch (const ConfigError& e) {
    std::cerr << "asrom: configuration error: " << e.what() << '\n';
    return 2;
  } catch (const NumericalError& e) {
    std::cerr << "asrom: numerical failure: " << e.what() << '\n';
    return 3;
  } catch (const std::exception& e) {
    std::cerr << "asrom: " << e.what() << '\n';
    return 3;
  }
  return 0;
}
