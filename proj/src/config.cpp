#include <algorithm>
#include <fstream>
#include <set>
#include <sstream>

#include "asrom/error.hpp"
#include "asrom/pipeline.hpp"
#include "asrom/rng.hpp"
#include "json.hpp"

namespace asrom::pipeline {

using nlohmann::json;

int StudyConfig::max_modes() const {
  return modes.empty() ? 0 : *std::max_element(modes.begin(), modes.end());
}

void StudyConfig::validate() const {
  geometry.validate();
  box.validate();
  physics.validate();
  if (!(morph_radius > 0.0)) throw ConfigError("morph.radius must be positive");
  if (box.dimension() != 10)
    throw ConfigError("the bifurcation has 10 movable control points; the box must have dimension 10");
  if (newton.max_iterations < 1) throw ConfigError("newton.max_iterations must be at least 1");
  if (!(newton.absolute_tolerance > 0.0) || !(newton.relative_tolerance > 0.0))
    throw ConfigError("newton tolerances must be positive");
  const auto m = static_cast<int>(box.dimension());
  if (n_train_as < m + 2) throw ConfigError("active_subspace.n_train must be at least m + 2");
  if (n_test_as < 1) throw ConfigError("active_subspace.n_test must be positive");
  if (k < m + 1 || k > n_train_as) throw ConfigError("active_subspace.k must lie in [m + 1, n_train]");
  if (n_boot < 1) throw ConfigError("active_subspace.n_boot must be positive");
  if (active_dimension < 0 || active_dimension >= m)
    throw ConfigError("active_subspace.active_dimension must be \"auto\" or in [1, m - 1]");
  if (max_surface_dimension < 1 || max_surface_dimension > m || max_surface_order < 1)
    throw ConfigError("response-surface grid extent out of range");
  if (n_train_rom < 0 || n_train_rom_as < 2 || n_test_rom < 1) throw ConfigError("ROM set sizes out of range");
  if (rom_train_count() < 2) throw ConfigError("rom.n_train must be at least 2");
  if (modes.empty()) throw ConfigError("rom.modes must not be empty");
  for (int N : modes)
    if (N < 1) throw ConfigError("rom.modes entries must be positive");
  if (max_modes() > std::min(rom_train_count(), n_train_rom_as))
    throw ConfigError("rom.modes exceeds the number of training snapshots");
}

namespace {

/// Reads the keys of one JSON object, remembering which were consumed.
class Section {
 public:
  Section(const json& j, std::string path) : j_(j), path_(std::move(path)) {
    if (!j_.is_object()) throw ConfigError(path_ + " must be an object");
  }

  template <class T>
  void get(const std::string& key, T& out) {
    seen_.insert(key);
    auto it = j_.find(key);
    if (it == j_.end()) return;
    try {
      if constexpr (std::is_same_v<T, double>) {
        if (!it->is_number()) throw ConfigError("");
      } else if constexpr (std::is_same_v<T, bool>) {
        if (!it->is_boolean()) throw ConfigError("");
      } else if constexpr (std::is_integral_v<T>) {
        if (!it->is_number_integer()) throw ConfigError("");
        if constexpr (std::is_unsigned_v<T>)
          if (it->template get<long long>() < 0) throw ConfigError("");
      }
      out = it->template get<T>();
    } catch (const std::exception&) {
      throw ConfigError(path_ + "." + key + " has the wrong type");
    }
  }

  const json* child(const std::string& key) {
    seen_.insert(key);
    auto it = j_.find(key);
    return it == j_.end() ? nullptr : &*it;
  }

  void finish() const {
    for (auto it = j_.begin(); it != j_.end(); ++it)
      if (!seen_.count(it.key())) throw ConfigError("unknown configuration key " + path_ + "." + it.key());
  }

 private:
  const json& j_;
  std::string path_;
  std::set<std::string> seen_;
};

Eigen::VectorXd read_bound(const json& j, const std::string& name, std::size_t m) {
  if (j.is_number()) return Eigen::VectorXd::Constant(static_cast<Eigen::Index>(m), j.get<double>());
  if (!j.is_array()) throw ConfigError(name + " must be a number or an array");
  Eigen::VectorXd v(static_cast<Eigen::Index>(j.size()));
  for (std::size_t i = 0; i < j.size(); ++i) {
    if (!j[i].is_number()) throw ConfigError(name + " entries must be numbers");
    v[static_cast<Eigen::Index>(i)] = j[i].get<double>();
  }
  return v;
}

}  // namespace

StudyConfig parse_config(const std::string& json_text) {
  json root;
  try {
    root = json::parse(json_text);
  } catch (const json::parse_error& e) {
    throw ConfigError(std::string("configuration is not valid JSON: ") + e.what());
  }
  StudyConfig c;
  double radius = 0.0;  // 0 = follow the branch width
  Section top(root, "config");
  if (const json* g = top.child("geometry")) {
    Section s(*g, "geometry");
    s.get("inlet_length", c.geometry.inlet_length);
    s.get("branch_length", c.geometry.branch_length);
    s.get("channel_width", c.geometry.channel_width);
    s.get("branch_angle_deg", c.geometry.branch_angle_deg);
    s.get("resolution", c.geometry.resolution);
    s.finish();
  }
  if (const json* mj = top.child("morph")) {
    Section s(*mj, "morph");
    s.get("radius", radius);
    if (mj->contains("radius") && !(radius > 0.0)) throw ConfigError("morph.radius must be positive");
    std::size_t m = c.box.dimension();
    s.get("dimension", m);
    const json* lo = s.child("box_low");
    const json* hi = s.child("box_high");
    c.box = asub::Box::uniform(m, 0.0, 0.3);
    if (lo) c.box.low = read_bound(*lo, "morph.box_low", m);
    if (hi) c.box.high = read_bound(*hi, "morph.box_high", m);
    s.finish();
  }
  c.morph_radius = radius > 0.0 ? radius : c.geometry.channel_width;
  if (const json* pj = top.child("physics")) {
    Section s(*pj, "physics");
    s.get("viscosity", c.physics.viscosity);
    s.get("inlet_velocity", c.physics.inlet_velocity);
    s.finish();
  }
  c.physics.reference_width = c.geometry.channel_width;
  if (const json* nj = top.child("newton")) {
    Section s(*nj, "newton");
    s.get("absolute_tolerance", c.newton.absolute_tolerance);
    s.get("relative_tolerance", c.newton.relative_tolerance);
    s.get("max_iterations", c.newton.max_iterations);
    s.get("reynolds_continuation", c.newton.reynolds_continuation);
    s.finish();
  }
  if (const json* aj = top.child("active_subspace")) {
    Section s(*aj, "active_subspace");
    s.get("n_train", c.n_train_as);
    s.get("n_test", c.n_test_as);
    s.get("k", c.k);
    s.get("n_boot", c.n_boot);
    if (const json* M = s.child("active_dimension")) {
      if (M->is_string() && M->get<std::string>() == "auto") c.active_dimension = 0;
      else if (M->is_number_integer() && M->get<int>() >= 1) c.active_dimension = M->get<int>();
      else throw ConfigError("active_subspace.active_dimension must be \"auto\" or a positive integer");
    }
    s.get("max_surface_dimension", c.max_surface_dimension);
    s.get("max_surface_order", c.max_surface_order);
    s.finish();
  }
  if (const json* rj = top.child("rom")) {
    Section s(*rj, "rom");
    if (const json* n = s.child("n_train")) {
      if (n->is_string() && n->get<std::string>() == "auto") c.n_train_rom = 0;
      else if (n->is_number_integer() && n->get<int>() >= 1) c.n_train_rom = n->get<int>();
      else throw ConfigError("rom.n_train must be \"auto\" or a positive integer");
    }
    s.get("n_train_as", c.n_train_rom_as);
    s.get("n_test", c.n_test_rom);
    if (const json* modes = s.child("modes")) {
      if (!modes->is_array()) throw ConfigError("rom.modes must be an array");
      c.modes.clear();
      for (const auto& v : *modes) {
        if (!v.is_number_integer()) throw ConfigError("rom.modes entries must be integers");
        c.modes.push_back(v.get<int>());
      }
    }
    s.finish();
  }
  top.get("seed", c.seed);
  top.get("threads", c.threads);
  top.finish();
  c.validate();
  return c;
}

StudyConfig load_config(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw ConfigError("cannot read configuration " + path);
  std::stringstream ss;
  ss << in.rdbuf();
  return parse_config(ss.str());
}

std::string config_to_json(const StudyConfig& c) {
  auto vec = [](const Eigen::VectorXd& v) {
    return std::vector<double>(v.data(), v.data() + v.size());
  };
  json j;
  j["geometry"] = {{"inlet_length", c.geometry.inlet_length},
                   {"branch_length", c.geometry.branch_length},
                   {"channel_width", c.geometry.channel_width},
                   {"branch_angle_deg", c.geometry.branch_angle_deg},
                   {"resolution", c.geometry.resolution}};
  j["morph"] = {{"radius", c.morph_radius},
                {"dimension", c.box.dimension()},
                {"box_low", vec(c.box.low)},
                {"box_high", vec(c.box.high)}};
  j["physics"] = {{"viscosity", c.physics.viscosity}, {"inlet_velocity", c.physics.inlet_velocity}};
  j["newton"] = {{"absolute_tolerance", c.newton.absolute_tolerance},
                 {"relative_tolerance", c.newton.relative_tolerance},
                 {"max_iterations", c.newton.max_iterations},
                 {"reynolds_continuation", c.newton.reynolds_continuation}};
  j["active_subspace"] = {{"n_train", c.n_train_as},
                          {"n_test", c.n_test_as},
                          {"k", c.k},
                          {"n_boot", c.n_boot},
                          {"max_surface_dimension", c.max_surface_dimension},
                          {"max_surface_order", c.max_surface_order}};
  if (c.active_dimension > 0) j["active_subspace"]["active_dimension"] = c.active_dimension;
  else j["active_subspace"]["active_dimension"] = "auto";
  j["rom"] = {{"n_train", c.rom_train_count()},
              {"n_train_as", c.n_train_rom_as},
              {"n_test", c.n_test_rom},
              {"modes", c.modes}};
  j["seed"] = c.seed;
  j["threads"] = c.threads;
  return j.dump(2) + "\n";
}

std::uint64_t config_hash(const StudyConfig& config) {
  // Thread count does not affect results, so it is left out of the hash.
  StudyConfig c = config;
  c.threads = 0;
  std::uint64_t h = 0xcbf29ce484222325ULL;
  for (unsigned char ch : config_to_json(c)) {
    h ^= ch;
    h *= 0x100000001b3ULL;
  }
  return h;
}

std::uint64_t stream_seed(const StudyConfig& config, Stream stream) {
  return derive_seed(config.seed, static_cast<std::uint64_t>(stream));
}

}  // namespace asrom::pipeline
