#include "morphgrasp/config.hpp"

#include "morphgrasp/errors.hpp"

#include <fstream>
#include <sstream>

namespace morphgrasp {

using json = nlohmann::ordered_json;

std::uint64_t fnv1a(std::string_view bytes) {
  std::uint64_t h = 1469598103934665603ull;
  for (unsigned char c : bytes) {
    h ^= c;
    h *= 1099511628211ull;
  }
  return h;
}

json RunConfig::to_json() const {
  json j;
  j["seed"] = seed;
  j["model"] = {
      {"dim", model.denoiser.dim},
      {"blocks", model.denoiser.blocks},
      {"cross_heads", model.denoiser.cross_heads},
      {"ff_mult", model.denoiser.ff_mult},
      {"morph", {{"layers", model.morph.layers},
                 {"heads", model.morph.heads},
                 {"max_hops", model.morph.max_hops},
                 {"hard_mask", model.morph.hard_mask},
                 {"ff_mult", model.morph.ff_mult},
                 {"standardize", model.morph.standardize},
                 {"column_mean", model.morph.column_mean},
                 {"column_scale", model.morph.column_scale}}},
      {"points", {{"groups", model.points.groups}, {"neighbors", model.points.neighbors}}},
      {"cloud_points", model.cloud_points},
  };
  j["diffusion"] = {{"timesteps", diffusion.timesteps},
                    {"beta_start", diffusion.beta_start ? json(*diffusion.beta_start) : json(nullptr)},
                    {"beta_end", diffusion.beta_end ? json(*diffusion.beta_end) : json(nullptr)},
                    {"canonicalize", diffusion.canonicalize}};
  j["physics"] = {{"tau", physics.tau},
                  {"d_th", physics.d_th},
                  {"eps_guard", physics.eps_guard},
                  {"hand_points", physics.hand_points},
                  {"exclude_adjacent", physics.exclude_adjacent}};
  j["alpha"] = {{"spf", alpha.spf}, {"erf", alpha.erf}, {"srf", alpha.srf}};
  j["train"] = {{"lr", train.lr},
                {"lr_final", train.lr_final},
                {"batch_size", train.batch_size},
                {"steps", train.steps},
                {"checkpoint_every", train.checkpoint_every},
                {"log_every", train.log_every},
                {"clip_norm", train.clip_norm},
                {"dataset", train.dataset}};
  j["sample"] = {{"n", sample.n}, {"steps", sample.steps}};
  j["quality"] = {{"contact_tolerance", quality.contact_tolerance}};
  j["toy"] = {{"urdf", toy.urdf},
              {"mapping", toy.mapping},
              {"grasps", toy.grasps},
              {"spheres", toy.spheres},
              {"boxes", toy.boxes},
              {"sphere_radius_min", toy.sphere_radius_min},
              {"sphere_radius_max", toy.sphere_radius_max}};
  return j;
}

namespace {

void check_known_keys(const json& defaults, const json& overrides, const std::string& path) {
  if (!overrides.is_object()) return;
  for (const auto& [key, value] : overrides.items()) {
    if (!defaults.contains(key)) throw ValidationError("config: unknown key '" + path + key + "'");
    if (defaults[key].is_object()) check_known_keys(defaults[key], value, path + key + ".");
  }
}

std::optional<double> opt_double(const json& j) {
  if (j.is_null()) return std::nullopt;
  return j.get<double>();
}

}  // namespace

RunConfig RunConfig::from_json(const json& overrides) {
  RunConfig c;
  json merged = c.to_json();
  if (!overrides.is_null()) {
    if (!overrides.is_object()) throw ValidationError("config: top level must be an object");
    check_known_keys(merged, overrides, "");
    merged.merge_patch(overrides);
    // merge_patch drops keys set to null; restore optional fields explicitly.
    for (const char* k : {"beta_start", "beta_end"})
      if (!merged["diffusion"].contains(k)) merged["diffusion"][k] = nullptr;
  }
  try {
    c.seed = merged["seed"].get<std::uint64_t>();
    const json& m = merged["model"];
    c.model.denoiser.dim = m["dim"].get<int>();
    c.model.denoiser.blocks = m["blocks"].get<int>();
    c.model.denoiser.cross_heads = m["cross_heads"].get<int>();
    c.model.denoiser.ff_mult = m["ff_mult"].get<int>();
    c.model.morph.dim = c.model.denoiser.dim;
    c.model.morph.layers = m["morph"]["layers"].get<int>();
    c.model.morph.heads = m["morph"]["heads"].get<int>();
    c.model.morph.max_hops = m["morph"]["max_hops"].get<int>();
    c.model.morph.hard_mask = m["morph"]["hard_mask"].get<bool>();
    c.model.morph.ff_mult = m["morph"]["ff_mult"].get<int>();
    c.model.morph.standardize = m["morph"]["standardize"].get<bool>();
    c.model.morph.column_mean = m["morph"]["column_mean"].get<std::array<double, kMorphFeatures>>();
    c.model.morph.column_scale = m["morph"]["column_scale"].get<std::array<double, kMorphFeatures>>();
    c.model.points.dim = c.model.denoiser.dim;
    c.model.points.groups = m["points"]["groups"].get<int>();
    c.model.points.neighbors = m["points"]["neighbors"].get<int>();
    c.model.cloud_points = m["cloud_points"].get<int>();
    const json& d = merged["diffusion"];
    c.diffusion.timesteps = d["timesteps"].get<int>();
    c.diffusion.beta_start = opt_double(d["beta_start"]);
    c.diffusion.beta_end = opt_double(d["beta_end"]);
    c.diffusion.canonicalize = d["canonicalize"].get<bool>();
    const json& p = merged["physics"];
    c.physics.tau = p["tau"].get<double>();
    c.physics.d_th = p["d_th"].get<double>();
    c.physics.eps_guard = p["eps_guard"].get<double>();
    c.physics.hand_points = p["hand_points"].get<int>();
    c.physics.exclude_adjacent = p["exclude_adjacent"].get<bool>();
    c.alpha.spf = merged["alpha"]["spf"].get<double>();
    c.alpha.erf = merged["alpha"]["erf"].get<double>();
    c.alpha.srf = merged["alpha"]["srf"].get<double>();
    const json& t = merged["train"];
    c.train.lr = t["lr"].get<double>();
    c.train.lr_final = t["lr_final"].get<double>();
    c.train.batch_size = t["batch_size"].get<int>();
    c.train.steps = t["steps"].get<int>();
    c.train.checkpoint_every = t["checkpoint_every"].get<int>();
    c.train.log_every = t["log_every"].get<int>();
    c.train.clip_norm = t["clip_norm"].get<double>();
    c.train.dataset = t["dataset"].get<std::string>();
    c.sample.n = merged["sample"]["n"].get<int>();
    c.sample.steps = merged["sample"]["steps"].get<int>();
    c.quality.contact_tolerance = merged["quality"]["contact_tolerance"].get<double>();
    const json& y = merged["toy"];
    c.toy.urdf = y["urdf"].get<std::string>();
    c.toy.mapping = y["mapping"].get<std::string>();
    c.toy.grasps = y["grasps"].get<int>();
    c.toy.spheres = y["spheres"].get<int>();
    c.toy.boxes = y["boxes"].get<int>();
    c.toy.sphere_radius_min = y["sphere_radius_min"].get<double>();
    c.toy.sphere_radius_max = y["sphere_radius_max"].get<double>();
  } catch (const json::exception& e) {
    throw ValidationError(std::string("config: ") + e.what());
  }
  c.validate();
  return c;
}

void RunConfig::validate() {
  model.morph.dim = model.points.dim = model.denoiser.dim;
  if (diffusion.timesteps < 1) throw ValidationError("config: diffusion.timesteps must be positive");
  model.denoiser.timesteps = diffusion.timesteps;
  if (model.cloud_points < model.points.groups) throw ValidationError("config: cloud_points must be >= points.groups");
  if (train.batch_size < 1 || train.steps < 0 || train.lr <= 0) throw ValidationError("config: bad training settings");
  if (sample.n < 1 || sample.steps < 0) throw ValidationError("config: bad sampling settings");
  for (double s : model.morph.column_scale)
    if (!(s > 0)) throw ValidationError("config: morph column_scale entries must be positive");
  physics.validate();
}

std::uint64_t RunConfig::model_hash() const {
  const json j = to_json();
  json key;
  key["model"] = j["model"];
  key["timesteps"] = j["diffusion"]["timesteps"];
  key["canonicalize"] = j["diffusion"]["canonicalize"];
  return fnv1a(key.dump());
}

RunConfig load_config(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw IoError("cannot open config '" + path.string() + "'");
  std::stringstream ss;
  ss << in.rdbuf();
  json j;
  try {
    j = json::parse(ss.str());
  } catch (const json::parse_error& e) {
    throw ParseError(std::string("config: ") + e.what(), 0);
  }
  RunConfig c = RunConfig::from_json(j);
  // Relative paths in a config file resolve against the file's directory.
  const auto base = path.parent_path();
  for (std::string* p : {&c.train.dataset, &c.toy.urdf, &c.toy.mapping}) {
    if (!p->empty() && std::filesystem::path(*p).is_relative()) *p = (base / *p).lexically_normal().string();
  }
  return c;
}

}  // namespace morphgrasp
