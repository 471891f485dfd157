#include "morphgrasp/canonical.hpp"
#include "morphgrasp/checkpoint.hpp"
#include "morphgrasp/config.hpp"
#include "morphgrasp/dataset.hpp"
#include "morphgrasp/errors.hpp"
#include "morphgrasp/hand_model.hpp"
#include "morphgrasp/losses.hpp"
#include "morphgrasp/model.hpp"
#include "morphgrasp/morph_encoder.hpp"
#include "morphgrasp/mutate.hpp"
#include "morphgrasp/trainer.hpp"
#include "morphgrasp/urdf.hpp"

#include <CLI11.hpp>
#include <json.hpp>

#include <cstdio>
#include <filesystem>
#include <fstream>
#include <iomanip>
#include <iostream>
#include <sstream>

namespace fs = std::filesystem;
using json = nlohmann::ordered_json;
using namespace morphgrasp;

namespace {

constexpr int kExitError = 1;
constexpr int kExitUsage = 2;

struct Common {
  std::string config;
  std::optional<std::uint64_t> seed;
  std::string out;
};

RunConfig resolve_config(const Common& c) {
  RunConfig cfg;
  if (!c.config.empty()) {
    cfg = load_config(c.config);
  } else {
    const fs::path fallback = fs::path(MORPHGRASP_DATA_DIR) / "configs" / "default.json";
    if (fs::exists(fallback)) cfg = load_config(fallback);
  }
  if (c.seed) cfg.seed = *c.seed;
  cfg.validate();
  return cfg;
}

void require_file(const std::string& path, const std::string& what) {
  if (path.empty()) throw IoError(what + " path is required");
  if (!fs::exists(path)) throw IoError(what + " '" + path + "' does not exist");
}

void write_json(const fs::path& path, const json& j) {
  if (path.has_parent_path()) fs::create_directories(path.parent_path());
  std::ofstream out(path);
  if (!out) throw IoError("cannot write '" + path.string() + "'");
  out << j.dump(2) << "\n";
}

std::string fixed(double v, int digits = 4) {
  std::ostringstream ss;
  ss << std::fixed << std::setprecision(digits) << v;
  return ss.str();
}

std::string mask_string(const ActiveMask& m) {
  std::string s;
  for (int i = 0; i < kCanonicalSlots; ++i) s += m[static_cast<std::size_t>(i)] ? '1' : '0';
  return s;
}

HandDescription load_hand(const std::string& urdf, const std::string& mapping) {
  require_file(urdf, "URDF");
  require_file(mapping, "mapping");
  KinematicTree tree = load_urdf(urdf);
  CanonicalMapping m = load_mapping(mapping, tree);
  return {std::move(tree), std::move(m)};
}

json quality_json(const GraspQuality& q) {
  return {{"max_penetration", q.max_penetration}, {"contact_count", q.contact_count},
          {"min_clearance", q.min_clearance},     {"spf", q.spf},
          {"erf", q.erf},                         {"srf", q.srf}};
}

json native_json(const CanonicalPose& pose, const CanonicalMapping& mapping) {
  const HandPose h = from_canonical(pose, mapping);
  json theta;
  for (std::size_t d = 0; d < mapping.joint_names.size(); ++d) {
    theta[mapping.joint_names[d]] = h.theta(static_cast<Eigen::Index>(d));
  }
  return {{"t", {h.t.x(), h.t.y(), h.t.z()}},
          {"r6", {h.r6[0], h.r6[1], h.r6[2], h.r6[3], h.r6[4], h.r6[5]}},
          {"theta", theta}};
}

std::vector<CanonicalPose> read_poses(const std::string& path) {
  require_file(path, "pose file");
  std::ifstream in(path);
  json j;
  try {
    j = json::parse(in);
  } catch (const json::parse_error& e) {
    throw ValidationError("pose file: " + std::string(e.what()));
  }
  std::vector<CanonicalPose> out;
  const json& list = j.is_object() && j.contains("poses") ? j.at("poses") : j;
  if (list.is_array()) {
    for (const auto& p : list) out.push_back(pose_from_json(p.contains("canonical") ? p.at("canonical") : p));
  } else {
    out.push_back(pose_from_json(list));
  }
  return out;
}

// ---- inspect ----------------------------------------------------------------

int cmd_inspect(const std::string& urdf, const std::string& mapping_path) {
  require_file(urdf, "URDF");
  const KinematicTree tree = load_urdf(urdf);
  std::cout << "robot " << tree.name() << ": " << tree.links().size() << " links, " << tree.joints().size()
            << " joints, " << tree.dof_count() << " DoF\n";
  const auto counts = descendant_counts(tree);
  std::cout << std::left << std::setw(22) << "joint" << std::setw(10) << "type" << std::setw(18) << "parent"
            << std::setw(18) << "child" << std::setw(20) << "limits" << "descendants\n";
  for (std::size_t j = 0; j < tree.joints().size(); ++j) {
    const auto& js = tree.joints()[j];
    const int d = tree.dof_index(static_cast<int>(j));
    std::cout << std::setw(22) << js.name << std::setw(10) << to_string(js.kind) << std::setw(18) << js.parent_link
              << std::setw(18) << js.child_link << std::setw(20)
              << (js.moves() ? "[" + fixed(js.limit_lower, 3) + ", " + fixed(js.limit_upper, 3) + "]" : "-")
              << (d >= 0 ? std::to_string(counts[static_cast<std::size_t>(d)]) : "-") << "\n";
  }
  if (mapping_path.empty()) return 0;
  require_file(mapping_path, "mapping");
  const CanonicalMapping mapping = load_mapping(mapping_path, tree);
  const ActiveMask mask = active_mask(mapping);
  std::cout << "canonical mask " << mask_string(mask) << "\n";
  std::cout << mask.count() << " active slots\n";
  const JointMorphologyMatrix J = extract_joint_morphology(tree, mapping);
  const auto& layout = CanonicalLayout::standard();
  std::cout << "joint morphology matrix (" << J.values.rows() << " x " << J.values.cols() << "), active rows:\n";
  for (int s = 0; s < kCanonicalSlots; ++s) {
    if (!mask[static_cast<std::size_t>(s)]) continue;
    std::cout << "  " << std::setw(10) << layout.slot_name(s);
    for (Eigen::Index c = 0; c < J.values.cols(); ++c) std::cout << " " << std::setw(8) << fixed(J.values(s, c), 4);
    std::cout << "\n";
  }
  return 0;
}

// ---- encode -----------------------------------------------------------------

int cmd_encode(const Common& common, const std::string& urdf, const std::string& mapping_path,
               const std::string& checkpoint) {
  const RunConfig cfg = resolve_config(common);
  const HandDescription hand = load_hand(urdf, mapping_path);
  GraspModel model(cfg.model, cfg.seed);
  if (!checkpoint.empty()) {
    require_file(checkpoint, "checkpoint");
    load_checkpoint(checkpoint, model, cfg);
  }
  const ActiveMask mask = active_mask(hand.mapping);
  const JointMorphologyMatrix J = extract_joint_morphology(hand.tree, hand.mapping);
  ad::NoGradGuard no_grad;
  const Eigen::MatrixXd M = model.morph().encode(J, model.structure(), mask).value();
  json out;
  out["embodiment"] = hand.tree.name();
  out["mask"] = mask_string(mask);
  out["active_slots"] = mask.count();
  out["J"] = json::array();
  for (Eigen::Index r = 0; r < J.values.rows(); ++r) {
    json row = json::array();
    for (Eigen::Index c = 0; c < J.values.cols(); ++c) row.push_back(J.values(r, c));
    out["J"].push_back(row);
  }
  out["M_shape"] = {M.rows(), M.cols()};
  out["M"] = json::array();
  for (Eigen::Index r = 0; r < M.rows(); ++r) {
    json row = json::array();
    for (Eigen::Index c = 0; c < M.cols(); ++c) row.push_back(M(r, c));
    out["M"].push_back(row);
  }
  if (common.out.empty()) {
    std::cout << out.dump() << "\n";
  } else {
    write_json(common.out, out);
    std::cout << "wrote " << common.out << "\n";
  }
  return 0;
}

// ---- toydata ----------------------------------------------------------------

int cmd_toydata(const Common& common) {
  const RunConfig cfg = resolve_config(common);
  if (common.out.empty()) throw IoError("--out directory is required");
  const GraspDataset data = generate_toy_dataset(cfg.toy, cfg.seed);
  save_dataset(common.out, data);
  std::cout << "wrote " << data.records.size() << " grasps over " << data.objects.size() << " objects to "
            << common.out << "\n";
  return 0;
}

// ---- train ------------------------------------------------------------------

GraspDataset dataset_for(const RunConfig& cfg, const std::string& override_path) {
  const std::string path = override_path.empty() ? cfg.train.dataset : override_path;
  if (!path.empty()) {
    require_file(path, "dataset manifest");
    return load_dataset(path);
  }
  return generate_toy_dataset(cfg.toy, cfg.seed);
}

int cmd_train(const Common& common, const std::string& dataset, std::optional<int> steps, bool resume) {
  RunConfig cfg = resolve_config(common);
  if (steps) cfg.train.steps = *steps;
  cfg.validate();
  if (common.out.empty()) throw IoError("--out directory is required");
  const GraspDataset data = dataset_for(cfg, dataset);
  TrainRunOptions options;
  options.out_dir = common.out;
  options.resume = resume;
  options.log = &std::cout;
  const LossReport last = run_training(cfg, data, options);
  std::cout << "final total " << last.total << " (recon " << last.recon << ", morph " << last.morph << ", spf "
            << last.spf << ", erf " << last.erf << ", srf " << last.srf << ")\n";
  return 0;
}

// ---- sample -----------------------------------------------------------------

int cmd_sample(const Common& common, const std::string& checkpoint, const std::string& object_path,
               const std::string& urdf, const std::string& mapping_path, std::optional<int> n) {
  const RunConfig cfg = resolve_config(common);
  require_file(checkpoint, "checkpoint");
  require_file(object_path, "object");
  const HandDescription hd = load_hand(urdf, mapping_path);
  GraspModel model(cfg.model, cfg.seed);
  load_checkpoint(checkpoint, model, cfg);
  const Embodiment hand = make_embodiment(hd.tree, hd.mapping, cfg.physics.hand_points, cfg.seed);
  const ObjectModel object = load_object(object_path);
  const int count = n.value_or(cfg.sample.n);
  const auto poses = sample_grasps(model, cfg, hand, object, count, cfg.seed);

  json out;
  out["embodiment"] = hd.tree.name();
  out["mask"] = mask_string(hand.mask);
  out["seed"] = cfg.seed;
  out["frame"] = cfg.diffusion.canonicalize ? "object (hand rotation fixed at identity)" : "object";
  out["poses"] = json::array();
  const bool sdf = object.sdf() != nullptr;
  for (const auto& p : poses) {
    json entry{{"canonical", pose_to_json(p)}, {"native", native_json(p, hd.mapping)}};
    if (sdf) entry["quality"] = quality_json(grasp_quality(p, hand, object, cfg.physics, cfg.quality));
    out["poses"].push_back(entry);
  }
  out["diversity"] = poses.size() >= 2 ? json(diversity(poses, hand.mask)) : json(nullptr);
  const fs::path dir = common.out.empty() ? fs::path(".") : fs::path(common.out);
  write_json(dir / "samples.json", out);
  std::cout << "sampled " << poses.size() << " grasps, diversity "
            << (poses.size() >= 2 ? fixed(diversity(poses, hand.mask)) : std::string("n/a")) << ", wrote "
            << (dir / "samples.json").string() << "\n";
  return 0;
}

// ---- eval -------------------------------------------------------------------

int cmd_eval(const Common& common, const std::string& checkpoint, const std::string& dataset,
             std::optional<int> n) {
  const RunConfig cfg = resolve_config(common);
  require_file(checkpoint, "checkpoint");
  const GraspDataset data = dataset_for(cfg, dataset);
  GraspModel model(cfg.model, cfg.seed);
  load_checkpoint(checkpoint, model, cfg);
  const TrainingSet set = build_training_set(data, cfg);
  const int count = n.value_or(cfg.sample.n);

  json report;
  report["entries"] = json::array();
  double erf_sum = 0.0, nn_sum = 0.0;
  int groups = 0;
  for (std::size_t e = 0; e < set.embodiments.size(); ++e) {
    std::vector<CanonicalPose> train_poses;
    for (const auto& s : set.scenes)
      if (s.embodiment == static_cast<int>(e)) train_poses.push_back(s.pose);
    if (train_poses.empty()) continue;
    for (std::size_t o = 0; o < data.objects.size(); ++o) {
      // Evaluate in the frame of the first record of this object, matching training.
      int scene_index = -1;
      for (std::size_t r = 0; r < data.records.size(); ++r) {
        if (data.records[r].object == static_cast<int>(o) && data.records[r].embodiment == static_cast<int>(e)) {
          scene_index = static_cast<int>(r);
          break;
        }
      }
      const ObjectModel& object =
          scene_index >= 0 ? set.scenes[static_cast<std::size_t>(scene_index)].object : data.objects[o].model;
      const auto poses = sample_grasps(model, cfg, set.embodiments[e], object, count, cfg.seed + o);
      double erf = 0.0, pen = 0.0;
      int contacts = 0;
      for (const auto& p : poses) {
        const GraspQuality q = grasp_quality(p, set.embodiments[e], object, cfg.physics, cfg.quality);
        erf += q.erf;
        pen += q.max_penetration;
        contacts += q.contact_count;
      }
      const double k = static_cast<double>(poses.size());
      const double nn = mean_nearest_distance(poses, train_poses);
      report["entries"].push_back({{"embodiment", data.embodiments[e].name},
                                   {"object", data.objects[o].id},
                                   {"split", data.objects[o].split},
                                   {"samples", poses.size()},
                                   {"mean_erf", erf / k},
                                   {"mean_max_penetration", pen / k},
                                   {"mean_contacts", contacts / k},
                                   {"mean_nearest_train_distance", nn},
                                   {"diversity", poses.size() >= 2 ? json(diversity(poses, set.embodiments[e].mask))
                                                                   : json(nullptr)}});
      erf_sum += erf / k;
      nn_sum += nn;
      ++groups;
      std::cout << data.embodiments[e].name << " / " << data.objects[o].id << ": erf " << fixed(erf / k, 6)
                << " m, nearest-train " << fixed(nn) << "\n";
    }
  }
  if (groups > 0) {
    report["mean_erf"] = erf_sum / groups;
    report["mean_nearest_train_distance"] = nn_sum / groups;
  }
  if (!common.out.empty()) write_json(fs::path(common.out) / "eval.json", report);
  return 0;
}

// ---- mutate -----------------------------------------------------------------

int cmd_mutate(const std::string& urdf, const std::string& mapping_path, const std::string& spec,
               std::string donor_urdf, std::string donor_mapping, const std::string& out_urdf,
               const std::string& out_mapping, bool force, bool grid, const std::string& out_dir) {
  const HandDescription hand = load_hand(urdf, mapping_path);
  if (donor_urdf.empty()) donor_urdf = (fs::path(MORPHGRASP_DATA_DIR) / "hands" / "allegro.urdf").string();
  if (donor_mapping.empty()) {
    donor_mapping = (fs::path(MORPHGRASP_DATA_DIR) / "hands" / "allegro.mapping.json").string();
  }
  std::optional<HandDescription> donor;
  auto get_donor = [&]() -> const HandDescription* {
    if (!donor) donor = load_hand(donor_urdf, donor_mapping);
    return &*donor;
  };
  const auto before = active_mask(hand.mapping).count();
  auto emit = [&](const MutationResult& r, const fs::path& u, const fs::path& m) {
    if (u.has_parent_path()) fs::create_directories(u.parent_path());
    std::ofstream(u) << to_urdf(r.hand.tree);
    write_json(m, mapping_to_json(r.hand.mapping));
  };

  if (grid) {
    if (out_dir.empty()) throw IoError("--out directory is required with --grid");
    int row = 0;
    for (const auto& g : variation_grid()) {
      const auto variations = parse_variation_spec(g.spec);
      const bool swaps = std::any_of(variations.begin(), variations.end(),
                                     [](const auto& v) { return v.kind == VariationKind::Swap; });
      const MutationResult r = apply_variations(hand, variations, swaps ? get_donor() : nullptr);
      const auto after = active_mask(r.hand.mapping).count();
      const std::string stem = "row" + std::to_string(++row);
      emit(r, fs::path(out_dir) / (stem + ".urdf"), fs::path(out_dir) / (stem + ".mapping.json"));
      std::cout << stem << " " << g.group << " " << g.spec << ": " << after << " active slots (expected "
                << g.expected_active << ")" << (static_cast<int>(after) == g.expected_active ? "" : " MISMATCH")
                << "\n";
    }
    return 0;
  }

  auto variations = parse_variation_spec(spec);
  if (force)
    for (auto& v : variations) v.allow_thumb_removal = true;
  const bool swaps =
      std::any_of(variations.begin(), variations.end(), [](const auto& v) { return v.kind == VariationKind::Swap; });
  const MutationResult r = apply_variations(hand, variations, swaps ? get_donor() : nullptr);
  for (const auto& note : r.notes) std::cout << "note: " << note << "\n";
  const auto after = active_mask(r.hand.mapping).count();
  if (out_urdf.empty() || out_mapping.empty()) throw IoError("--out-urdf and --out-mapping are required");
  emit(r, out_urdf, out_mapping);
  std::cout << "active slots " << before << " -> " << after << " (delta " << static_cast<long>(after) -
                                                                                 static_cast<long>(before)
            << ")\n";
  return 0;
}

// ---- loss-audit -------------------------------------------------------------

int cmd_loss_audit(const Common& common, const std::string& poses_path, const std::string& object_path,
                   const std::string& urdf, const std::string& mapping_path) {
  const RunConfig cfg = resolve_config(common);
  const HandDescription hd = load_hand(urdf, mapping_path);
  require_file(object_path, "object");
  const ObjectModel object = load_object(object_path);
  const Embodiment hand = make_embodiment(hd.tree, hd.mapping, cfg.physics.hand_points, cfg.seed);
  const auto poses = read_poses(poses_path);
  const bool sdf = object.sdf() != nullptr;
  for (std::size_t i = 0; i < poses.size(); ++i) {
    if (poses[i].delta != hand.mask) throw EmbodimentError("pose " + std::to_string(i) + ": mask differs from hand");
    const LabeledPoints pts = hand_surface(poses[i], hand);
    int members = 0;
    const double spf = spf_loss(pts.points, object, cfg.physics, nullptr, &members);
    const double srf = srf_loss(pts.points, pts.link, &hand.tree, cfg.physics);
    std::cout << "pose " << i << ": spf " << spf << " |S| " << members << ", erf ";
    if (sdf) {
      std::cout << erf_loss(pts.points, object);
    } else {
      std::cout << "n/a (no watertight mesh)";
    }
    std::cout << ", srf " << srf << "\n";
  }
  return 0;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Cross-embodiment grasp diffusion toolkit"};
  app.require_subcommand(1);
  app.set_version_flag("--version", std::string(MORPHGRASP_VERSION));

  Common common;
  auto add_common = [&](CLI::App* sub, bool with_out) {
    sub->add_option("--config", common.config, "Run configuration JSON");
    sub->add_option("--seed", common.seed, "Override the configured seed");
    if (with_out) sub->add_option("--out", common.out, "Output path");
  };

  std::string urdf, mapping, checkpoint, object, dataset, spec, donor_urdf, donor_mapping, out_urdf, out_mapping,
      poses;
  std::optional<int> steps, n;
  bool resume = false, force = false, grid = false;

  auto* inspect = app.add_subcommand("inspect", "Print the joint table, mask and morphology features");
  inspect->add_option("urdf,--urdf", urdf, "URDF file")->required();
  inspect->add_option("--mapping", mapping, "Canonical mapping JSON");

  auto* encode = app.add_subcommand("encode", "Compute the morphology representation of a hand");
  add_common(encode, true);
  encode->add_option("--urdf", urdf)->required();
  encode->add_option("--mapping", mapping)->required();
  encode->add_option("--checkpoint", checkpoint);

  auto* toydata = app.add_subcommand("toydata", "Generate the synthetic two-finger grasp dataset");
  add_common(toydata, true);

  auto* train = app.add_subcommand("train", "Train the diffusion model");
  add_common(train, true);
  train->add_option("--dataset", dataset, "Dataset manifest (default: generated toy dataset)");
  train->add_option("--steps", steps, "Override the step budget");
  train->add_flag("--resume", resume, "Continue from train_state.bin in the output directory");

  auto* sample_cmd = app.add_subcommand("sample", "Sample grasps for one hand and object");
  add_common(sample_cmd, true);
  sample_cmd->add_option("--checkpoint", checkpoint)->required();
  sample_cmd->add_option("--object", object)->required();
  sample_cmd->add_option("--urdf", urdf)->required();
  sample_cmd->add_option("--mapping", mapping)->required();
  sample_cmd->add_option("-n,--n", n, "Number of grasps");

  auto* eval = app.add_subcommand("eval", "Sample and score grasps for every dataset object");
  add_common(eval, true);
  eval->add_option("--checkpoint", checkpoint)->required();
  eval->add_option("--dataset", dataset);
  eval->add_option("-n,--n", n);

  auto* mutate = app.add_subcommand("mutate", "Emit a hand with altered fingers");
  mutate->add_option("--urdf", urdf)->required();
  mutate->add_option("--mapping", mapping)->required();
  mutate->add_option("--spec", spec, "e.g. remove:pinky, scale:all:1.5, swap:thumb");
  mutate->add_option("--donor-urdf", donor_urdf);
  mutate->add_option("--donor-mapping", donor_mapping);
  mutate->add_option("--out-urdf", out_urdf);
  mutate->add_option("--out-mapping", out_mapping);
  mutate->add_option("--out", common.out, "Output directory for --grid");
  mutate->add_flag("--allow-thumb-removal", force);
  mutate->add_flag("--grid", grid, "Emit every altered-finger variation row");

  auto* audit = app.add_subcommand("loss-audit", "Print every physics loss term for stored poses");
  add_common(audit, false);
  audit->add_option("--poses", poses)->required();
  audit->add_option("--object", object)->required();
  audit->add_option("--urdf", urdf)->required();
  audit->add_option("--mapping", mapping)->required();

  try {
    app.parse(argc, argv);
  } catch (const CLI::CallForHelp& e) {
    return app.exit(e);
  } catch (const CLI::CallForVersion& e) {
    return app.exit(e);
  } catch (const CLI::ParseError& e) {
    app.exit(e);
    return kExitUsage;
  }

  try {
    if (*inspect) return cmd_inspect(urdf, mapping);
    if (*encode) return cmd_encode(common, urdf, mapping, checkpoint);
    if (*toydata) return cmd_toydata(common);
    if (*train) return cmd_train(common, dataset, steps, resume);
    if (*sample_cmd) return cmd_sample(common, checkpoint, object, urdf, mapping, n);
    if (*eval) return cmd_eval(common, checkpoint, dataset, n);
    if (*mutate) {
      if (!grid && spec.empty()) throw MutationError("--spec or --grid is required");
      return cmd_mutate(urdf, mapping, spec, donor_urdf, donor_mapping, out_urdf, out_mapping, force, grid,
                        common.out);
    }
    if (*audit) return cmd_loss_audit(common, poses, object, urdf, mapping);
  } catch (const IoError& e) {
    std::cerr << "error: " << e.what() << "\n";
    return kExitUsage;
  } catch (const Error& e) {
    std::cerr << "error: " << e.what() << "\n";
    return kExitError;
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << "\n";
    return kExitError;
  }
  return kExitError;
}
