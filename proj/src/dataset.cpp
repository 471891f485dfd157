#include "morphgrasp/dataset.hpp"

#include "morphgrasp/binary_io.hpp"
#include "morphgrasp/errors.hpp"

#include <json.hpp>

#include <cmath>
#include <cstring>
#include <fstream>
#include <numbers>
#include <random>
#include <set>
#include <sstream>

namespace morphgrasp {

using json = nlohmann::ordered_json;
namespace fs = std::filesystem;

namespace {

constexpr char kRecordMagic[8] = {'M', 'G', 'R', 'E', 'C', 'O', 'R', 'D'};

json records_schema() {
  return {{"format", "morphgrasp-records"},
          {"version", 1},
          {"row", json::array({{{"name", "pose"}, {"type", "f64"}, {"count", kPoseChannels}},
                               {{"name", "mask"}, {"type", "u32"}, {"count", 1}},
                               {{"name", "embodiment"}, {"type", "u32"}, {"count", 1}},
                               {{"name", "object"}, {"type", "u32"}, {"count", 1}}})}};
}

std::string read_text(const fs::path& path, const std::string& what) {
  std::ifstream in(path);
  if (!in) throw IoError("cannot open " + what + " '" + path.string() + "'");
  std::stringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

void write_text(const fs::path& path, const std::string& text) {
  std::ofstream out(path);
  if (!out) throw IoError("cannot write '" + path.string() + "'");
  out << text;
}

fs::path resolve(const fs::path& base, const std::string& p) {
  const fs::path path(p);
  return path.is_absolute() ? path : base / path;
}

Mat3 random_rotation(std::mt19937_64& rng) {
  std::normal_distribution<double> normal(0.0, 1.0);
  Eigen::Quaterniond q(normal(rng), normal(rng), normal(rng), normal(rng));
  q.normalize();
  return q.toRotationMatrix();
}

// The 24 proper rotations mapping coordinate axes onto coordinate axes.
std::vector<Mat3> axis_rotations() {
  std::vector<Mat3> out;
  const int perms[6][3] = {{0, 1, 2}, {0, 2, 1}, {1, 0, 2}, {1, 2, 0}, {2, 0, 1}, {2, 1, 0}};
  for (const auto& p : perms) {
    for (int signs = 0; signs < 8; ++signs) {
      Mat3 r = Mat3::Zero();
      for (int c = 0; c < 3; ++c) r(p[c], c) = (signs >> c) & 1 ? -1.0 : 1.0;
      if (r.determinant() > 0) out.push_back(r);
    }
  }
  return out;
}

const JointSpec& require_joint(const KinematicTree& tree, const char* name) {
  const int j = tree.joint_index(name);
  if (j < 0) throw GenerationError(std::string("toy gripper: missing joint '") + name + "'");
  return tree.joints()[static_cast<std::size_t>(j)];
}

}  // namespace

void save_records(const fs::path& path, const std::vector<GraspRecord>& records) {
  std::vector<unsigned char> out(kRecordMagic, kRecordMagic + 8);
  json header = records_schema();
  header["count"] = records.size();
  const std::string h = header.dump();
  binary::put_u32(out, static_cast<std::uint32_t>(h.size()));
  out.insert(out.end(), h.begin(), h.end());
  for (const auto& r : records) {
    encode_pose(r.pose, out);
    binary::put_u32(out, static_cast<std::uint32_t>(r.embodiment));
    binary::put_u32(out, static_cast<std::uint32_t>(r.object));
  }
  std::ofstream f(path, std::ios::binary);
  if (!f) throw IoError("cannot write records '" + path.string() + "'");
  f.write(reinterpret_cast<const char*>(out.data()), static_cast<std::streamsize>(out.size()));
}

std::vector<GraspRecord> load_records(const fs::path& path) {
  std::ifstream f(path, std::ios::binary);
  if (!f) throw IoError("cannot open records '" + path.string() + "'");
  const std::vector<unsigned char> bytes(std::istreambuf_iterator<char>(f), {});
  const std::string what = "records '" + path.string() + "'";
  if (bytes.size() < 12 || std::memcmp(bytes.data(), kRecordMagic, 8) != 0) throw ValidationError(what + ": bad magic");
  const std::size_t len = binary::get_u32(bytes.data() + 8);
  if (bytes.size() < 12 + len) throw ValidationError(what + ": truncated header");
  json header;
  try {
    header = json::parse(bytes.begin() + 12, bytes.begin() + 12 + static_cast<std::ptrdiff_t>(len));
  } catch (const json::parse_error& e) {
    throw ValidationError(what + ": corrupt header: " + e.what());
  }
  const json expected = records_schema();
  for (const auto& key : {"format", "version", "row"}) {
    if (!header.contains(key) || header[key] != expected[key]) throw ValidationError(what + ": unsupported schema");
  }
  const std::size_t count = header.value("count", std::size_t{0});
  const std::size_t offset = 12 + len;
  if (bytes.size() != offset + count * kRecordRowBytes) throw ValidationError(what + ": size does not match row count");
  std::vector<GraspRecord> out(count);
  for (std::size_t i = 0; i < count; ++i) {
    const unsigned char* row = bytes.data() + offset + i * kRecordRowBytes;
    out[i].pose = decode_pose(row);
    out[i].embodiment = static_cast<int>(binary::get_u32(row + kPoseRecordBytes));
    out[i].object = static_cast<int>(binary::get_u32(row + kPoseRecordBytes + 4));
  }
  return out;
}

void validate_dataset(const GraspDataset& dataset) {
  std::vector<ActiveMask> masks;
  for (const auto& e : dataset.embodiments) masks.push_back(active_mask(e.mapping));
  for (std::size_t i = 0; i < dataset.records.size(); ++i) {
    const auto& r = dataset.records[i];
    const std::string where = "record " + std::to_string(i);
    if (r.embodiment < 0 || r.embodiment >= static_cast<int>(masks.size())) {
      throw ValidationError(where + ": embodiment index " + std::to_string(r.embodiment) + " out of range");
    }
    if (r.object < 0 || r.object >= static_cast<int>(dataset.objects.size())) {
      throw ValidationError(where + ": object index " + std::to_string(r.object) + " does not resolve");
    }
    if (r.pose.delta != masks[static_cast<std::size_t>(r.embodiment)]) {
      throw ValidationError(where + ": mask " + r.pose.delta.to_string() + " does not match embodiment '" +
                            dataset.embodiments[static_cast<std::size_t>(r.embodiment)].name + "'");
    }
  }
}

GraspDataset load_dataset(const fs::path& manifest_path) {
  const std::string text = read_text(manifest_path, "manifest");
  json manifest;
  try {
    manifest = json::parse(text);
  } catch (const json::parse_error& e) {
    throw ValidationError("manifest '" + manifest_path.string() + "': " + e.what());
  }
  const fs::path base = manifest_path.parent_path();
  GraspDataset data;
  try {
    std::set<std::string> names;
    for (const auto& e : manifest.value("embodiments", json::array())) {
      const std::string name = e.at("name").get<std::string>();
      if (!names.insert(name).second) throw ValidationError("manifest: duplicate embodiment '" + name + "'");
      KinematicTree tree = load_urdf(resolve(base, e.at("urdf").get<std::string>()));
      CanonicalMapping mapping = load_mapping(resolve(base, e.at("mapping").get<std::string>()), tree);
      data.embodiments.push_back({name, std::move(tree), std::move(mapping)});
    }
    std::set<std::string> ids;
    for (const auto& o : manifest.value("objects", json::array())) {
      const std::string id = o.at("id").get<std::string>();
      if (!ids.insert(id).second) throw ValidationError("manifest: duplicate object '" + id + "'");
      const fs::path file = resolve(base, o.at("file").get<std::string>());
      if (!fs::exists(file)) throw IoError("object '" + id + "': missing file '" + file.string() + "'");
      data.objects.push_back({id, o.value("split", std::string("train")), load_object(file)});
    }
    if (manifest.contains("records_path")) {
      data.records = load_records(resolve(base, manifest.at("records_path").get<std::string>()));
    }
  } catch (const json::exception& e) {
    throw ValidationError("manifest '" + manifest_path.string() + "': " + e.what());
  }
  validate_dataset(data);
  return data;
}

void save_dataset(const fs::path& dir, const GraspDataset& dataset) {
  validate_dataset(dataset);
  fs::create_directories(dir / "objects");
  json manifest;
  manifest["embodiments"] = json::array();
  for (const auto& e : dataset.embodiments) {
    const std::string urdf = e.name + ".urdf";
    const std::string mapping = e.name + ".mapping.json";
    write_text(dir / urdf, to_urdf(e.tree));
    write_text(dir / mapping, mapping_to_json(e.mapping).dump(2) + "\n");
    manifest["embodiments"].push_back({{"name", e.name}, {"urdf", urdf}, {"mapping", mapping}});
  }
  manifest["objects"] = json::array();
  for (const auto& o : dataset.objects) {
    const std::string file = "objects/" + o.id + ".ply";
    const TriangleMesh* mesh = o.model.sdf() ? &o.model.sdf()->mesh() : nullptr;
    const PointMatrix* normals = o.model.normals() ? &*o.model.normals() : nullptr;
    save_ply(dir / file, o.model.points(), normals, mesh);
    manifest["objects"].push_back({{"id", o.id}, {"file", file}, {"split", o.split}});
  }
  manifest["records_path"] = "records.bin";
  save_records(dir / "records.bin", dataset.records);
  write_text(dir / "manifest.json", manifest.dump(2) + "\n");
}

GripperGeometry gripper_geometry(const KinematicTree& tree) {
  const JointSpec& a1 = require_joint(tree, "finger_a_1");
  const JointSpec& a2 = require_joint(tree, "finger_a_2");
  require_joint(tree, "finger_b_1");
  require_joint(tree, "finger_b_2");
  if (tree.dof_count() != 4) throw GenerationError("toy gripper: expected 4 degrees of freedom");
  const LinkSpec& distal = tree.links()[static_cast<std::size_t>(tree.link_index(a2.child_link))];
  if (!distal.has_bounds) throw GenerationError("toy gripper: distal link has no collision box");
  GripperGeometry g;
  g.half_span = std::abs(a1.origin.xyz.y());
  g.l1 = a2.origin.xyz.z();
  g.l2 = distal.bbox_extents.z();
  g.thickness = distal.bbox_extents.x();
  return g;
}

ToyGrasp solve_toy_grasp(const KinematicTree& tree, const GripperGeometry& g, double half_width) {
  const double s = (g.half_span - half_width - g.l2) / g.l1;
  if (!(std::abs(s) <= 1.0)) {
    throw GenerationError("toy gripper cannot reach half width " + std::to_string(half_width));
  }
  ToyGrasp out;
  out.q1 = std::asin(s);
  out.q2 = std::numbers::pi / 2 - out.q1;
  out.contact_height = g.l1 * std::cos(out.q1);
  for (const char* finger : {"a", "b"}) {
    const auto& j1 = require_joint(tree, (std::string("finger_") + finger + "_1").c_str());
    const auto& j2 = require_joint(tree, (std::string("finger_") + finger + "_2").c_str());
    if (out.q1 < j1.limit_lower || out.q1 > j1.limit_upper || out.q2 < j2.limit_lower || out.q2 > j2.limit_upper) {
      throw GenerationError("toy grasp for half width " + std::to_string(half_width) + " violates joint limits");
    }
  }
  return out;
}

GraspDataset generate_toy_dataset(const ToyConfig& config, const KinematicTree& tree, const CanonicalMapping& mapping,
                                  std::uint64_t seed) {
  if (config.spheres < 0 || config.boxes < 0 || config.spheres + config.boxes < 1) {
    throw GenerationError("toy dataset: need at least one object");
  }
  if (config.grasps < 1) throw GenerationError("toy dataset: need at least one grasp");
  if (!(config.sphere_radius_min > 0 && config.sphere_radius_min <= config.sphere_radius_max)) {
    throw GenerationError("toy dataset: invalid sphere radius range");
  }
  const GripperGeometry g = gripper_geometry(tree);
  std::mt19937_64 rng(seed);
  std::uniform_real_distribution<double> unit(0.0, 1.0);
  constexpr int kCloudPoints = 1024;

  GraspDataset data;
  data.embodiments.push_back({tree.name(), tree, mapping});
  std::vector<double> sphere_radius;
  std::vector<Vec3> box_extents;
  for (int i = 0; i < config.spheres; ++i) {
    const double r =
        config.sphere_radius_min + (config.sphere_radius_max - config.sphere_radius_min) * unit(rng);
    TriangleMesh mesh = make_icosphere(r, 3);
    PointMatrix normals;
    PointMatrix pts = sample_mesh_surface(mesh, kCloudPoints, rng(), &normals);
    data.objects.push_back({"sphere_" + std::to_string(i), "train", ObjectModel::create(pts, normals, mesh)});
    sphere_radius.push_back(r);
    box_extents.emplace_back(0, 0, 0);
  }
  for (int i = 0; i < config.boxes; ++i) {
    const Vec3 e(0.04 + 0.02 * unit(rng), 0.04 + 0.02 * unit(rng), 0.04 + 0.02 * unit(rng));
    TriangleMesh mesh = make_box_mesh(e);
    PointMatrix normals;
    PointMatrix pts = sample_mesh_surface(mesh, kCloudPoints, rng(), &normals);
    data.objects.push_back({"box_" + std::to_string(i), "train", ObjectModel::create(pts, normals, mesh)});
    sphere_radius.push_back(0.0);
    box_extents.push_back(e);
  }

  const auto box_rotations = axis_rotations();
  const auto dof_names = tree.dof_names();
  for (int k = 0; k < config.grasps; ++k) {
    const int obj = k % static_cast<int>(data.objects.size());
    const auto o = static_cast<std::size_t>(obj);
    Mat3 rot;
    double half_width;
    if (sphere_radius[o] > 0) {
      rot = random_rotation(rng);
      half_width = sphere_radius[o];
    } else {
      rot = box_rotations[static_cast<std::size_t>(rng() % box_rotations.size())];
      half_width = 0.5 * std::abs(rot.col(1).dot(box_extents[o]));
    }
    const ToyGrasp sol = solve_toy_grasp(tree, g, half_width);
    HandPose pose;
    pose.t = -rot * Vec3(0, 0, sol.contact_height);
    pose.r6 = matrix_to_rot6(rot);
    pose.theta.resize(static_cast<Eigen::Index>(dof_names.size()));
    for (std::size_t d = 0; d < dof_names.size(); ++d) {
      pose.theta(static_cast<Eigen::Index>(d)) = dof_names[d].back() == '1' ? sol.q1 : sol.q2;
    }
    data.records.push_back({0, obj, to_canonical(pose, mapping)});
  }
  validate_dataset(data);
  return data;
}

GraspDataset generate_toy_dataset(const ToyConfig& config, std::uint64_t seed) {
  if (config.urdf.empty() || config.mapping.empty()) throw GenerationError("toy dataset: urdf and mapping required");
  KinematicTree tree = load_urdf(config.urdf);
  CanonicalMapping mapping = load_mapping(config.mapping, tree);
  return generate_toy_dataset(config, tree, mapping, seed);
}

double diversity(const std::vector<CanonicalPose>& poses, const ActiveMask& delta) {
  if (poses.size() < 2) throw DomainError("diversity: need at least two poses");
  std::vector<Eigen::VectorXd> rows;
  for (const auto& p : poses) {
    if (p.delta != delta) throw EmbodimentError("diversity: pose mask differs from the given mask");
    Eigen::VectorXd row(6 + static_cast<Eigen::Index>(delta.count()));
    const Eigen::AngleAxisd aa(rot6_to_matrix(p.r6));
    row.head<3>() = p.t;
    row.segment<3>(3) = aa.angle() * aa.axis();
    Eigen::Index c = 6;
    for (int s = 0; s < kCanonicalSlots; ++s)
      if (delta[static_cast<std::size_t>(s)]) row(c++) = p.theta_c[static_cast<std::size_t>(s)];
    rows.push_back(std::move(row));
  }
  const auto n = static_cast<double>(rows.size());
  Eigen::VectorXd mean = Eigen::VectorXd::Zero(rows[0].size());
  for (const auto& r : rows) mean += r;
  mean /= n;
  Eigen::VectorXd var = Eigen::VectorXd::Zero(rows[0].size());
  for (const auto& r : rows) var += (r - mean).array().square().matrix();
  return (var / n).array().sqrt().mean();
}

GraspQuality grasp_quality(const CanonicalPose& pose, const Embodiment& hand, const ObjectModel& object,
                           const PhysicsLossConfig& physics, const QualityConfig& quality) {
  const LabeledPoints pts = hand_surface(pose, hand);
  const Eigen::VectorXd sdf = signed_distance(object, pts.points);
  GraspQuality q;
  const double min_sdf = sdf.minCoeff();
  q.max_penetration = std::max(0.0, -min_sdf);
  q.min_clearance = std::max(0.0, min_sdf);
  q.contact_count = static_cast<int>((sdf.array().abs() < quality.contact_tolerance).count());
  q.spf = spf_loss(pts.points, object, physics);
  q.erf = erf_loss(pts.points, object);
  q.srf = srf_loss(pts.points, pts.link, &hand.tree, physics);
  return q;
}

}  // namespace morphgrasp
