#include "morphgrasp/canonical.hpp"

#include "morphgrasp/binary_io.hpp"
#include "morphgrasp/errors.hpp"

#include <fstream>
#include <set>
#include <sstream>

namespace morphgrasp {

using json = nlohmann::ordered_json;

namespace {
constexpr std::array<const char*, kChainCount> kFingerNames{"thumb", "index", "middle", "ring", "pinky", "wrist"};
constexpr std::array<int, kChainCount> kChainSizes{5, 4, 4, 4, 5, 2};
constexpr double kDegenerate = 1e-8;
}  // namespace

const char* to_string(Finger f) { return kFingerNames[static_cast<std::size_t>(f)]; }

Finger finger_from_string(std::string_view name) {
  for (std::size_t i = 0; i < kFingerNames.size(); ++i)
    if (name == kFingerNames[i]) return static_cast<Finger>(i);
  throw ValidationError("unknown finger '" + std::string(name) + "'");
}

CanonicalLayout::CanonicalLayout() {
  int slot = 0;
  for (int c = 0; c < kChainCount; ++c) {
    start_[static_cast<std::size_t>(c)] = slot;
    size_[static_cast<std::size_t>(c)] = kChainSizes[static_cast<std::size_t>(c)];
    for (int k = 0; k < kChainSizes[static_cast<std::size_t>(c)]; ++k, ++slot) {
      const auto s = static_cast<std::size_t>(slot);
      names_[s] = std::string(kFingerNames[static_cast<std::size_t>(c)]) + "_" + std::to_string(k);
      parent_[s] = k == 0 ? -1 : slot - 1;
      chain_[s] = static_cast<Finger>(c);
      position_[s] = k;
    }
  }
}

const CanonicalLayout& CanonicalLayout::standard() {
  static const CanonicalLayout layout;
  return layout;
}

int CanonicalLayout::slot_index(std::string_view name) const {
  for (int s = 0; s < kCanonicalSlots; ++s)
    if (names_[static_cast<std::size_t>(s)] == name) return s;
  return -1;
}

void CanonicalMapping::validate() const {
  if (joint_names.size() != slot_of.size()) throw MappingError("mapping '" + embodiment + "': name/slot count mismatch");
  const auto& layout = CanonicalLayout::standard();
  std::array<bool, kCanonicalSlots> used{};
  for (std::size_t j = 0; j < slot_of.size(); ++j) {
    const int s = slot_of[j];
    if (s < 0 || s >= kCanonicalSlots) {
      throw MappingError("mapping '" + embodiment + "': joint '" + joint_names[j] + "' has slot out of range");
    }
    if (used[static_cast<std::size_t>(s)]) {
      throw MappingError("mapping '" + embodiment + "': slot '" + layout.slot_name(s) + "' used twice");
    }
    used[static_cast<std::size_t>(s)] = true;
  }
  for (int c = 0; c < kChainCount; ++c) {
    const auto f = static_cast<Finger>(c);
    bool gap = false;
    for (int k = 0; k < layout.chain_size(f); ++k) {
      const bool occupied = used[static_cast<std::size_t>(layout.chain_start(f) + k)];
      if (occupied && gap) {
        throw MappingError("mapping '" + embodiment + "': " + to_string(f) +
                           " chain is not a contiguous proximal prefix");
      }
      gap = gap || !occupied;
    }
  }
}

std::vector<int> CanonicalMapping::chain_sources(Finger f) const {
  const auto& layout = CanonicalLayout::standard();
  std::vector<std::pair<int, int>> found;
  for (std::size_t j = 0; j < slot_of.size(); ++j) {
    if (layout.chain_of(slot_of[j]) == f) found.emplace_back(layout.position_in_chain(slot_of[j]), static_cast<int>(j));
  }
  std::sort(found.begin(), found.end());
  std::vector<int> out;
  for (const auto& [pos, j] : found) out.push_back(j);
  return out;
}

CanonicalMapping resolve_mapping(std::string embodiment,
                                 const std::vector<std::pair<std::string, std::string>>& entries,
                                 const KinematicTree& tree) {
  const auto& layout = CanonicalLayout::standard();
  CanonicalMapping m;
  m.embodiment = std::move(embodiment);
  m.joint_names = tree.dof_names();
  m.slot_of.assign(m.joint_names.size(), -1);
  for (const auto& [joint, slot] : entries) {
    const int ji = tree.joint_index(joint);
    if (ji < 0) throw MappingError("mapping '" + m.embodiment + "': unknown joint '" + joint + "'");
    const int d = tree.dof_index(ji);
    if (d < 0) throw MappingError("mapping '" + m.embodiment + "': joint '" + joint + "' has no independent DoF");
    const int s = layout.slot_index(slot);
    if (s < 0) throw MappingError("mapping '" + m.embodiment + "': unknown slot '" + slot + "'");
    if (m.slot_of[static_cast<std::size_t>(d)] != -1) {
      throw MappingError("mapping '" + m.embodiment + "': joint '" + joint + "' mapped twice");
    }
    m.slot_of[static_cast<std::size_t>(d)] = s;
  }
  for (std::size_t d = 0; d < m.slot_of.size(); ++d) {
    if (m.slot_of[d] == -1) throw MappingError("mapping '" + m.embodiment + "': joint '" + m.joint_names[d] + "' is unmapped");
  }
  m.validate();
  return m;
}

CanonicalMapping parse_mapping(std::string_view json_text, const KinematicTree& tree) {
  json j;
  try {
    j = json::parse(json_text);
  } catch (const json::parse_error& e) {
    throw ParseError(std::string("mapping file: ") + e.what(), 0);
  }
  try {
    std::vector<std::pair<std::string, std::string>> entries;
    for (const auto& e : j.at("entries")) entries.emplace_back(e.at("joint").get<std::string>(), e.at("slot").get<std::string>());
    return resolve_mapping(j.at("embodiment").get<std::string>(), entries, tree);
  } catch (const json::exception& e) {
    throw MappingError(std::string("mapping file: ") + e.what());
  }
}

CanonicalMapping load_mapping(const std::filesystem::path& path, const KinematicTree& tree) {
  std::ifstream in(path);
  if (!in) throw IoError("cannot open mapping '" + path.string() + "'");
  std::stringstream ss;
  ss << in.rdbuf();
  return parse_mapping(ss.str(), tree);
}

json mapping_to_json(const CanonicalMapping& mapping) {
  const auto& layout = CanonicalLayout::standard();
  json j;
  j["embodiment"] = mapping.embodiment;
  json entries = json::array();
  for (std::size_t d = 0; d < mapping.slot_of.size(); ++d) {
    entries.push_back({{"joint", mapping.joint_names[d]}, {"slot", layout.slot_name(mapping.slot_of[d])}});
  }
  j["entries"] = entries;
  return j;
}

ActiveMask active_mask(const CanonicalMapping& mapping) {
  ActiveMask mask;
  for (int s : mapping.slot_of) mask.set(static_cast<std::size_t>(s));
  return mask;
}

PoseVector CanonicalPose::vector() const {
  PoseVector v;
  v.head<3>() = t;
  v.segment<6>(kRotationOffset) = r6;
  for (int s = 0; s < kCanonicalSlots; ++s) v[kAngleOffset + s] = theta_c[static_cast<std::size_t>(s)];
  return v;
}

CanonicalPose CanonicalPose::from_vector(const PoseVector& v, const ActiveMask& delta) {
  CanonicalPose p;
  p.t = v.head<3>();
  p.r6 = v.segment<6>(kRotationOffset);
  for (int s = 0; s < kCanonicalSlots; ++s) p.theta_c[static_cast<std::size_t>(s)] = v[kAngleOffset + s];
  p.delta = delta;
  return p;
}

CanonicalPose to_canonical(const HandPose& pose, const CanonicalMapping& mapping) {
  if (pose.theta.size() != mapping.source_count()) {
    throw MappingError("to_canonical: pose has " + std::to_string(pose.theta.size()) + " angles, mapping '" +
                       mapping.embodiment + "' expects " + std::to_string(mapping.source_count()));
  }
  CanonicalPose c;
  c.t = pose.t;
  c.r6 = pose.r6;
  for (std::size_t j = 0; j < mapping.slot_of.size(); ++j) {
    c.theta_c[static_cast<std::size_t>(mapping.slot_of[j])] = pose.theta[static_cast<Eigen::Index>(j)];
  }
  c.delta = active_mask(mapping);
  return c;
}

HandPose from_canonical(const CanonicalPose& pose, const CanonicalMapping& mapping) {
  const ActiveMask expected = active_mask(mapping);
  if (pose.delta != expected) {
    throw EmbodimentError("from_canonical: pose mask does not match embodiment '" + mapping.embodiment + "'");
  }
  for (int s = 0; s < kCanonicalSlots; ++s) {
    if (!pose.delta[static_cast<std::size_t>(s)] && pose.theta_c[static_cast<std::size_t>(s)] != 0.0) {
      throw EmbodimentError("from_canonical: masked slot '" + CanonicalLayout::standard().slot_name(s) +
                            "' carries a nonzero angle");
    }
  }
  HandPose h;
  h.t = pose.t;
  h.r6 = pose.r6;
  h.theta.resize(mapping.source_count());
  for (std::size_t j = 0; j < mapping.slot_of.size(); ++j) {
    h.theta[static_cast<Eigen::Index>(j)] = pose.theta_c[static_cast<std::size_t>(mapping.slot_of[j])];
  }
  return h;
}

Mat3 rot6_to_matrix(const Vector6& r6) {
  const Vec3 a1 = r6.head<3>(), a2 = r6.tail<3>();
  const double n1 = a1.norm();
  if (!(n1 > kDegenerate)) throw DegeneracyError("rot6_to_matrix: first vector is (near) zero");
  const Vec3 b1 = a1 / n1;
  const Vec3 u2 = a2 - b1.dot(a2) * b1;
  const double n2 = u2.norm();
  if (!(n2 > kDegenerate)) throw DegeneracyError("rot6_to_matrix: second vector is (near) parallel to the first");
  const Vec3 b2 = u2 / n2;
  Mat3 r;
  r.col(0) = b1;
  r.col(1) = b2;
  r.col(2) = b1.cross(b2);
  return r;
}

Vector6 matrix_to_rot6(const Mat3& r) {
  Vector6 v;
  v.head<3>() = r.col(0);
  v.tail<3>() = r.col(1);
  return v;
}

Vector6 rot6_to_matrix_vjp(const Vector6& r6, const Mat3& grad_r) {
  const Vec3 a1 = r6.head<3>(), a2 = r6.tail<3>();
  const double n1 = a1.norm();
  if (!(n1 > kDegenerate)) throw DegeneracyError("rot6_to_matrix: first vector is (near) zero");
  const Vec3 b1 = a1 / n1;
  const Vec3 u2 = a2 - b1.dot(a2) * b1;
  const double n2 = u2.norm();
  if (!(n2 > kDegenerate)) throw DegeneracyError("rot6_to_matrix: second vector is (near) parallel to the first");
  const Vec3 b2 = u2 / n2;

  const Vec3 g3 = grad_r.col(2);
  Vec3 g_b1 = grad_r.col(0) + b2.cross(g3);
  const Vec3 g_b2 = grad_r.col(1) + g3.cross(b1);
  const Vec3 g_u2 = (g_b2 - b2 * b2.dot(g_b2)) / n2;
  const Vec3 g_a2 = g_u2 - b1 * b1.dot(g_u2);
  g_b1 -= b1.dot(a2) * g_u2 + a2 * b1.dot(g_u2);
  const Vec3 g_a1 = (g_b1 - b1 * b1.dot(g_b1)) / n1;

  Vector6 out;
  out.head<3>() = g_a1;
  out.tail<3>() = g_a2;
  return out;
}

void encode_pose(const CanonicalPose& pose, std::vector<unsigned char>& out) {
  const PoseVector v = pose.vector();
  for (int i = 0; i < kPoseChannels; ++i) binary::put_f64(out, v[i]);
  binary::put_u32(out, static_cast<std::uint32_t>(pose.delta.to_ulong()));
}

CanonicalPose decode_pose(const unsigned char* bytes) {
  PoseVector v;
  for (int i = 0; i < kPoseChannels; ++i) v[i] = binary::get_f64(bytes + 8 * i);
  const std::uint32_t bits = binary::get_u32(bytes + 8 * kPoseChannels);
  if (bits >> kCanonicalSlots) throw ValidationError("pose record: mask uses bits above 24");
  return CanonicalPose::from_vector(v, ActiveMask(bits));
}

json pose_to_json(const CanonicalPose& pose) {
  json j;
  j["t"] = json::array({pose.t.x(), pose.t.y(), pose.t.z()});
  j["r6"] = json::array();
  for (int i = 0; i < 6; ++i) j["r6"].push_back(pose.r6[i]);
  j["theta_c"] = json::array();
  for (double v : pose.theta_c) j["theta_c"].push_back(v);
  j["delta"] = json::array();
  for (int s = 0; s < kCanonicalSlots; ++s) j["delta"].push_back(pose.delta[static_cast<std::size_t>(s)] ? 1 : 0);
  return j;
}

CanonicalPose pose_from_json(const json& j) {
  try {
    CanonicalPose p;
    if (j.at("t").size() != 3 || j.at("r6").size() != 6 || j.at("theta_c").size() != kCanonicalSlots ||
        j.at("delta").size() != kCanonicalSlots) {
      throw ArityError("pose JSON: wrong field lengths");
    }
    for (int i = 0; i < 3; ++i) p.t[i] = j["t"][static_cast<std::size_t>(i)].get<double>();
    for (int i = 0; i < 6; ++i) p.r6[i] = j["r6"][static_cast<std::size_t>(i)].get<double>();
    for (std::size_t s = 0; s < kCanonicalSlots; ++s) {
      p.theta_c[s] = j["theta_c"][s].get<double>();
      p.delta[s] = j["delta"][s].get<int>() != 0;
    }
    return p;
  } catch (const json::exception& e) {
    throw ValidationError(std::string("pose JSON: ") + e.what());
  }
}

}  // namespace morphgrasp
