#pragma once

#include "morphgrasp/geometry.hpp"
#include "morphgrasp/urdf.hpp"

#include <json.hpp>

#include <array>
#include <bitset>
#include <filesystem>
#include <string>
#include <string_view>
#include <vector>

namespace morphgrasp {

inline constexpr int kCanonicalSlots = 24;
/// Diffused pose channels: translation (3) + 6-D rotation (6) + canonical angles (24).
inline constexpr int kPoseChannels = 33;
inline constexpr int kRotationOffset = 3;
inline constexpr int kAngleOffset = 9;

using Vector6 = Eigen::Matrix<double, 6, 1>;
using PoseVector = Eigen::Matrix<double, kPoseChannels, 1>;
using ActiveMask = std::bitset<kCanonicalSlots>;

enum class Finger { Thumb = 0, Index, Middle, Ring, Pinky, Wrist };
inline constexpr int kChainCount = 6;

const char* to_string(Finger f);
Finger finger_from_string(std::string_view name);

/// The 24-slot canonical hand: thumb(5) index(4) middle(4) ring(4) pinky(5)
/// wrist-palm(2). Within a chain, slot 0 is the most proximal joint.
class CanonicalLayout {
 public:
  static const CanonicalLayout& standard();

  const std::string& slot_name(int slot) const { return names_[static_cast<std::size_t>(slot)]; }
  /// -1 for the first slot of each chain.
  int slot_parent(int slot) const { return parent_[static_cast<std::size_t>(slot)]; }
  Finger chain_of(int slot) const { return chain_[static_cast<std::size_t>(slot)]; }
  int position_in_chain(int slot) const { return position_[static_cast<std::size_t>(slot)]; }
  int chain_start(Finger f) const { return start_[static_cast<std::size_t>(f)]; }
  int chain_size(Finger f) const { return size_[static_cast<std::size_t>(f)]; }
  /// -1 when unknown.
  int slot_index(std::string_view name) const;

 private:
  CanonicalLayout();
  std::array<std::string, kCanonicalSlots> names_;
  std::array<int, kCanonicalSlots> parent_{};
  std::array<Finger, kCanonicalSlots> chain_{};
  std::array<int, kCanonicalSlots> position_{};
  std::array<int, kChainCount> start_{}, size_{};
};

/// Index-level assignment of an embodiment's DoFs to canonical slots.
struct CanonicalMapping {
  std::string embodiment;
  std::vector<std::string> joint_names;  // source DoF order
  std::vector<int> slot_of;              // canonical slot per source DoF

  /// Checks injectivity, slot range and the proximal-prefix rule. Throws MappingError.
  void validate() const;
  int source_count() const { return static_cast<int>(slot_of.size()); }
  /// Source DoFs mapped into a finger chain, ordered by canonical position.
  std::vector<int> chain_sources(Finger f) const;
};

/// Resolves named entries against a tree: every DoF must be mapped exactly once.
CanonicalMapping resolve_mapping(std::string embodiment,
                                 const std::vector<std::pair<std::string, std::string>>& entries,
                                 const KinematicTree& tree);
CanonicalMapping parse_mapping(std::string_view json_text, const KinematicTree& tree);
CanonicalMapping load_mapping(const std::filesystem::path& path, const KinematicTree& tree);
nlohmann::ordered_json mapping_to_json(const CanonicalMapping& mapping);

ActiveMask active_mask(const CanonicalMapping& mapping);

struct HandPose {
  Vec3 t = Vec3::Zero();
  Vector6 r6 = (Vector6() << 1, 0, 0, 0, 1, 0).finished();
  Eigen::VectorXd theta;
};

struct CanonicalPose {
  Vec3 t = Vec3::Zero();
  Vector6 r6 = (Vector6() << 1, 0, 0, 0, 1, 0).finished();
  std::array<double, kCanonicalSlots> theta_c{};
  ActiveMask delta;

  /// The continuous 33-channel state (t, r6, theta_c).
  PoseVector vector() const;
  static CanonicalPose from_vector(const PoseVector& v, const ActiveMask& delta);
  bool operator==(const CanonicalPose&) const = default;
};

CanonicalPose to_canonical(const HandPose& pose, const CanonicalMapping& mapping);
HandPose from_canonical(const CanonicalPose& pose, const CanonicalMapping& mapping);

/// Gram-Schmidt decoding of the 6-D rotation into a proper rotation matrix
/// whose first two columns span the two input vectors.
Mat3 rot6_to_matrix(const Vector6& r6);
Vector6 matrix_to_rot6(const Mat3& r);
inline Vector6 identity_rot6() { return (Vector6() << 1, 0, 0, 0, 1, 0).finished(); }

/// Vector-Jacobian product of rot6_to_matrix: maps dL/dR to dL/dr6.
Vector6 rot6_to_matrix_vjp(const Vector6& r6, const Mat3& grad_r);

// Flat record: 33 little-endian float64 (t, r6, theta_c) followed by a
// little-endian uint32 whose low 24 bits are the mask.
inline constexpr std::size_t kPoseRecordBytes = kPoseChannels * 8 + 4;
void encode_pose(const CanonicalPose& pose, std::vector<unsigned char>& out);
CanonicalPose decode_pose(const unsigned char* bytes);
nlohmann::ordered_json pose_to_json(const CanonicalPose& pose);
CanonicalPose pose_from_json(const nlohmann::ordered_json& j);

}  // namespace morphgrasp
