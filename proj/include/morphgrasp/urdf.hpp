#pragma once

#include "morphgrasp/geometry.hpp"

#include <json.hpp>

#include <cstdint>
#include <filesystem>
#include <map>
#include <optional>
#include <span>
#include <string>
#include <string_view>
#include <vector>

namespace morphgrasp {

enum class JointKind { Revolute, Prismatic, Fixed, Mimic };

const char* to_string(JointKind kind);

struct MimicSource {
  std::string joint;
  double multiplier = 1.0;
  double offset = 0.0;
  bool operator==(const MimicSource&) const = default;
};

struct JointSpec {
  std::string name;
  JointKind kind = JointKind::Fixed;
  bool prismatic_motion = false;  // motion of a mimic joint; revolute otherwise
  std::string parent_link;
  std::string child_link;
  Origin origin;
  Vec3 axis = Vec3::UnitX();
  double limit_lower = 0.0;
  double limit_upper = 0.0;
  std::optional<MimicSource> mimic;

  /// Revolute and prismatic joints carry a degree of freedom; fixed and mimic joints do not.
  bool independent() const { return kind == JointKind::Revolute || kind == JointKind::Prismatic; }
  bool moves() const { return kind != JointKind::Fixed; }
  bool is_prismatic() const {
    return kind == JointKind::Prismatic || (kind == JointKind::Mimic && prismatic_motion);
  }
  bool operator==(const JointSpec&) const = default;
};

struct LinkSpec {
  std::string name;
  bool has_bounds = false;
  Vec3 bbox_extents = Vec3::Zero();  // length, width, height of the collision box
  Origin bbox_offset;                // box center frame in the link frame
  bool operator==(const LinkSpec&) const = default;
};

/// Precomputed bounds for links whose collision geometry is a mesh.
struct LinkBounds {
  Vec3 extents = Vec3::Zero();
  Origin offset;
};
using BoundsSidecar = std::map<std::string, LinkBounds>;

BoundsSidecar parse_bounds_sidecar(std::string_view json_text);

/// Parsed URDF link/joint graph. Joints are stored in depth-first order from
/// the root link, children visited in document order; every per-joint array
/// in the library follows this order, and per-DoF arrays follow it restricted
/// to independent joints.
class KinematicTree {
 public:
  /// Validates the graph and orders joints. Throws StructureError or ValidationError.
  static KinematicTree build(std::string name, std::vector<LinkSpec> links, std::vector<JointSpec> joints);

  const std::string& name() const { return name_; }
  const std::vector<JointSpec>& joints() const { return joints_; }
  const std::vector<LinkSpec>& links() const { return links_; }
  const std::string& root_link() const { return links_[static_cast<std::size_t>(root_)].name; }
  int root_link_index() const { return root_; }

  /// Nearest ancestor joint of joint j, or -1 when j hangs off the root link.
  int parent_joint(int j) const { return parent_joint_[static_cast<std::size_t>(j)]; }
  int parent_link_index(int j) const { return parent_link_[static_cast<std::size_t>(j)]; }
  int child_link_index(int j) const { return child_link_[static_cast<std::size_t>(j)]; }
  /// Joint whose child is `link`, or -1 for the root.
  int link_parent_joint(int link) const { return link_parent_joint_[static_cast<std::size_t>(link)]; }

  int dof_count() const { return static_cast<int>(dof_joint_.size()); }
  /// Index into the angle vector, or -1 for fixed and mimic joints.
  int dof_index(int joint) const { return dof_index_[static_cast<std::size_t>(joint)]; }
  int joint_of_dof(int dof) const { return dof_joint_[static_cast<std::size_t>(dof)]; }
  /// Angle-vector index driving joint j (its own, or its mimic source's); -1 for fixed.
  int driver_dof(int joint) const;

  int joint_index(std::string_view name) const;
  int link_index(std::string_view name) const;
  std::vector<std::string> dof_names() const;

  /// True when one link is the direct parent of the other.
  bool links_adjacent(int a, int b) const;

  bool operator==(const KinematicTree& other) const {
    return name_ == other.name_ && joints_ == other.joints_ && links_ == other.links_;
  }

 private:
  std::string name_;
  std::vector<LinkSpec> links_;
  std::vector<JointSpec> joints_;
  int root_ = 0;
  std::vector<int> parent_joint_, parent_link_, child_link_, link_parent_joint_;
  std::vector<int> dof_index_, dof_joint_;
};

/// Parses the URDF subset (link, joint, origin, axis, limit, mimic, collision
/// box/cylinder/sphere, or mesh backed by `sidecar`).
KinematicTree parse_urdf(std::string_view xml_text, const BoundsSidecar* sidecar = nullptr);

/// Reads a URDF file; a sidecar next to it named `<stem>.bounds.json` is used when present.
KinematicTree load_urdf(const std::filesystem::path& path);

/// Writes the tree back as URDF; mesh links are emitted as their bounding boxes.
std::string to_urdf(const KinematicTree& tree);

/// Canonical JSON form with stable field order.
nlohmann::ordered_json tree_to_json(const KinematicTree& tree);
KinematicTree tree_from_json(const nlohmann::ordered_json& j);

enum class LimitMode { Strict, Clamp, Unchecked };

struct LinkTransforms {
  std::vector<Transform> link;         // per link, in the hand base frame
  std::vector<Transform> joint_frame;  // per joint: parent link frame composed with the joint origin
  std::vector<double> joint_value;     // per joint: applied angle (or displacement)
};

LinkTransforms forward_kinematics(const KinematicTree& tree, std::span<const double> angles,
                                  LimitMode mode = LimitMode::Strict);

/// Per DoF: number of independent joints strictly below it.
std::vector<int> descendant_counts(const KinematicTree& tree);

/// Link-frame surface samples. The face and in-face coordinates are drawn
/// once and reused across poses, so placed points are differentiable in pose.
struct SurfaceSample {
  int link = 0;
  int face = 0;  // 0..5 = -x,+x,-y,+y,-z,+z of the box
  Vec3 local = Vec3::Zero();
};

std::vector<SurfaceSample> sample_surface_template(const KinematicTree& tree, int n_points, std::uint64_t seed);

struct LabeledPoints {
  Eigen::Matrix<double, Eigen::Dynamic, 3> points;
  std::vector<int> link;
};

LabeledPoints place_surface(std::span<const SurfaceSample> samples, const LinkTransforms& transforms);

LabeledPoints sample_hand_surface(const KinematicTree& tree, const LinkTransforms& transforms, int n_points,
                                  std::uint64_t seed);

}  // namespace morphgrasp
