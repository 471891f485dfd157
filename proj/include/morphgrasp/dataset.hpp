#pragma once

#include "morphgrasp/canonical.hpp"
#include "morphgrasp/config.hpp"
#include "morphgrasp/hand_model.hpp"
#include "morphgrasp/losses.hpp"
#include "morphgrasp/object.hpp"
#include "morphgrasp/urdf.hpp"

#include <cstdint>
#include <filesystem>
#include <string>
#include <vector>

namespace morphgrasp {

struct DatasetEmbodiment {
  std::string name;
  KinematicTree tree;
  CanonicalMapping mapping;
};

struct DatasetObject {
  std::string id;
  std::string split = "train";
  ObjectModel model;
};

struct GraspRecord {
  int embodiment = 0;
  int object = 0;
  CanonicalPose pose;
};

struct GraspDataset {
  std::vector<DatasetEmbodiment> embodiments;
  std::vector<DatasetObject> objects;
  std::vector<GraspRecord> records;
};

// Records file: magic "MGRECORD", u32 header length, JSON schema header, then
// per row 33 float64 pose channels, u32 mask, u32 embodiment, u32 object.
inline constexpr std::size_t kRecordRowBytes = kPoseRecordBytes + 8;

void save_records(const std::filesystem::path& path, const std::vector<GraspRecord>& records);
std::vector<GraspRecord> load_records(const std::filesystem::path& path);

/// Manifest JSON: {embodiments: [{name, urdf, mapping}], objects: [{id, file, split}], records_path}.
/// Relative paths resolve against the manifest directory.
GraspDataset load_dataset(const std::filesystem::path& manifest_path);
/// Writes manifest.json, records.bin, one URDF and mapping per embodiment and one PLY per object.
void save_dataset(const std::filesystem::path& dir, const GraspDataset& dataset);
/// Checks index ranges and that each record's mask equals its embodiment's mask.
void validate_dataset(const GraspDataset& dataset);

/// Dimensions read off the two-finger planar gripper.
struct GripperGeometry {
  double half_span = 0.05;  // finger base offset from the palm center
  double l1 = 0.05;         // proximal link length
  double l2 = 0.03;         // distal link length
  double thickness = 0.01;
};
/// Throws GenerationError unless the tree has the four joints finger_{a,b}_{1,2}.
GripperGeometry gripper_geometry(const KinematicTree& tree);

struct ToyGrasp {
  double q1 = 0.0, q2 = 0.0;
  double contact_height = 0.0;  // palm-to-contact distance along the hand z axis
};
/// Closed-form two-link touch: distal link level (q1 + q2 = pi/2) with its tip at
/// lateral offset `half_width`. Throws GenerationError when unreachable or outside limits.
ToyGrasp solve_toy_grasp(const KinematicTree& tree, const GripperGeometry& g, double half_width);

GraspDataset generate_toy_dataset(const ToyConfig& config, const KinematicTree& tree, const CanonicalMapping& mapping,
                                  std::uint64_t seed);
/// Loads the gripper named by `config.urdf` / `config.mapping`.
GraspDataset generate_toy_dataset(const ToyConfig& config, std::uint64_t seed);

/// Mean over the wrist channels (translation plus rotation vector) and the active
/// joint angles of the population standard deviation across poses.
double diversity(const std::vector<CanonicalPose>& poses, const ActiveMask& delta);

struct GraspQuality {
  double max_penetration = 0.0;
  int contact_count = 0;
  double min_clearance = 0.0;
  double spf = 0.0, erf = 0.0, srf = 0.0;
};
GraspQuality grasp_quality(const CanonicalPose& pose, const Embodiment& hand, const ObjectModel& object,
                           const PhysicsLossConfig& physics, const QualityConfig& quality);

}  // namespace morphgrasp
