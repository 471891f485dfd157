#pragma once

#include "morphgrasp/autograd.hpp"
#include "morphgrasp/canonical.hpp"
#include "morphgrasp/morph_encoder.hpp"
#include "morphgrasp/urdf.hpp"

#include <array>
#include <cstdint>
#include <string>
#include <vector>

namespace morphgrasp {

/// Everything the training losses need to know about one hand.
struct Embodiment {
  std::string name;
  KinematicTree tree;
  CanonicalMapping mapping;
  ActiveMask mask;
  JointMorphologyMatrix morphology;
  std::vector<int> descendants;                      // per source DoF
  std::array<int, kCanonicalSlots> slot_descendants{};  // per canonical slot, 0 where masked
  std::vector<SurfaceSample> surface;                // frozen per-link samples
  std::vector<int> joint_driver;                     // per joint: driving DoF or -1
};

Embodiment make_embodiment(KinematicTree tree, CanonicalMapping mapping, int surface_points, std::uint64_t seed);

/// Per-DoF angles read from the canonical channels of a 33-vector.
std::vector<double> dof_angles(const Eigen::Ref<const Eigen::RowVectorXd>& pose, const CanonicalMapping& mapping);

/// Hand-base FK and surface placement in the object frame (p = R h + t).
LabeledPoints hand_surface(const CanonicalPose& pose, const Embodiment& hand, LimitMode mode = LimitMode::Unchecked);

/// Differentiable form: a 1 x 33 pose row to n x 3 surface points, with an
/// analytic Jacobian through the rotation decoding and forward kinematics.
/// `hand` must outlive the returned graph.
ad::Var hand_surface_points(const ad::Var& pose_row, const Embodiment& hand);

}  // namespace morphgrasp
