#include "morphgrasp/hand_model.hpp"

#include "morphgrasp/errors.hpp"

namespace morphgrasp {

Embodiment make_embodiment(KinematicTree tree, CanonicalMapping mapping, int surface_points, std::uint64_t seed) {
  if (mapping.source_count() != tree.dof_count()) {
    throw MappingError("embodiment '" + tree.name() + "': mapping covers " + std::to_string(mapping.source_count()) +
                       " joints, tree has " + std::to_string(tree.dof_count()));
  }
  mapping.validate();
  Embodiment e;
  e.name = mapping.embodiment.empty() ? tree.name() : mapping.embodiment;
  e.tree = std::move(tree);
  e.mapping = std::move(mapping);
  e.mask = active_mask(e.mapping);
  e.morphology = extract_joint_morphology(e.tree, e.mapping);
  e.descendants = descendant_counts(e.tree);
  for (std::size_t d = 0; d < e.descendants.size(); ++d) {
    e.slot_descendants[static_cast<std::size_t>(e.mapping.slot_of[d])] = e.descendants[d];
  }
  e.surface = sample_surface_template(e.tree, surface_points, seed);
  for (std::size_t j = 0; j < e.tree.joints().size(); ++j) e.joint_driver.push_back(e.tree.driver_dof(static_cast<int>(j)));
  return e;
}

std::vector<double> dof_angles(const Eigen::Ref<const Eigen::RowVectorXd>& pose, const CanonicalMapping& mapping) {
  if (pose.size() != kPoseChannels) throw ArityError("dof_angles: expected a 33-channel pose");
  std::vector<double> q(mapping.slot_of.size());
  for (std::size_t d = 0; d < q.size(); ++d) q[d] = pose(kAngleOffset + mapping.slot_of[d]);
  return q;
}

LabeledPoints hand_surface(const CanonicalPose& pose, const Embodiment& hand, LimitMode mode) {
  const HandPose native = from_canonical(pose, hand.mapping);
  const LinkTransforms fk = forward_kinematics(hand.tree, std::span<const double>(native.theta.data(), static_cast<std::size_t>(native.theta.size())), mode);
  LabeledPoints pts = place_surface(hand.surface, fk);
  const Mat3 r = rot6_to_matrix(pose.r6);
  pts.points = (pts.points * r.transpose()).rowwise() + pose.t.transpose();
  return pts;
}

ad::Var hand_surface_points(const ad::Var& pose_row, const Embodiment& hand) {
  if (pose_row.rows() != 1 || pose_row.cols() != kPoseChannels) throw ArityError("hand_surface_points: expected 1 x 33 pose");
  const Eigen::RowVectorXd row = pose_row.value().row(0);
  const std::vector<double> q = dof_angles(row, hand.mapping);
  const LinkTransforms fk = forward_kinematics(hand.tree, q, LimitMode::Unchecked);
  const LabeledPoints local = place_surface(hand.surface, fk);  // hand base frame
  const Vector6 r6 = row.segment<6>(kRotationOffset).transpose();
  const Mat3 r = rot6_to_matrix(r6);
  const Vec3 t = row.head<3>().transpose();
  ad::Matrix out = (local.points * r.transpose()).rowwise() + t.transpose();

  return ad::make_op(std::move(out), {pose_row}, [&hand, fk, local, r, r6](ad::Node& n) {
    const ad::Matrix& g = n.grad;  // n x 3, dL/dp
    ad::Matrix grad = ad::Matrix::Zero(1, kPoseChannels);
    grad.block<1, 3>(0, 0) = g.colwise().sum();
    const Mat3 dR = g.transpose() * local.points;  // sum_k g_k h_k^T
    grad.block<1, 6>(0, kRotationOffset) = rot6_to_matrix_vjp(r6, dR).transpose();

    const ad::Matrix gh = g * r;  // rows: R^T g_k
    const auto& tree = hand.tree;
    std::vector<double> dq(static_cast<std::size_t>(tree.dof_count()), 0.0);
    for (Eigen::Index k = 0; k < gh.rows(); ++k) {
      const Vec3 h = local.points.row(k).transpose();
      const Vec3 gk = gh.row(k).transpose();
      int j = tree.link_parent_joint(local.link[static_cast<std::size_t>(k)]);
      while (j >= 0) {
        const JointSpec& js = tree.joints()[static_cast<std::size_t>(j)];
        const int d = hand.joint_driver[static_cast<std::size_t>(j)];
        if (d >= 0) {
          const Transform& frame = fk.joint_frame[static_cast<std::size_t>(j)];
          const Vec3 axis = frame.linear() * js.axis;
          const Vec3 dh = js.is_prismatic() ? axis : Vec3(axis.cross(h - frame.translation()));
          const double mult = js.kind == JointKind::Mimic ? js.mimic->multiplier : 1.0;
          dq[static_cast<std::size_t>(d)] += mult * gk.dot(dh);
        }
        j = tree.link_parent_joint(tree.parent_link_index(j));
      }
    }
    for (std::size_t d = 0; d < dq.size(); ++d) grad(0, kAngleOffset + hand.mapping.slot_of[d]) += dq[d];
    n.inputs[0]->accumulate(grad);
  });
}

}  // namespace morphgrasp
