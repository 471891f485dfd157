#include "morphgrasp/errors.hpp"
#include "morphgrasp/mutate.hpp"
#include "test_support.hpp"

#include <gtest/gtest.h>

#include <algorithm>

using namespace morphgrasp;
namespace mt = morphgrasp::testing;

namespace {

HandDescription load(const std::string& name) {
  auto h = mt::load_hand(name);
  return {std::move(h.tree), std::move(h.mapping)};
}

MorphologyVariation remove(Finger f) {
  MorphologyVariation v;
  v.kind = VariationKind::Remove;
  v.finger = f;
  return v;
}

/// Joint specs of a finger chain in canonical order.
std::vector<JointSpec> chain_joints(const HandDescription& h, Finger f) {
  std::vector<JointSpec> out;
  for (int d : h.mapping.chain_sources(f)) out.push_back(h.tree.joints()[static_cast<std::size_t>(h.tree.joint_of_dof(d))]);
  return out;
}

/// Largest distance from the finger mount frame to a link frame in the finger subtree, at zero pose.
double finger_reach(const HandDescription& h, Finger f) {
  const std::vector<int> joints = finger_subtree(h.tree, h.mapping, f);
  const std::vector<double> zero(static_cast<std::size_t>(h.tree.dof_count()), 0.0);
  const LinkTransforms fk = forward_kinematics(h.tree, zero, LimitMode::Unchecked);
  const int root = *std::min_element(joints.begin(), joints.end());
  const Transform mount = fk.joint_frame[static_cast<std::size_t>(root)];
  double reach = 0.0;
  for (int j : joints) {
    const Transform& link = fk.link[static_cast<std::size_t>(h.tree.child_link_index(j))];
    reach = std::max(reach, (mount.inverse() * link).translation().norm());
  }
  return reach;
}

}  // namespace

TEST(Mutate, RemovePinkyFromShadow) {
  const HandDescription shadow = load("shadow");
  const MutationResult r = mutate_morphology(shadow, remove(Finger::Pinky));
  EXPECT_EQ(active_mask(r.hand.mapping).count(), 19u);
  EXPECT_EQ(r.hand.tree.dof_count(), 19);
  EXPECT_TRUE(r.hand.mapping.chain_sources(Finger::Pinky).empty());
  for (const auto& j : r.hand.tree.joints()) EXPECT_EQ(j.name.find("LF"), std::string::npos) << j.name;
}

TEST(Mutate, DisjointRemovalsCommute) {
  const HandDescription shadow = load("shadow");
  const auto ab = apply_variations(shadow, {remove(Finger::Index), remove(Finger::Ring)});
  const auto ba = apply_variations(shadow, {remove(Finger::Ring), remove(Finger::Index)});
  EXPECT_EQ(ab.hand.tree, ba.hand.tree);
  EXPECT_EQ(ab.hand.mapping.slot_of, ba.hand.mapping.slot_of);
  EXPECT_EQ(active_mask(ab.hand.mapping).count(), 16u);
}

TEST(Mutate, ThumbRemovalNeedsOverride) {
  const HandDescription shadow = load("shadow");
  EXPECT_THROW(mutate_morphology(shadow, remove(Finger::Thumb)), MutationError);
  MorphologyVariation forced = remove(Finger::Thumb);
  forced.allow_thumb_removal = true;
  EXPECT_EQ(active_mask(mutate_morphology(shadow, forced).hand.mapping).count(), 19u);
  const auto parsed = parse_variation_spec("remove:thumb:force");
  ASSERT_EQ(parsed.size(), 1u);
  EXPECT_TRUE(parsed[0].allow_thumb_removal);
}

TEST(Mutate, ScaleThumbStretchesReach) {
  const HandDescription shadow = load("shadow");
  for (double factor : {1.5, 0.8}) {
    MorphologyVariation v;
    v.kind = VariationKind::Scale;
    v.finger = Finger::Thumb;
    v.factor = factor;
    const MutationResult r = mutate_morphology(shadow, v);
    EXPECT_NEAR(finger_reach(r.hand, Finger::Thumb), factor * finger_reach(shadow, Finger::Thumb), 1e-12);
    EXPECT_NEAR(finger_reach(r.hand, Finger::Index), finger_reach(shadow, Finger::Index), 1e-15);
    EXPECT_EQ(active_mask(r.hand.mapping), active_mask(shadow.mapping));
    // Limits are unchanged.
    const auto before = chain_joints(shadow, Finger::Thumb), after = chain_joints(r.hand, Finger::Thumb);
    ASSERT_EQ(before.size(), after.size());
    for (std::size_t k = 0; k < before.size(); ++k) {
      EXPECT_EQ(before[k].limit_lower, after[k].limit_lower);
      EXPECT_EQ(before[k].limit_upper, after[k].limit_upper);
    }
  }
  MorphologyVariation bad;
  bad.kind = VariationKind::Scale;
  bad.factor = -1.0;
  EXPECT_THROW(mutate_morphology(shadow, bad), MutationError);
}

TEST(Mutate, SwapEqualLengthFingerKeepsMaskAndTakesDonorJoints) {
  const HandDescription shadow = load("shadow"), allegro = load("allegro");
  MorphologyVariation v;
  v.kind = VariationKind::Swap;
  v.finger = Finger::Index;
  const MutationResult r = mutate_morphology(shadow, v, &allegro);
  EXPECT_EQ(active_mask(r.hand.mapping), active_mask(shadow.mapping));
  const auto got = chain_joints(r.hand, Finger::Index), donor = chain_joints(allegro, Finger::Index);
  ASSERT_EQ(got.size(), donor.size());
  for (std::size_t k = 0; k < got.size(); ++k) {
    EXPECT_EQ(got[k].limit_lower, donor[k].limit_lower);
    EXPECT_EQ(got[k].limit_upper, donor[k].limit_upper);
    EXPECT_TRUE(got[k].axis.isApprox(donor[k].axis, 1e-12));
  }
  EXPECT_THROW(mutate_morphology(shadow, v), MutationError);
}

TEST(Mutate, SwapThumbTakesDonorJointCount) {
  const HandDescription shadow = load("shadow"), allegro = load("allegro");
  const MutationResult r = apply_variations(shadow, parse_variation_spec("swap:thumb"), &allegro);
  EXPECT_EQ(r.hand.mapping.chain_sources(Finger::Thumb).size(), allegro.mapping.chain_sources(Finger::Thumb).size());
  EXPECT_EQ(active_mask(r.hand.mapping).count(), 23u);
}

TEST(Mutate, SpecParsing) {
  auto v = parse_variation_spec("remove:index,ring");
  ASSERT_EQ(v.size(), 2u);
  EXPECT_EQ(v[0].finger, Finger::Index);
  EXPECT_EQ(v[1].finger, Finger::Ring);
  v = parse_variation_spec("scale:thumb:1.5");
  ASSERT_EQ(v.size(), 1u);
  EXPECT_EQ(v[0].kind, VariationKind::Scale);
  EXPECT_DOUBLE_EQ(v[0].factor, 1.5);
  EXPECT_EQ(parse_variation_spec("scale:all:0.8").size(), 5u);
  EXPECT_TRUE(parse_variation_spec("none").empty());
  EXPECT_THROW(parse_variation_spec("grow:index"), MutationError);
  EXPECT_THROW(parse_variation_spec("remove:elbow"), MutationError);
  EXPECT_THROW(parse_variation_spec("scale:thumb:abc"), MutationError);
  EXPECT_THROW(parse_variation_spec("remove:wrist"), MutationError);
}

TEST(Mutate, GridRowsBuildWithExpectedCounts) {
  const HandDescription shadow = load("shadow"), allegro = load("allegro");
  const auto& grid = variation_grid();
  ASSERT_EQ(grid.size(), 16u);
  for (const auto& row : grid) {
    const MutationResult r = apply_variations(shadow, parse_variation_spec(row.spec), &allegro);
    EXPECT_EQ(static_cast<int>(active_mask(r.hand.mapping).count()), row.expected_active) << row.spec;
    EXPECT_EQ(r.hand.tree.dof_count(), row.expected_active) << row.spec;
    // Mutated hands re-validate when rebuilt from their own description.
    EXPECT_NO_THROW(KinematicTree::build(r.hand.tree.name(), r.hand.tree.links(), r.hand.tree.joints())) << row.spec;
    EXPECT_NO_THROW(r.hand.mapping.validate()) << row.spec;
    EXPECT_EQ(parse_urdf(to_urdf(r.hand.tree)), r.hand.tree) << row.spec;
  }
}
