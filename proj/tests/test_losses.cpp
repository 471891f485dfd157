#include "morphgrasp/errors.hpp"
#include "morphgrasp/hand_model.hpp"
#include "morphgrasp/losses.hpp"
#include "test_support.hpp"

#include <gtest/gtest.h>

#include <algorithm>
#include <cmath>
#include <limits>
#include <numeric>
#include <random>

using namespace morphgrasp;
namespace mt = morphgrasp::testing;

namespace {

double active_geomean(const JointWeights& w, const ActiveMask& delta) {
  double log_sum = 0.0;
  for (int s = 0; s < kCanonicalSlots; ++s)
    if (delta[static_cast<std::size_t>(s)]) log_sum += std::log(w.w[static_cast<std::size_t>(s)]);
  return std::exp(log_sum / static_cast<double>(delta.count()));
}

ObjectModel sphere_object(double radius, const Vec3& center, int n_points, std::uint64_t seed) {
  const TriangleMesh mesh = make_icosphere(radius, 3);
  PointMatrix normals;
  const PointMatrix pts = sample_mesh_surface(mesh, n_points, seed, &normals);
  return ObjectModel::create(pts, normals, mesh).transformed(Mat3::Identity(), center);
}

PointMatrix random_points(int n, double scale, std::mt19937_64& rng) {
  std::uniform_real_distribution<double> u(-scale, scale);
  PointMatrix p(n, 3);
  for (int i = 0; i < n; ++i) p.row(i) << u(rng), u(rng), u(rng);
  return p;
}

Embodiment gripper(int surface_points = 128) {
  auto hand = mt::load_hand("gripper2f");
  return make_embodiment(std::move(hand.tree), std::move(hand.mapping), surface_points, 3);
}

/// Gripper pose with both fingers curled inward.
Eigen::RowVectorXd curled_pose(const Embodiment& hand, double q1, double q2) {
  CanonicalPose p;
  p.delta = hand.mask;
  const CanonicalLayout& layout = CanonicalLayout::standard();
  p.theta_c[static_cast<std::size_t>(layout.chain_start(Finger::Thumb))] = q1;
  p.theta_c[static_cast<std::size_t>(layout.chain_start(Finger::Thumb) + 1)] = q2;
  p.theta_c[static_cast<std::size_t>(layout.chain_start(Finger::Index))] = q1;
  p.theta_c[static_cast<std::size_t>(layout.chain_start(Finger::Index) + 1)] = q2;
  return p.vector().transpose();
}

std::vector<int> surface_links(const Embodiment& hand) {
  std::vector<int> links;
  for (const auto& s : hand.surface) links.push_back(s.link);
  return links;
}

}  // namespace

// ---- joint weights ----------------------------------------------------------

TEST(JointWeights, ThreeJointChainExample) {
  const KinematicTree chain = mt::serial_chain(3);
  const std::vector<int> desc = descendant_counts(chain);
  ASSERT_EQ(desc, (std::vector<int>{2, 1, 0}));
  std::array<int, kCanonicalSlots> c{};
  ActiveMask delta;
  for (int k = 0; k < 3; ++k) {
    c[static_cast<std::size_t>(5 + k)] = desc[static_cast<std::size_t>(k)];
    delta.set(static_cast<std::size_t>(5 + k));
  }
  const JointWeights w = joint_weights(c, delta);
  EXPECT_NEAR(w.G, 1.81712, 1e-5);
  EXPECT_NEAR(w.G, std::cbrt(6.0), 1e-15);
  EXPECT_NEAR(w.w[5], 1.28490, 1e-5);
  EXPECT_NEAR(w.w[6], 1.04912, 1e-5);
  EXPECT_NEAR(w.w[7], 0.74184, 1e-5);
  EXPECT_NEAR(active_geomean(w, delta), 1.0, 1e-12);
  for (int s = 0; s < kCanonicalSlots; ++s)
    if (!delta[static_cast<std::size_t>(s)]) {
      EXPECT_EQ(w.w[static_cast<std::size_t>(s)], 0.0);
    }
}

TEST(JointWeights, LeavesAndSingleJointAreUniform) {
  std::array<int, kCanonicalSlots> c{};
  ActiveMask delta;
  delta.set(0).set(5).set(9);
  JointWeights w = joint_weights(c, delta);
  EXPECT_DOUBLE_EQ(w.G, 1.0);
  for (int s : {0, 5, 9}) EXPECT_DOUBLE_EQ(w.w[static_cast<std::size_t>(s)], 1.0);
  ActiveMask one;
  one.set(3);
  c[3] = 7;
  w = joint_weights(c, one);
  EXPECT_DOUBLE_EQ(w.w[3], 1.0);
}

TEST(JointWeights, EmptyMaskAndBadCountsRejected) {
  std::array<int, kCanonicalSlots> c{};
  EXPECT_THROW(joint_weights(c, ActiveMask{}), DomainError);
  ActiveMask delta;
  delta.set(0);
  c[0] = -1;
  EXPECT_THROW(joint_weights(c, delta), DomainError);
  std::vector<int> short_c(3, 0);
  EXPECT_THROW(joint_weights(short_c, delta), ArityError);
}

TEST(JointWeights, GeomeanIsOneOverRandomTreesAndMasks) {
  std::mt19937_64 rng(2024);
  for (int trial = 0; trial < 1000; ++trial) {
    const int joints = std::uniform_int_distribution<int>(1, 24)(rng);
    const KinematicTree tree = mt::random_tree(rng, joints, std::uniform_int_distribution<int>(1, 6)(rng));
    const std::vector<int> desc = descendant_counts(tree);
    std::vector<int> slots(kCanonicalSlots);
    std::iota(slots.begin(), slots.end(), 0);
    std::shuffle(slots.begin(), slots.end(), rng);
    std::array<int, kCanonicalSlots> c{};
    ActiveMask delta;
    for (std::size_t d = 0; d < desc.size(); ++d) {
      if (d > 0 && std::bernoulli_distribution(0.2)(rng)) continue;
      c[static_cast<std::size_t>(slots[d])] = desc[d];
      delta.set(static_cast<std::size_t>(slots[d]));
    }
    const JointWeights w = joint_weights(c, delta);
    ASSERT_NEAR(active_geomean(w, delta), 1.0, 1e-9) << "trial " << trial;
    for (int s = 0; s < kCanonicalSlots; ++s) {
      if (delta[static_cast<std::size_t>(s)])
        ASSERT_GT(w.w[static_cast<std::size_t>(s)], 0.0);
      else
        ASSERT_EQ(w.w[static_cast<std::size_t>(s)], 0.0);
    }
  }
}

// ---- morph and recon --------------------------------------------------------

TEST(MorphLoss, Examples) {
  ActiveMask delta;
  delta.set(4);
  std::array<int, kCanonicalSlots> c{};
  const JointWeights w = joint_weights(c, delta);
  CanonicalPose a, b;
  a.delta = b.delta = delta;
  EXPECT_EQ(morph_loss(a, b, w), 0.0);
  b.theta_c[4] = 0.5;
  EXPECT_DOUBLE_EQ(morph_loss(a, b, w), 0.25);
  b.theta_c[4] = 0.0;
  a.theta_c[10] = 3.0;  // masked
  EXPECT_EQ(morph_loss(a, b, w), 0.0);
  b.delta.set(10);
  EXPECT_THROW(morph_loss(a, b, w), EmbodimentError);
}

TEST(MorphLoss, InvariantToMaskedChannels) {
  const auto hand = mt::load_hand("barrett");
  std::mt19937_64 rng(4);
  std::normal_distribution<double> n(0.0, 1.0);
  const ActiveMask delta = active_mask(hand.mapping);
  std::array<int, kCanonicalSlots> c{};
  const JointWeights w = joint_weights(c, delta);
  CanonicalPose a, b;
  a.delta = b.delta = delta;
  a.t = Vec3(n(rng), n(rng), n(rng));
  for (int s = 0; s < kCanonicalSlots; ++s)
    if (delta[static_cast<std::size_t>(s)]) a.theta_c[static_cast<std::size_t>(s)] = n(rng);
  const double base = morph_loss(a, b, w);
  for (int s = 0; s < kCanonicalSlots; ++s)
    if (!delta[static_cast<std::size_t>(s)]) a.theta_c[static_cast<std::size_t>(s)] = n(rng);
  EXPECT_EQ(morph_loss(a, b, w), base);
}

TEST(MorphLoss, TapeFormMatchesAndDifferentiates) {
  std::mt19937_64 rng(5);
  std::normal_distribution<double> n(0.0, 1.0);
  const auto hand = mt::load_hand("allegro");
  const ActiveMask delta = active_mask(hand.mapping);
  std::array<int, kCanonicalSlots> c{};
  for (int s = 0; s < kCanonicalSlots; ++s)
    if (delta[static_cast<std::size_t>(s)]) c[static_cast<std::size_t>(s)] = std::uniform_int_distribution<int>(0, 3)(rng);
  const JointWeights w = joint_weights(c, delta);
  Eigen::MatrixXd pred(3, kPoseChannels), target(3, kPoseChannels);
  for (Eigen::Index i = 0; i < pred.size(); ++i) {
    pred.data()[i] = n(rng);
    target.data()[i] = n(rng);
  }
  const Eigen::MatrixXd weights = morph_channel_weights(w).replicate(3, 1);
  double expected = 0.0;
  for (int r = 0; r < 3; ++r) {
    const CanonicalPose p = CanonicalPose::from_vector(pred.row(r).transpose(), delta);
    const CanonicalPose q = CanonicalPose::from_vector(target.row(r).transpose(), delta);
    expected += morph_loss(p, q, w) / 3.0;
  }
  // from_vector zeroes masked angle channels, so compare on the same inputs.
  Eigen::MatrixXd pred_m = pred, target_m = target;
  for (int r = 0; r < 3; ++r) {
    pred_m.row(r) = CanonicalPose::from_vector(pred.row(r).transpose(), delta).vector().transpose();
    target_m.row(r) = CanonicalPose::from_vector(target.row(r).transpose(), delta).vector().transpose();
  }
  EXPECT_NEAR(morph_loss(ad::constant(pred_m), target_m, weights).value()(0, 0), expected, 1e-12);
  // Masked channels carry zero weight.
  EXPECT_NEAR(morph_loss(ad::constant(pred), target_m, weights).value()(0, 0),
              morph_loss(ad::constant(pred_m), target_m, weights).value()(0, 0), 1e-12);

  const ad::Var leaf = ad::leaf(pred);
  const auto result = mt::gradcheck([&] { return morph_loss(leaf, target, weights); }, {leaf});
  EXPECT_LT(result.relative_error, 1e-3);
  EXPECT_THROW(morph_loss(leaf, target.topRows(2), weights), ArityError);
}

TEST(ReconLoss, ExamplesAndSymmetry) {
  const Eigen::VectorXd zero = Eigen::VectorXd::Zero(33), ones = Eigen::VectorXd::Ones(33);
  EXPECT_DOUBLE_EQ(recon_loss(zero, ones), 1.0);
  EXPECT_EQ(recon_loss(ones, ones), 0.0);
  std::mt19937_64 rng(6);
  std::normal_distribution<double> n(0.0, 1.0);
  Eigen::VectorXd a(33), b(33);
  for (int i = 0; i < 33; ++i) {
    a[i] = n(rng);
    b[i] = n(rng);
  }
  EXPECT_EQ(recon_loss(a, b), recon_loss(b, a));
  Eigen::VectorXd rot_only = zero;
  rot_only.segment<6>(kRotationOffset).setConstant(5.0);
  EXPECT_EQ(recon_loss(zero, rot_only, true), 0.0);
  EXPECT_THROW(recon_loss(a, Eigen::VectorXd::Zero(32)), ArityError);
}

TEST(ReconLoss, TapeFormMatchesAndDifferentiates) {
  std::mt19937_64 rng(7);
  std::normal_distribution<double> n(0.0, 1.0);
  Eigen::MatrixXd eps(4, kPoseChannels), eps_hat(4, kPoseChannels);
  for (Eigen::Index i = 0; i < eps.size(); ++i) {
    eps.data()[i] = n(rng);
    eps_hat.data()[i] = n(rng);
  }
  for (bool exclude : {false, true}) {
    double expected = 0.0;
    for (int r = 0; r < 4; ++r)
      expected += recon_loss(eps.row(r).transpose(), eps_hat.row(r).transpose(), exclude) / 4.0;
    EXPECT_NEAR(recon_loss(ad::constant(eps_hat), eps, exclude).value()(0, 0), expected, 1e-12);
    const ad::Var leaf = ad::leaf(eps_hat);
    EXPECT_LT(mt::gradcheck([&] { return recon_loss(leaf, eps, exclude); }, {leaf}).relative_error, 1e-3);
  }
}

// ---- physics terms ----------------------------------------------------------

TEST(SpfLoss, Examples) {
  PhysicsLossConfig cfg;
  PointMatrix cloud(1, 3);
  cloud << 0, 0, 0;
  const ObjectModel obj = ObjectModel::create(cloud);
  PointMatrix hand(1, 3);
  hand << 0.0004, 0, 0;
  EXPECT_NEAR(spf_loss(hand, obj, cfg), 0.02, 1e-9);
  hand << 1, 0, 0;
  int members = -1;
  EXPECT_EQ(spf_loss(hand, obj, cfg, nullptr, &members), 0.0);
  EXPECT_EQ(members, 0);
}

TEST(SpfLoss, MembershipGrowsWithTauAndMatchesBruteForce) {
  std::mt19937_64 rng(8);
  const PointMatrix cloud = random_points(150, 0.1, rng);
  const PointMatrix hand = random_points(200, 0.12, rng);
  const ObjectModel obj = ObjectModel::create(cloud);
  PhysicsLossConfig cfg;
  int last = -1;
  for (double tau : {0.005, 0.01, 0.02, 0.04, 0.08}) {
    cfg.tau = tau;
    int members = 0;
    const double v = spf_loss(hand, obj, cfg, nullptr, &members);
    EXPECT_GE(members, last);
    last = members;
    EXPECT_NEAR(v, mt::spf_oracle(hand, cloud, tau, cfg.eps_guard), 1e-9);
  }
  PointMatrix empty(0, 3);
  EXPECT_THROW(ObjectModel::create(empty), ValidationError);
}

TEST(ErfLoss, Examples) {
  const TriangleMesh box = make_box_mesh(Vec3(1, 1, 1));
  PointMatrix normals;
  const PointMatrix surface = sample_mesh_surface(box, 100, 1, &normals);
  const ObjectModel obj = ObjectModel::create(surface, normals, box);
  PointMatrix pts(10, 3);
  for (int i = 0; i < 10; ++i) pts.row(i) << 2.0 + i, 0, 0;
  EXPECT_EQ(erf_loss(pts, obj), 0.0);
  pts.row(3) << 0.49, 0, 0;
  EXPECT_NEAR(erf_loss(pts, obj), 0.001, 1e-12);
  double last = erf_loss(pts, obj);
  for (double x : {0.45, 0.4, 0.3, 0.1}) {
    pts.row(3) << x, 0, 0;
    const double v = erf_loss(pts, obj);
    EXPECT_GT(v, last);
    last = v;
  }
  EXPECT_THROW(erf_loss(pts, ObjectModel::create(pts)), CapabilityError);
}

TEST(ErfLoss, MatchesBruteForce) {
  std::mt19937_64 rng(9);
  for (const TriangleMesh& mesh : {make_icosphere(0.05, 2), make_box_mesh(Vec3(0.08, 0.05, 0.1))}) {
    const ObjectModel obj = ObjectModel::create(sample_mesh_surface(mesh, 100, 2), std::nullopt, mesh);
    const PointMatrix pts = random_points(200, 0.07, rng);
    EXPECT_NEAR(erf_loss(pts, obj), mt::erf_oracle(pts, mesh), 1e-9);
  }
}

TEST(SrfLoss, Examples) {
  PhysicsLossConfig cfg;
  cfg.d_th = 0.01;
  PointMatrix pts(2, 3);
  pts << 0, 0, 0, 0.005, 0, 0;
  const std::vector<int> two{0, 1}, one{0, 0};
  EXPECT_NEAR(srf_loss(pts, two, nullptr, cfg), 0.0025, 1e-15);
  EXPECT_EQ(srf_loss(pts, one, nullptr, cfg), 0.0);
  pts.row(1) << 0.02, 0, 0;
  EXPECT_EQ(srf_loss(pts, two, nullptr, cfg), 0.0);
  EXPECT_THROW(srf_loss(pts, std::vector<int>{0}, nullptr, cfg), ArityError);
}

TEST(SrfLoss, AdjacentLinksExcludedByDefault) {
  const KinematicTree chain = mt::serial_chain(2);
  PhysicsLossConfig cfg;
  cfg.d_th = 0.01;
  PointMatrix pts(2, 3);
  pts << 0, 0, 0, 0.005, 0, 0;
  const std::vector<int> parent_child{chain.link_index("l0"), chain.link_index("l1")};
  EXPECT_EQ(srf_loss(pts, parent_child, &chain, cfg), 0.0);
  cfg.exclude_adjacent = false;
  EXPECT_NEAR(srf_loss(pts, parent_child, &chain, cfg), 0.0025, 1e-15);
  cfg.exclude_adjacent = true;
  const std::vector<int> grand{chain.link_index("l0"), chain.link_index("l2")};
  EXPECT_NEAR(srf_loss(pts, grand, &chain, cfg), 0.0025, 1e-15);
}

TEST(SrfLoss, MatchesBruteForceOnShippedHand) {
  const auto hand = mt::load_hand("allegro");
  std::mt19937_64 rng(10);
  const LabeledPoints surf =
      sample_hand_surface(hand.tree, forward_kinematics(hand.tree, mt::random_angles(hand.tree, rng), LimitMode::Clamp), 200, 4);
  PhysicsLossConfig cfg;
  for (double d_th : {0.005, 0.02}) {
    cfg.d_th = d_th;
    for (bool exclude : {true, false}) {
      cfg.exclude_adjacent = exclude;
      EXPECT_NEAR(srf_loss(surf.points, surf.link, &hand.tree, cfg),
                  mt::srf_oracle(surf.points, surf.link, exclude ? &hand.tree : nullptr, d_th), 1e-9);
    }
  }
}

TEST(PhysicsLosses, DoubleGradientsMatchFiniteDifferences) {
  std::mt19937_64 rng(11);
  const ObjectModel obj = sphere_object(0.05, Vec3::Zero(), 200, 5);
  PointMatrix pts = random_points(60, 0.06, rng);
  std::vector<int> links(60);
  for (int i = 0; i < 60; ++i) links[static_cast<std::size_t>(i)] = i % 4;
  PhysicsLossConfig cfg;
  cfg.d_th = 0.03;
  PointMatrix g_spf, g_erf, g_srf;
  spf_loss(pts, obj, cfg, &g_spf);
  erf_loss(pts, obj, &g_erf);
  srf_loss(pts, links, nullptr, cfg, &g_srf);
  const double h = 1e-7;
  double num = 0.0, den = 0.0;
  for (int i = 0; i < 60; ++i)
    for (int k = 0; k < 3; ++k) {
      PointMatrix up = pts, down = pts;
      up(i, k) += h;
      down(i, k) -= h;
      const Eigen::Vector3d fd((spf_loss(up, obj, cfg) - spf_loss(down, obj, cfg)) / (2 * h),
                               (erf_loss(up, obj) - erf_loss(down, obj)) / (2 * h),
                               (srf_loss(up, links, nullptr, cfg) - srf_loss(down, links, nullptr, cfg)) / (2 * h));
      const Eigen::Vector3d an(g_spf(i, k), g_erf(i, k), g_srf(i, k));
      num += (fd - an).squaredNorm();
      den += an.squaredNorm();
    }
  EXPECT_LT(std::sqrt(num / den), 1e-3);
}

TEST(PhysicsLosses, TapeFormsMatchDoubleForms) {
  std::mt19937_64 rng(12);
  const ObjectModel obj = sphere_object(0.05, Vec3::Zero(), 200, 6);
  const PointMatrix pts = random_points(80, 0.06, rng);
  std::vector<int> links(80);
  for (int i = 0; i < 80; ++i) links[static_cast<std::size_t>(i)] = i % 3;
  PhysicsLossConfig cfg;
  cfg.d_th = 0.02;
  const ad::Var v = ad::constant(pts);
  EXPECT_NEAR(spf_loss(v, obj, cfg).value()(0, 0), spf_loss(pts, obj, cfg), 1e-15);
  EXPECT_NEAR(erf_loss(v, obj).value()(0, 0), erf_loss(pts, obj), 1e-15);
  EXPECT_NEAR(srf_loss(v, links, nullptr, cfg).value()(0, 0), srf_loss(pts, links, nullptr, cfg), 1e-15);
}

TEST(PhysicsLosses, GradientsThroughKinematicsMatchFiniteDifferences) {
  const Embodiment hand = gripper();
  const std::vector<int> links = surface_links(hand);
  // Sphere between the fingers: inner finger faces penetrate, palm lies within tau.
  const ObjectModel obj = sphere_object(0.052, Vec3(0.0, 0.0, 0.06), 300, 7);
  PhysicsLossConfig cfg;
  cfg.d_th = 0.06;
  Eigen::RowVectorXd row = curled_pose(hand, 0.35, 0.9);
  row.segment<3>(0) << 0.002, -0.001, 0.003;
  const ad::Var pose = ad::leaf(row);
  const ad::Var pts = hand_surface_points(pose, hand);
  ASSERT_GT(spf_loss(pts, obj, cfg).value()(0, 0), 0.0);
  ASSERT_GT(erf_loss(pts, obj).value()(0, 0), 0.0);
  ASSERT_GT(srf_loss(pts, links, &hand.tree, cfg).value()(0, 0), 0.0);

  // Nearest-point and mesh-distance terms are piecewise smooth; a small step stays within one piece.
  const auto spf = mt::gradcheck([&] { return spf_loss(hand_surface_points(pose, hand), obj, cfg); }, {pose}, 1e-6);
  const auto erf = mt::gradcheck([&] { return erf_loss(hand_surface_points(pose, hand), obj); }, {pose}, 1e-6);
  const auto srf = mt::gradcheck([&] { return srf_loss(hand_surface_points(pose, hand), links, &hand.tree, cfg); }, {pose});
  EXPECT_LT(spf.relative_error, 1e-3);
  EXPECT_LT(erf.relative_error, 1e-3);
  EXPECT_LT(srf.relative_error, 1e-3);
}

TEST(PhysicsLosses, NonNegativeAndZeroWhenSeparated) {
  const Embodiment hand = gripper(256);
  const std::vector<int> links = surface_links(hand);
  const ObjectModel obj = sphere_object(0.05, Vec3::Zero(), 200, 8);
  PhysicsLossConfig cfg;
  CanonicalPose far;
  far.delta = hand.mask;
  far.t = Vec3(1.0, 1.0, 1.0);
  const LabeledPoints surf = hand_surface(far, hand);
  EXPECT_EQ(spf_loss(surf.points, obj, cfg), 0.0);
  EXPECT_EQ(erf_loss(surf.points, obj), 0.0);
  EXPECT_EQ(srf_loss(surf.points, links, &hand.tree, cfg), 0.0);

  std::mt19937_64 rng(13);
  std::normal_distribution<double> n(0.0, 0.03);
  for (int trial = 0; trial < 20; ++trial) {
    CanonicalPose p = far;
    p.t = Vec3(n(rng), n(rng), n(rng));
    for (int s = 0; s < kCanonicalSlots; ++s)
      if (p.delta[static_cast<std::size_t>(s)]) p.theta_c[static_cast<std::size_t>(s)] = 10 * n(rng);
    const LabeledPoints s = hand_surface(p, hand);
    EXPECT_GE(spf_loss(s.points, obj, cfg), 0.0);
    EXPECT_GE(erf_loss(s.points, obj), 0.0);
    EXPECT_GE(srf_loss(s.points, links, &hand.tree, cfg), 0.0);
  }
}

TEST(PhysicsLossConfig, Validation) {
  PhysicsLossConfig cfg;
  EXPECT_NO_THROW(cfg.validate());
  cfg.tau = 0.0;
  EXPECT_THROW(cfg.validate(), ValidationError);
  cfg = PhysicsLossConfig{};
  cfg.eps_guard = -1.0;
  EXPECT_THROW(cfg.validate(), ValidationError);
  cfg = PhysicsLossConfig{};
  cfg.hand_points = 0;
  EXPECT_THROW(cfg.validate(), ValidationError);
}

// ---- total ------------------------------------------------------------------

TEST(TotalLoss, ExamplesAndBookkeeping) {
  const LossReport r = total_loss(1, 2, 3, 4, 5, LossWeights{});
  EXPECT_DOUBLE_EQ(r.total, 15.0);
  EXPECT_EQ(r.recon, 1.0);
  EXPECT_EQ(r.srf, 5.0);
  EXPECT_DOUBLE_EQ(total_loss(1, 2, 3, 4, 5, LossWeights{0, 0, 0}).total, 3.0);
  const LossWeights alpha{0.5, 2.0, 0.25};
  const LossReport q = total_loss(0.1, 0.2, 0.3, 0.4, 0.5, alpha);
  EXPECT_NEAR(q.total, q.recon + q.morph + alpha.spf * q.spf + alpha.erf * q.erf + alpha.srf * q.srf, 1e-12);
}

TEST(TotalLoss, NonFiniteTermIsNamed) {
  const double nan = std::numeric_limits<double>::quiet_NaN();
  try {
    total_loss(1, 2, 3, nan, 5, LossWeights{});
    FAIL() << "expected NumericError";
  } catch (const NumericError& e) {
    EXPECT_NE(std::string(e.what()).find("erf"), std::string::npos);
  }
  LossReport r;
  r.morph = std::numeric_limits<double>::infinity();
  EXPECT_THROW(check_finite_terms(r), NumericError);
}
