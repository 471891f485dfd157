#pragma once

#include "morphgrasp/autograd.hpp"
#include "morphgrasp/canonical.hpp"
#include "morphgrasp/object.hpp"
#include "morphgrasp/urdf.hpp"

#include <array>
#include <span>
#include <string>

namespace morphgrasp {

struct JointWeights {
  std::array<double, kCanonicalSlots> w{};  // 0 where masked
  double G = 1.0;
};

/// w_i = sqrt((c_i + 1) / G), G the geometric mean of c + 1 over active slots.
JointWeights joint_weights(std::span<const int> c, const ActiveMask& delta);

struct PhysicsLossConfig {
  double tau = 0.02;
  double d_th = 0.005;
  double eps_guard = 1e-8;
  int hand_points = 512;
  bool exclude_adjacent = true;

  void validate() const;
};

struct LossWeights {
  double spf = 1.0;
  double erf = 1.0;
  double srf = 1.0;
};

/// ||t - t'||^2 + ||r6 - r6'||^2 + sum_i delta_i w_i (theta_i - theta_i')^2.
double morph_loss(const CanonicalPose& pred, const CanonicalPose& target, const JointWeights& w);
/// Mean squared error over channels; the rotation channels are skipped when `exclude_rotation`.
double recon_loss(const Eigen::VectorXd& eps, const Eigen::VectorXd& eps_hat, bool exclude_rotation = false);

/// 1 x 33 channel weights of morph_loss: ones on t and r6 (zeros on r6 when
/// `exclude_rotation`), w_i on the angle channels.
Eigen::RowVectorXd morph_channel_weights(const JointWeights& w, bool exclude_rotation = false);

// Tape versions over b x 33 pose rows, averaged over rows.
/// `weights` is b x 33, typically rows of morph_channel_weights.
ad::Var morph_loss(const ad::Var& pred, const Eigen::MatrixXd& target, const Eigen::MatrixXd& weights);
ad::Var recon_loss(const ad::Var& eps_hat, const Eigen::MatrixXd& eps, bool exclude_rotation = false);

// Physics terms. Each returns the value and, when `grad` is non-null, writes
// d(loss)/d(points) with the same shape as `points`.

/// Surface pulling: mean sqrt(d) over points closer than tau to the object cloud.
double spf_loss(const PointMatrix& points, const ObjectModel& object, const PhysicsLossConfig& cfg,
                PointMatrix* grad = nullptr, int* members = nullptr);
/// External penetration: mean of max(0, -SDF) over all points.
double erf_loss(const PointMatrix& points, const ObjectModel& object, PointMatrix* grad = nullptr);
/// Self penetration over unordered cross-link pairs, divided by the number of links present.
/// Parent/child link pairs are skipped when cfg.exclude_adjacent and `tree` is given.
double srf_loss(const PointMatrix& points, std::span<const int> links, const KinematicTree* tree,
                const PhysicsLossConfig& cfg, PointMatrix* grad = nullptr);

// Tape versions over an n x 3 point Var.
ad::Var spf_loss(const ad::Var& points, const ObjectModel& object, const PhysicsLossConfig& cfg);
ad::Var erf_loss(const ad::Var& points, const ObjectModel& object);
ad::Var srf_loss(const ad::Var& points, std::span<const int> links, const KinematicTree* tree,
                 const PhysicsLossConfig& cfg);

struct LossReport {
  double recon = 0, morph = 0, spf = 0, erf = 0, srf = 0, total = 0;
};

/// total = recon + morph + a_spf spf + a_erf erf + a_srf srf. Throws NumericError naming a non-finite term.
LossReport total_loss(double recon, double morph, double spf, double erf, double srf, const LossWeights& alpha);
void check_finite_terms(const LossReport& report);

}  // namespace morphgrasp
