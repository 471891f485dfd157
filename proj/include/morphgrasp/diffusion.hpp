#pragma once

#include "morphgrasp/canonical.hpp"
#include "morphgrasp/config.hpp"
#include "morphgrasp/model.hpp"
#include "morphgrasp/object.hpp"
#include "morphgrasp/point_encoder.hpp"

#include <cmath>
#include <cstdint>
#include <vector>

namespace morphgrasp {

class DiffusionSchedule {
 public:
  /// Linear betas from beta_start to beta_end over T steps.
  static DiffusionSchedule linear(int T, double beta_start, double beta_end);
  /// The 1e-4..0.02 range defined for 1000 steps, scaled by 1000 / T.
  static DiffusionSchedule scaled_linear(int T);
  static DiffusionSchedule from_config(const DiffusionConfig& config);

  /// Evenly strided subset of `steps` timesteps with recomputed betas.
  DiffusionSchedule respaced(int steps) const;

  int T() const { return static_cast<int>(beta_.size()); }
  double beta(int t) const { return beta_(check(t)); }
  double alpha(int t) const { return alpha_(check(t)); }
  double alpha_bar(int t) const { return alpha_bar_(check(t)); }
  /// Reverse-process standard deviation, fixed at sqrt(beta_t).
  double sigma(int t) const { return std::sqrt(beta(t)); }
  /// Timestep index presented to the network (differs from t after respacing).
  int model_timestep(int t) const { return model_t_[static_cast<std::size_t>(check(t))]; }

  const Eigen::VectorXd& betas() const { return beta_; }
  const Eigen::VectorXd& alpha_bars() const { return alpha_bar_; }

 private:
  DiffusionSchedule(Eigen::VectorXd beta, std::vector<int> model_t);
  int check(int t) const;

  Eigen::VectorXd beta_, alpha_, alpha_bar_;
  std::vector<int> model_t_;
};

/// x_t = sqrt(abar_t) x0 + sqrt(1 - abar_t) eps.
Eigen::VectorXd forward_noise(const Eigen::VectorXd& x0, int t, const Eigen::VectorXd& eps,
                              const DiffusionSchedule& schedule);
/// x0 = (x_t - sqrt(1 - abar_t) eps) / sqrt(abar_t).
Eigen::VectorXd reconstruct_x0(const Eigen::VectorXd& x_t, int t, const Eigen::VectorXd& eps,
                               const DiffusionSchedule& schedule);
/// x_{t-1} = (x_t - beta_t / sqrt(1 - abar_t) eps_hat) / sqrt(alpha_t) + sigma_t z.
Eigen::VectorXd reverse_step(const Eigen::VectorXd& x_t, const Eigen::VectorXd& eps_hat, int t,
                             const DiffusionSchedule& schedule, const Eigen::VectorXd& z);

struct CanonicalScene {
  CanonicalPose pose;  // r6 is the identity encoding
  ObjectModel object;  // expressed in the hand-aligned frame
  Mat3 rotation;       // the original hand rotation R
};

/// Rotates the object by R^T and re-expresses t as R^T t.
CanonicalScene canonicalize_frame(const CanonicalPose& pose, const ObjectModel& object);

struct SampleOptions {
  int n = 64;
  std::uint64_t seed = 0;
  bool canonicalize = true;  // freeze rotation channels at identity
};

/// Reverse diffusion from Gaussian noise. `morph` is the 24 x D representation,
/// `points` the N_p x D object feature.
std::vector<CanonicalPose> sample(const GraspModel& model, const Eigen::MatrixXd& morph, const ActiveMask& delta,
                                  const Eigen::MatrixXd& points, const DiffusionSchedule& schedule,
                                  const SampleOptions& options);

/// Uniformly resamples (with a fixed seed) or keeps a cloud so it has exactly `n` points.
PointMatrix resample_cloud(const PointMatrix& points, int n, std::uint64_t seed);

}  // namespace morphgrasp
