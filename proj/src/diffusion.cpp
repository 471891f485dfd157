#include "morphgrasp/diffusion.hpp"

#include "morphgrasp/errors.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>
#include <random>

namespace morphgrasp {

DiffusionSchedule::DiffusionSchedule(Eigen::VectorXd beta, std::vector<int> model_t)
    : beta_(std::move(beta)), model_t_(std::move(model_t)) {
  if (beta_.size() < 1) throw ValidationError("schedule: need at least one step");
  for (Eigen::Index i = 0; i < beta_.size(); ++i) {
    if (!(beta_(i) > 0.0 && beta_(i) < 1.0)) throw ValidationError("schedule: beta must lie in (0, 1)");
  }
  alpha_ = (1.0 - beta_.array()).matrix();
  alpha_bar_.resize(beta_.size());
  double prod = 1.0;
  for (Eigen::Index i = 0; i < beta_.size(); ++i) {
    prod *= alpha_(i);
    alpha_bar_(i) = prod;
  }
}

int DiffusionSchedule::check(int t) const {
  if (t < 0 || t >= T()) throw RangeError("timestep " + std::to_string(t) + " outside [0, " + std::to_string(T()) + ")");
  return t;
}

DiffusionSchedule DiffusionSchedule::linear(int T, double beta_start, double beta_end) {
  if (T < 1) throw ValidationError("schedule: T must be positive");
  Eigen::VectorXd b(T);
  for (int i = 0; i < T; ++i) b(i) = T == 1 ? beta_start : beta_start + (beta_end - beta_start) * i / (T - 1);
  std::vector<int> ts(static_cast<std::size_t>(T));
  std::iota(ts.begin(), ts.end(), 0);
  return DiffusionSchedule(std::move(b), std::move(ts));
}

DiffusionSchedule DiffusionSchedule::scaled_linear(int T) {
  const double scale = 1000.0 / static_cast<double>(T);
  return linear(T, 1e-4 * scale, std::min(0.02 * scale, 0.999));
}

DiffusionSchedule DiffusionSchedule::from_config(const DiffusionConfig& config) {
  if (config.beta_start.has_value() != config.beta_end.has_value()) {
    throw ValidationError("schedule: set both beta_start and beta_end or neither");
  }
  if (config.beta_start) return linear(config.timesteps, *config.beta_start, *config.beta_end);
  return scaled_linear(config.timesteps);
}

DiffusionSchedule DiffusionSchedule::respaced(int steps) const {
  if (steps < 1 || steps > T()) throw RangeError("respaced: steps must lie in [1, T]");
  std::vector<int> use(static_cast<std::size_t>(steps));
  for (int i = 0; i < steps; ++i) {
    use[static_cast<std::size_t>(i)] =
        steps == 1 ? T() - 1 : static_cast<int>(std::lround(static_cast<double>(i) * (T() - 1) / (steps - 1)));
  }
  Eigen::VectorXd b(steps);
  double prev = 1.0;
  std::vector<int> model_t;
  for (int i = 0; i < steps; ++i) {
    const int src = use[static_cast<std::size_t>(i)];
    b(i) = 1.0 - alpha_bar_(src) / prev;
    prev = alpha_bar_(src);
    model_t.push_back(model_t_[static_cast<std::size_t>(src)]);
  }
  return DiffusionSchedule(std::move(b), std::move(model_t));
}

Eigen::VectorXd forward_noise(const Eigen::VectorXd& x0, int t, const Eigen::VectorXd& eps,
                              const DiffusionSchedule& schedule) {
  if (x0.size() != eps.size()) throw ArityError("forward_noise: size mismatch");
  if (!eps.allFinite()) throw NumericError("forward_noise: non-finite noise");
  const double ab = schedule.alpha_bar(t);
  return std::sqrt(ab) * x0 + std::sqrt(1.0 - ab) * eps;
}

Eigen::VectorXd reconstruct_x0(const Eigen::VectorXd& x_t, int t, const Eigen::VectorXd& eps,
                               const DiffusionSchedule& schedule) {
  const double ab = schedule.alpha_bar(t);
  return (x_t - std::sqrt(1.0 - ab) * eps) / std::sqrt(ab);
}

Eigen::VectorXd reverse_step(const Eigen::VectorXd& x_t, const Eigen::VectorXd& eps_hat, int t,
                             const DiffusionSchedule& schedule, const Eigen::VectorXd& z) {
  if (x_t.size() != eps_hat.size() || x_t.size() != z.size()) throw ArityError("reverse_step: size mismatch");
  const double beta = schedule.beta(t);
  const double ab = schedule.alpha_bar(t);
  Eigen::VectorXd mean = (x_t - (beta / std::sqrt(1.0 - ab)) * eps_hat) / std::sqrt(schedule.alpha(t));
  if (t == 0) return mean;
  return mean + schedule.sigma(t) * z;
}

CanonicalScene canonicalize_frame(const CanonicalPose& pose, const ObjectModel& object) {
  const Mat3 r = rot6_to_matrix(pose.r6);
  CanonicalScene scene{pose, object.transformed(r.transpose(), Vec3::Zero()), r};
  scene.pose.t = r.transpose() * pose.t;
  scene.pose.r6 = identity_rot6();
  return scene;
}

std::vector<CanonicalPose> sample(const GraspModel& model, const Eigen::MatrixXd& morph, const ActiveMask& delta,
                                  const Eigen::MatrixXd& points, const DiffusionSchedule& schedule,
                                  const SampleOptions& options) {
  if (options.n < 1) throw ArityError("sample: n must be positive");
  if (morph.rows() != kCanonicalSlots || morph.cols() != model.config().denoiser.dim) {
    throw ArityError("sample: morph representation must be 24 x D");
  }
  if (points.cols() != model.config().denoiser.dim) throw ArityError("sample: point feature width differs from D");
  ad::NoGradGuard no_grad;
  const int n = options.n;
  std::mt19937_64 rng(options.seed);
  std::normal_distribution<double> normal(0.0, 1.0);
  auto gaussian = [&]() {
    Eigen::MatrixXd m(n, kPoseChannels);
    for (int r = 0; r < n; ++r)
      for (int c = 0; c < kPoseChannels; ++c) m(r, c) = normal(rng);
    return m;
  };
  const Vector6 ident = identity_rot6();
  auto freeze = [&](Eigen::MatrixXd& x) {
    if (!options.canonicalize) return;
    for (int r = 0; r < n; ++r) x.row(r).segment<6>(kRotationOffset) = ident.transpose();
  };

  Conditioning cond;
  cond.morph.push_back(ad::constant(morph));
  cond.points.push_back(ad::constant(points));
  cond.morph_index.assign(static_cast<std::size_t>(n), 0);
  cond.point_index.assign(static_cast<std::size_t>(n), 0);
  const std::vector<ActiveMask> masks(static_cast<std::size_t>(n), delta);
  const Eigen::MatrixXd mask_matrix = mask_rows(masks);

  Eigen::MatrixXd x = gaussian();
  freeze(x);
  for (int t = schedule.T() - 1; t >= 0; --t) {
    const std::vector<int> ts(static_cast<std::size_t>(n), schedule.model_timestep(t));
    const Eigen::MatrixXd eps_hat = model.denoiser().predict(ad::constant(x), mask_matrix, cond, ts).value();
    const Eigen::MatrixXd z = t > 0 ? gaussian() : Eigen::MatrixXd::Zero(n, kPoseChannels);
    for (int r = 0; r < n; ++r) {
      x.row(r) = reverse_step(x.row(r).transpose(), eps_hat.row(r).transpose(), t, schedule, z.row(r).transpose())
                     .transpose();
    }
    freeze(x);
    if (!x.allFinite()) throw NumericError("sample: non-finite state at step " + std::to_string(t));
  }

  std::vector<CanonicalPose> out;
  out.reserve(static_cast<std::size_t>(n));
  for (int r = 0; r < n; ++r) {
    PoseVector v = x.row(r).transpose();
    for (int s = 0; s < kCanonicalSlots; ++s)
      if (!delta[static_cast<std::size_t>(s)]) v(kAngleOffset + s) = 0.0;
    out.push_back(CanonicalPose::from_vector(v, delta));
  }
  return out;
}

PointMatrix resample_cloud(const PointMatrix& points, int n, std::uint64_t seed) {
  const int have = static_cast<int>(points.rows());
  if (have < 1 || n < 1) throw ArityError("resample_cloud: empty input or target");
  if (have == n) return points;
  std::mt19937_64 rng(seed);
  std::vector<int> idx;
  if (have > n) {
    std::vector<int> all(static_cast<std::size_t>(have));
    std::iota(all.begin(), all.end(), 0);
    std::shuffle(all.begin(), all.end(), rng);
    idx.assign(all.begin(), all.begin() + n);
    std::sort(idx.begin(), idx.end());
  } else {
    idx.resize(static_cast<std::size_t>(have));
    std::iota(idx.begin(), idx.end(), 0);
    std::uniform_int_distribution<int> pick(0, have - 1);
    while (static_cast<int>(idx.size()) < n) idx.push_back(pick(rng));
  }
  PointMatrix out(n, 3);
  for (int i = 0; i < n; ++i) out.row(i) = points.row(idx[static_cast<std::size_t>(i)]);
  return out;
}

}  // namespace morphgrasp
