#include "morphgrasp/losses.hpp"

#include "morphgrasp/errors.hpp"

#include <cmath>
#include <set>

namespace morphgrasp {

JointWeights joint_weights(std::span<const int> c, const ActiveMask& delta) {
  if (c.size() != static_cast<std::size_t>(kCanonicalSlots)) throw ArityError("joint_weights: expected 24 counts");
  if (delta.none()) throw DomainError("joint_weights: no active joints");
  double log_sum = 0.0;
  for (int i = 0; i < kCanonicalSlots; ++i) {
    if (!delta[static_cast<std::size_t>(i)]) continue;
    if (c[static_cast<std::size_t>(i)] < 0) throw DomainError("joint_weights: negative descendant count");
    log_sum += std::log(static_cast<double>(c[static_cast<std::size_t>(i)]) + 1.0);
  }
  JointWeights out;
  out.G = std::exp(log_sum / static_cast<double>(delta.count()));
  for (int i = 0; i < kCanonicalSlots; ++i) {
    if (delta[static_cast<std::size_t>(i)]) {
      out.w[static_cast<std::size_t>(i)] = std::sqrt((static_cast<double>(c[static_cast<std::size_t>(i)]) + 1.0) / out.G);
    }
  }
  return out;
}

void PhysicsLossConfig::validate() const {
  if (!(tau > 0) || !(d_th > 0) || !(eps_guard > 0)) throw ValidationError("physics loss: tau, d_th and eps must be positive");
  if (hand_points < 1) throw ValidationError("physics loss: hand_points must be positive");
}

double morph_loss(const CanonicalPose& pred, const CanonicalPose& target, const JointWeights& w) {
  if (pred.delta != target.delta) throw EmbodimentError("morph_loss: prediction and target masks differ");
  double loss = (pred.t - target.t).squaredNorm() + (pred.r6 - target.r6).squaredNorm();
  for (int i = 0; i < kCanonicalSlots; ++i) {
    const auto s = static_cast<std::size_t>(i);
    if (!target.delta[s]) continue;
    const double d = pred.theta_c[s] - target.theta_c[s];
    loss += w.w[s] * d * d;
  }
  return loss;
}

double recon_loss(const Eigen::VectorXd& eps, const Eigen::VectorXd& eps_hat, bool exclude_rotation) {
  if (eps.size() != eps_hat.size()) throw ArityError("recon_loss: size mismatch");
  double sum = 0.0;
  int n = 0;
  for (Eigen::Index i = 0; i < eps.size(); ++i) {
    if (exclude_rotation && eps.size() == kPoseChannels && i >= kRotationOffset && i < kAngleOffset) continue;
    const double d = eps(i) - eps_hat(i);
    sum += d * d;
    ++n;
  }
  return n ? sum / n : 0.0;
}

Eigen::RowVectorXd morph_channel_weights(const JointWeights& w, bool exclude_rotation) {
  Eigen::RowVectorXd out = Eigen::RowVectorXd::Ones(kPoseChannels);
  if (exclude_rotation) out.segment<6>(kRotationOffset).setZero();
  for (int s = 0; s < kCanonicalSlots; ++s) out(kAngleOffset + s) = w.w[static_cast<std::size_t>(s)];
  return out;
}

ad::Var morph_loss(const ad::Var& pred, const Eigen::MatrixXd& target, const Eigen::MatrixXd& weights) {
  const ad::Matrix& v = pred.value();
  if (v.rows() != target.rows() || v.cols() != target.cols() || weights.rows() != v.rows() ||
      weights.cols() != v.cols() || v.rows() == 0)
    throw ArityError("morph_loss: shape mismatch");
  const ad::Var sq = ad::mul(ad::square(ad::sub(pred, ad::constant(target))), ad::constant(weights));
  return ad::scale(ad::sum(sq), 1.0 / static_cast<double>(v.rows()));
}

ad::Var recon_loss(const ad::Var& eps_hat, const Eigen::MatrixXd& eps, bool exclude_rotation) {
  const ad::Matrix& v = eps_hat.value();
  if (v.rows() != eps.rows() || v.cols() != eps.cols() || v.rows() == 0) throw ArityError("recon_loss: shape mismatch");
  const bool skip = exclude_rotation && v.cols() == kPoseChannels;
  Eigen::MatrixXd keep = Eigen::MatrixXd::Ones(v.rows(), v.cols());
  if (skip) keep.middleCols(kRotationOffset, 6).setZero();
  const double channels = static_cast<double>(skip ? kPoseChannels - 6 : v.cols());
  const ad::Var sq = ad::mul(ad::square(ad::sub(eps_hat, ad::constant(eps))), ad::constant(keep));
  return ad::scale(ad::sum(sq), 1.0 / (channels * static_cast<double>(v.rows())));
}

double spf_loss(const PointMatrix& points, const ObjectModel& object, const PhysicsLossConfig& cfg, PointMatrix* grad,
                int* members) {
  if (object.points().rows() == 0) throw DomainError("spf_loss: empty object cloud");
  const Eigen::Index n = points.rows();
  std::vector<double> dist(static_cast<std::size_t>(n));
  std::vector<int> nearest(static_cast<std::size_t>(n));
  parallel_for(static_cast<std::size_t>(n), [&](std::size_t i) {
    const auto [k, d] = nearest_point(object.points(), points.row(static_cast<Eigen::Index>(i)).transpose());
    nearest[i] = k;
    dist[i] = d;
  });
  int count = 0;
  double sum = 0.0;
  for (std::size_t i = 0; i < dist.size(); ++i) {
    if (dist[i] < cfg.tau) {
      ++count;
      sum += std::sqrt(dist[i]);
    }
  }
  const double denom = static_cast<double>(count) + cfg.eps_guard;
  if (members) *members = count;
  if (grad) {
    grad->setZero(n, 3);
    for (std::size_t i = 0; i < dist.size(); ++i) {
      const double d = dist[i];
      if (!(d < cfg.tau) || d <= 0.0) continue;
      const auto row = static_cast<Eigen::Index>(i);
      const Vec3 diff = points.row(row).transpose() - object.points().row(nearest[i]).transpose();
      grad->row(row) = (diff / (2.0 * d * std::sqrt(d) * denom)).transpose();
    }
  }
  return sum / denom;
}

double erf_loss(const PointMatrix& points, const ObjectModel& object, PointMatrix* grad) {
  if (points.rows() == 0) return 0.0;
  PointMatrix g;
  const Eigen::VectorXd sdf = signed_distance(object, points, grad ? &g : nullptr);
  const double inv = 1.0 / static_cast<double>(points.rows());
  double sum = 0.0;
  if (grad) grad->setZero(points.rows(), 3);
  for (Eigen::Index i = 0; i < sdf.size(); ++i) {
    if (sdf(i) < 0.0) {
      sum -= sdf(i);
      if (grad) grad->row(i) = -inv * g.row(i);
    }
  }
  return sum * inv;
}

double srf_loss(const PointMatrix& points, std::span<const int> links, const KinematicTree* tree,
                const PhysicsLossConfig& cfg, PointMatrix* grad) {
  const Eigen::Index n = points.rows();
  if (static_cast<Eigen::Index>(links.size()) != n) throw ArityError("srf_loss: one link label per point required");
  if (grad) grad->setZero(n, 3);
  const std::set<int> present(links.begin(), links.end());
  if (present.size() < 2) return 0.0;
  const double inv_links = 1.0 / static_cast<double>(present.size());
  // Row sums are accumulated per i and combined in index order for determinism.
  std::vector<double> row_sum(static_cast<std::size_t>(n), 0.0);
  PointMatrix g = PointMatrix::Zero(n, 3);
  for (Eigen::Index i = 0; i < n; ++i) {
    const int li = links[static_cast<std::size_t>(i)];
    for (Eigen::Index j = i + 1; j < n; ++j) {
      const int lj = links[static_cast<std::size_t>(j)];
      if (li == lj) continue;
      if (cfg.exclude_adjacent && tree && tree->links_adjacent(li, lj)) continue;
      const Vec3 diff = points.row(i).transpose() - points.row(j).transpose();
      const double d = diff.norm();
      if (d >= cfg.d_th) continue;
      row_sum[static_cast<std::size_t>(i)] += cfg.d_th - d;
      if (grad && d > 0.0) {
        const Vec3 u = diff / d;
        g.row(i) -= u.transpose();
        g.row(j) += u.transpose();
      }
    }
  }
  double sum = 0.0;
  for (double v : row_sum) sum += v;
  if (grad) *grad = g * inv_links;
  return sum * inv_links;
}

namespace {

ad::Var scalar_op(double value, PointMatrix grad, const ad::Var& points) {
  return ad::make_op(ad::Matrix::Constant(1, 1, value), {points}, [grad = std::move(grad)](ad::Node& n) {
    n.inputs[0]->accumulate(grad * n.grad(0, 0));
  });
}

}  // namespace

ad::Var spf_loss(const ad::Var& points, const ObjectModel& object, const PhysicsLossConfig& cfg) {
  PointMatrix g;
  const double v = spf_loss(points.value(), object, cfg, &g);
  return scalar_op(v, std::move(g), points);
}

ad::Var erf_loss(const ad::Var& points, const ObjectModel& object) {
  PointMatrix g;
  const double v = erf_loss(points.value(), object, &g);
  return scalar_op(v, std::move(g), points);
}

ad::Var srf_loss(const ad::Var& points, std::span<const int> links, const KinematicTree* tree,
                 const PhysicsLossConfig& cfg) {
  PointMatrix g;
  const double v = srf_loss(points.value(), links, tree, cfg, &g);
  return scalar_op(v, std::move(g), points);
}

void check_finite_terms(const LossReport& r) {
  const std::pair<const char*, double> terms[] = {{"recon", r.recon}, {"morph", r.morph}, {"spf", r.spf},
                                                  {"erf", r.erf},     {"srf", r.srf},     {"total", r.total}};
  for (const auto& [name, value] : terms)
    if (!std::isfinite(value)) throw NumericError(std::string("non-finite loss term '") + name + "'");
}

LossReport total_loss(double recon, double morph, double spf, double erf, double srf, const LossWeights& alpha) {
  LossReport r{recon, morph, spf, erf, srf, 0.0};
  r.total = recon + morph + alpha.spf * spf + alpha.erf * erf + alpha.srf * srf;
  check_finite_terms(r);
  return r;
}

}  // namespace morphgrasp
