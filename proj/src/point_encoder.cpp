#include "morphgrasp/point_encoder.hpp"

#include "morphgrasp/errors.hpp"

#include <cmath>

namespace morphgrasp {

PointGrouping group_cloud(const PointMatrix& points, const PointEncoderConfig& config) {
  const int n = static_cast<int>(points.rows());
  if (n < config.groups) {
    throw ArityError("encode_points: cloud has " + std::to_string(n) + " points, need at least " +
                     std::to_string(config.groups));
  }
  PointGrouping g;
  g.centers = farthest_point_sampling(points, config.groups, centroid_start_index(points));
  g.members = group_points(points, g.centers, std::min(config.neighbors, n));
  const int m = static_cast<int>(g.members.front().size());
  const Vec3 centroid = points.colwise().mean().transpose();
  g.center_points.resize(config.groups, 3);
  g.center_offsets.resize(config.groups, 3);
  g.relative.resize(static_cast<Eigen::Index>(config.groups) * m, 3);
  for (int k = 0; k < config.groups; ++k) {
    const Vec3 c = points.row(g.centers[static_cast<std::size_t>(k)]).transpose();
    g.center_points.row(k) = c.transpose();
    g.center_offsets.row(k) = (c - centroid).transpose();
    for (int i = 0; i < m; ++i) {
      const int idx = g.members[static_cast<std::size_t>(k)][static_cast<std::size_t>(i)];
      g.relative.row(static_cast<Eigen::Index>(k) * m + i) = points.row(idx) - c.transpose();
    }
  }
  return g;
}

PointEncoder::PointEncoder(const PointEncoderConfig& config, ParamStore& params, std::mt19937_64& rng,
                           const std::string& prefix)
    : config_(config) {
  if (config.dim <= 0 || config.groups < 1 || config.neighbors < 1) throw ValidationError("point encoder: bad dims");
  const int d = config.dim;
  mlp1_ = params.add_linear(prefix + ".mlp1", 3, d, rng);
  mlp2_ = params.add_linear(prefix + ".mlp2", d, d, rng);
  pos_ = params.add_linear(prefix + ".pos", 3, d, rng);
  wq_ = params.add(prefix + ".wq", xavier_uniform(d, d, rng));
  wk_ = params.add(prefix + ".wk", xavier_uniform(d, d, rng));
  wv_ = params.add(prefix + ".wv", xavier_uniform(d, d, rng));
  ff1_ = params.add_linear(prefix + ".ff1", d, 2 * d, rng);
  ff2_ = params.add_linear(prefix + ".ff2", 2 * d, d, rng);
}

ad::Var PointEncoder::encode(const PointGrouping& g) const {
  const auto groups = static_cast<ad::Index>(g.centers.size());
  if (groups == 0) throw ArityError("encode_points: empty grouping");
  const ad::Index m = g.relative.rows() / groups;
  const ad::Var per_point = mlp2_(ad::silu(mlp1_(ad::constant(g.relative))));
  ad::Var tokens = ad::add(ad::max_pool_groups(per_point, m), pos_(ad::constant(g.center_offsets)));
  const double inv = 1.0 / std::sqrt(static_cast<double>(config_.dim));
  const ad::Var scores = ad::scale(ad::matmul(ad::matmul(tokens, wq_), ad::transpose(ad::matmul(tokens, wk_))), inv);
  tokens = ad::add(tokens, ad::matmul(ad::softmax_rows(scores), ad::matmul(tokens, wv_)));
  tokens = ad::add(tokens, ff2_(ad::silu(ff1_(tokens))));
  if (!tokens.value().allFinite()) throw NumericError("point encoder: non-finite features");
  return tokens;
}

PointCloudFeature PointEncoder::encode_points(const ObjectModel& object) const {
  const PointGrouping g = group_cloud(object.points(), config_);
  ad::NoGradGuard no_grad;
  return {encode(g).value(), g.center_points};
}

}  // namespace morphgrasp
