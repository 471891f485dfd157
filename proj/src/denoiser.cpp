#include "morphgrasp/denoiser.hpp"

#include "morphgrasp/errors.hpp"

#include <cmath>

namespace morphgrasp {

Eigen::RowVectorXd sinusoidal_features(int t, int dim) {
  const int half = dim / 2;
  Eigen::RowVectorXd f = Eigen::RowVectorXd::Zero(dim);
  for (int k = 0; k < half; ++k) {
    const double freq = std::exp(-std::log(10000.0) * static_cast<double>(k) / static_cast<double>(half));
    f(k) = std::sin(static_cast<double>(t) * freq);
    f(half + k) = std::cos(static_cast<double>(t) * freq);
  }
  return f;
}

Eigen::MatrixXd mask_rows(std::span<const ActiveMask> masks) {
  Eigen::MatrixXd m(static_cast<Eigen::Index>(masks.size()), kCanonicalSlots);
  for (std::size_t r = 0; r < masks.size(); ++r)
    for (int s = 0; s < kCanonicalSlots; ++s) m(static_cast<Eigen::Index>(r), s) = masks[r][static_cast<std::size_t>(s)] ? 1.0 : 0.0;
  return m;
}

Denoiser::Denoiser(const DenoiserConfig& config, ParamStore& params, std::mt19937_64& rng, const std::string& prefix)
    : config_(config) {
  const int d = config.dim;
  if (d <= 0 || d % 2 != 0) throw ValidationError("denoiser: dim must be positive and even");
  if (config.cross_heads <= 0 || d % config.cross_heads != 0) throw ValidationError("denoiser: dim not divisible by heads");
  if (config.blocks < 1 || config.timesteps < 1) throw ValidationError("denoiser: bad block or timestep count");
  pose_embed_ = params.add_linear(prefix + ".pose_embed", kPoseChannels, d / 2, rng);
  mask_embed_ = params.add_linear(prefix + ".mask_embed", kCanonicalSlots, d / 2, rng);
  time1_ = params.add_linear(prefix + ".time1", d, d, rng);
  time2_ = params.add_linear(prefix + ".time2", d, d, rng);
  for (int b = 0; b < config.blocks; ++b) {
    const std::string p = prefix + ".block" + std::to_string(b);
    Block blk;
    blk.conv1 = params.add_linear(p + ".conv1", d, d * config.ff_mult, rng);
    blk.conv2 = params.add_linear(p + ".conv2", d * config.ff_mult, d, rng);
    blk.temb = params.add_linear(p + ".temb", d, d, rng);
    blk.wq_m = params.add(p + ".morph.wq", xavier_uniform(d, d, rng));
    blk.wk_m = params.add(p + ".morph.wk", xavier_uniform(d, d, rng));
    blk.wv_m = params.add(p + ".morph.wv", xavier_uniform(d, d, rng));
    blk.wq_p = params.add(p + ".point.wq", xavier_uniform(d, d, rng));
    blk.wk_p = params.add(p + ".point.wk", xavier_uniform(d, d, rng));
    blk.wv_p = params.add(p + ".point.wv", xavier_uniform(d, d, rng));
    blk.ff1 = params.add_linear(p + ".ff1", d, d * config.ff_mult, rng);
    blk.ff2 = params.add_linear(p + ".ff2", d * config.ff_mult, d, rng);
    blocks_.push_back(std::move(blk));
  }
  head_ = params.add_linear(prefix + ".head", d, kPoseChannels, rng);
}

ad::Var Denoiser::embed_pose(const ad::Var& x, const Eigen::MatrixXd& masks) const {
  if (x.cols() != kPoseChannels || masks.cols() != kCanonicalSlots || masks.rows() != x.rows()) {
    throw ArityError("embed_pose: expected b x 33 poses and b x 24 masks");
  }
  const std::vector<ad::Var> parts{pose_embed_.rowwise(x), mask_embed_.rowwise(ad::constant(masks))};
  return ad::concat_cols(parts);
}

ad::Var Denoiser::timestep_embedding(std::span<const int> t) const {
  ad::Matrix f(static_cast<Eigen::Index>(t.size()), config_.dim);
  for (std::size_t r = 0; r < t.size(); ++r) {
    if (t[r] < 0 || t[r] >= config_.timesteps) {
      throw RangeError("timestep " + std::to_string(t[r]) + " outside [0, " + std::to_string(config_.timesteps) + ")");
    }
    f.row(static_cast<Eigen::Index>(r)) = sinusoidal_features(t[r], config_.dim);
  }
  return time2_.rowwise(ad::silu(time1_.rowwise(ad::constant(f))));
}

ad::Var Denoiser::cross_attention(const ad::Var& query, const ad::Var& wq, const ad::Var& wk, const ad::Var& wv,
                                  std::span<const ad::Var> tokens, std::span<const int> index,
                                  std::vector<Eigen::VectorXd>* weights) const {
  const int heads = config_.cross_heads;
  const int dh = config_.dim / heads;
  const double scale = 1.0 / std::sqrt(static_cast<double>(dh));
  const ad::Var q = ad::matmul_rowwise(query, wq);
  std::vector<ad::Var> keys, values;
  for (const auto& tok : tokens) {
    keys.push_back(ad::matmul(tok, wk));
    values.push_back(ad::matmul(tok, wv));
  }
  if (heads == 1) return ad::grouped_attention(q, keys, values, index, scale, weights);
  std::vector<ad::Var> outs;
  for (int h = 0; h < heads; ++h) {
    std::vector<ad::Var> kh, vh;
    for (std::size_t g = 0; g < keys.size(); ++g) {
      kh.push_back(ad::slice_cols(keys[g], h * dh, dh));
      vh.push_back(ad::slice_cols(values[g], h * dh, dh));
    }
    std::vector<Eigen::VectorXd> w;
    outs.push_back(ad::grouped_attention(ad::slice_cols(q, h * dh, dh), kh, vh, index, scale, &w));
    if (weights && h == 0) *weights = std::move(w);
  }
  return ad::concat_cols(outs);
}

ad::Var Denoiser::block(const ad::Var& h, const Conditioning& cond, const ad::Var& temb, int index,
                        DenoiserTrace* trace) const {
  if (index < 0 || index >= config_.blocks) throw RangeError("denoiser block " + std::to_string(index));
  const Block& B = blocks_[static_cast<std::size_t>(index)];
  if (static_cast<Eigen::Index>(cond.morph_index.size()) != h.rows() ||
      static_cast<Eigen::Index>(cond.point_index.size()) != h.rows()) {
    throw ArityError("denoise_block: conditioning index length differs from batch");
  }
  ad::Var x = ad::add(h, ad::add(B.conv2.rowwise(ad::silu(B.conv1.rowwise(ad::rms_norm_rows(h)))),
                                 B.temb.rowwise(ad::silu(temb))));
  std::vector<Eigen::VectorXd> wm, wp;
  x = ad::add(x, cross_attention(ad::rms_norm_rows(x), B.wq_m, B.wk_m, B.wv_m, cond.morph, cond.morph_index, &wm));
  x = ad::add(x, cross_attention(ad::rms_norm_rows(x), B.wq_p, B.wk_p, B.wv_p, cond.points, cond.point_index, &wp));
  x = ad::add(x, B.ff2.rowwise(ad::silu(B.ff1.rowwise(ad::rms_norm_rows(x)))));
  if (trace) {
    trace->morph_weights.push_back(std::move(wm));
    trace->point_weights.push_back(std::move(wp));
  }
  if (!x.value().allFinite()) throw NumericError("denoiser: non-finite value in block " + std::to_string(index));
  return x;
}

ad::Var Denoiser::predict(const ad::Var& x_t, const Eigen::MatrixXd& masks, const Conditioning& cond,
                          std::span<const int> t, DenoiserTrace* trace) const {
  if (static_cast<Eigen::Index>(t.size()) != x_t.rows()) throw ArityError("predict_noise: timestep count differs from batch");
  const ad::Var temb = timestep_embedding(t);
  ad::Var h = embed_pose(x_t, masks);
  for (int b = 0; b < config_.blocks; ++b) h = block(h, cond, temb, b, trace);
  ad::Var out = head_.rowwise(ad::rms_norm_rows(h));
  if (!out.value().allFinite()) throw NumericError("denoiser: non-finite noise prediction");
  return out;
}

}  // namespace morphgrasp
