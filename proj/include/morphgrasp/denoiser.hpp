#pragma once

#include "morphgrasp/autograd.hpp"
#include "morphgrasp/canonical.hpp"
#include "morphgrasp/params.hpp"

#include <random>
#include <span>
#include <string>
#include <vector>

namespace morphgrasp {

struct DenoiserConfig {
  int dim = 256;
  int blocks = 8;
  int cross_heads = 1;
  int ff_mult = 2;
  int timesteps = 100;  // valid t range is [0, timesteps)
};

/// Conditioning for a batch. Row r attends over morph[morph_index[r]] and
/// points[point_index[r]]; each entry of `morph` is 24 x D, of `points` N_p x D.
struct Conditioning {
  std::vector<ad::Var> morph;
  std::vector<int> morph_index;
  std::vector<ad::Var> points;
  std::vector<int> point_index;
};

/// Attention weights recorded per block: [block] -> one vector per row.
struct DenoiserTrace {
  std::vector<std::vector<Eigen::VectorXd>> morph_weights;
  std::vector<std::vector<Eigen::VectorXd>> point_weights;
};

/// Standard sinusoidal features: [sin(t f_k) | cos(t f_k)], f_k = 10000^(-k/half).
Eigen::RowVectorXd sinusoidal_features(int t, int dim);

class Denoiser {
 public:
  Denoiser(const DenoiserConfig& config, ParamStore& params, std::mt19937_64& rng,
           const std::string& prefix = "denoiser");

  const DenoiserConfig& config() const { return config_; }

  /// b x 33 poses and b x 24 masks to b x D hand tokens.
  ad::Var embed_pose(const ad::Var& x, const Eigen::MatrixXd& masks) const;
  /// b x D timestep embeddings.
  ad::Var timestep_embedding(std::span<const int> t) const;
  ad::Var block(const ad::Var& h, const Conditioning& cond, const ad::Var& temb, int index,
                DenoiserTrace* trace = nullptr) const;
  /// b x 33 noise prediction.
  ad::Var predict(const ad::Var& x_t, const Eigen::MatrixXd& masks, const Conditioning& cond,
                  std::span<const int> t, DenoiserTrace* trace = nullptr) const;

  // Value projection of the point cross-attention in block `index` (for ablation tests).
  const ad::Var& point_value_weight(int index) const { return blocks_[static_cast<std::size_t>(index)].wv_p; }

 private:
  struct Block {
    ad::Linear conv1, conv2, temb;
    ad::Var wq_m, wk_m, wv_m;
    ad::Var wq_p, wk_p, wv_p;
    ad::Linear ff1, ff2;
  };

  ad::Var cross_attention(const ad::Var& query, const ad::Var& wq, const ad::Var& wk, const ad::Var& wv,
                          std::span<const ad::Var> tokens, std::span<const int> index,
                          std::vector<Eigen::VectorXd>* weights) const;

  DenoiserConfig config_;
  ad::Linear pose_embed_, mask_embed_, time1_, time2_, head_;
  std::vector<Block> blocks_;
};

/// Masks as a b x 24 matrix of 0/1.
Eigen::MatrixXd mask_rows(std::span<const ActiveMask> masks);

}  // namespace morphgrasp
