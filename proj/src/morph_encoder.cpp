#include "morphgrasp/morph_encoder.hpp"

#include "morphgrasp/errors.hpp"

#include <cmath>
#include <deque>
#include <limits>

namespace morphgrasp {

JointMorphologyMatrix extract_joint_morphology(const KinematicTree& tree, const CanonicalMapping& mapping) {
  if (mapping.source_count() != tree.dof_count()) {
    throw MappingError("mapping '" + mapping.embodiment + "' covers " + std::to_string(mapping.source_count()) +
                       " joints, tree has " + std::to_string(tree.dof_count()));
  }
  JointMorphologyMatrix out;
  for (int d = 0; d < tree.dof_count(); ++d) {
    const int j = tree.joint_of_dof(d);
    const JointSpec& joint = tree.joints()[static_cast<std::size_t>(j)];
    const LinkSpec& child = tree.links()[static_cast<std::size_t>(tree.child_link_index(j))];
    if (!child.has_bounds) throw FeatureError("joint '" + joint.name + "': child link '" + child.name + "' has no bounds");
    auto row = out.values.row(mapping.slot_of[static_cast<std::size_t>(d)]);
    row.segment<3>(0) = child.bbox_extents.transpose();
    row(3) = joint.limit_lower;
    row(4) = joint.limit_upper;
    row.segment<3>(5) = joint.origin.xyz.transpose();
    row.segment<3>(8) = joint.axis.transpose();
  }
  return out;
}

GraphStructure build_graph_structure(const std::vector<int>& parents) {
  const int n = static_cast<int>(parents.size());
  GraphStructure g;
  g.adjacency = Eigen::MatrixXi::Zero(n, n);
  g.parent = Eigen::MatrixXi::Zero(n, n);
  for (int i = 0; i < n; ++i) {
    const int p = parents[static_cast<std::size_t>(i)];
    if (p < 0) continue;
    g.parent(i, p) = 1;
    g.adjacency(i, p) = g.adjacency(p, i) = 1;
  }
  g.child = g.parent.transpose();
  g.spd = Eigen::MatrixXi::Constant(n, n, GraphStructure::kUnreachable);
  for (int s = 0; s < n; ++s) {
    std::deque<int> queue{s};
    g.spd(s, s) = 0;
    while (!queue.empty()) {
      const int u = queue.front();
      queue.pop_front();
      for (int v = 0; v < n; ++v) {
        if (g.adjacency(u, v) && g.spd(s, v) == GraphStructure::kUnreachable) {
          g.spd(s, v) = g.spd(s, u) + 1;
          queue.push_back(v);
        }
      }
    }
  }
  return g;
}

GraphStructure build_graph_structure(const CanonicalLayout& layout) {
  std::vector<int> parents(kCanonicalSlots);
  for (int s = 0; s < kCanonicalSlots; ++s) parents[static_cast<std::size_t>(s)] = layout.slot_parent(s);
  return build_graph_structure(parents);
}

MorphEncoder::MorphEncoder(const MorphEncoderConfig& config, ParamStore& params, std::mt19937_64& rng,
                           const std::string& prefix)
    : config_(config) {
  if (config.dim <= 0 || config.heads <= 0 || config.dim % config.heads != 0) {
    throw ValidationError("morph encoder: dim " + std::to_string(config.dim) + " not divisible by heads " +
                          std::to_string(config.heads));
  }
  if (config.layers < 1 || config.max_hops < 0) throw ValidationError("morph encoder: bad layer or hop count");
  const int d = config.dim;
  token_projection_ = params.add_linear(prefix + ".token", kMorphFeatures, d, rng);
  std::normal_distribution<double> small(0.0, 0.02);
  auto init_small = [&](int r, int c) {
    ad::Matrix m(r, c);
    for (Eigen::Index j = 0; j < c; ++j)
      for (Eigen::Index i = 0; i < r; ++i) m(i, j) = small(rng);
    return m;
  };
  spd_table_ = params.add(prefix + ".spd_bias", init_small(config.heads, config.max_hops + 2));
  parent_bias_ = params.add(prefix + ".parent_bias", init_small(config.heads, 1));
  child_bias_ = params.add(prefix + ".child_bias", init_small(config.heads, 1));
  mask_table_ = params.add(prefix + ".mask_bias", init_small(config.heads, 4));
  for (int l = 0; l < config.layers; ++l) {
    const std::string p = prefix + ".layer" + std::to_string(l);
    Layer layer;
    layer.wq = params.add(p + ".wq", xavier_uniform(d, d, rng));
    layer.wk = params.add(p + ".wk", xavier_uniform(d, d, rng));
    layer.wv = params.add(p + ".wv", xavier_uniform(d, d, rng));
    layer.ff1 = params.add_linear(p + ".ff1", d, d * config.ff_mult, rng);
    layer.ff2 = params.add_linear(p + ".ff2", d * config.ff_mult, d, rng);
    layers_.push_back(std::move(layer));
  }
}

ad::Var MorphEncoder::graph_bias(const GraphStructure& s, const ActiveMask& delta, int head) const {
  const int n = static_cast<int>(s.spd.rows());
  const int heads = config_.heads;
  Eigen::MatrixXi spd_index(n, n), mask_index(n, n);
  for (int i = 0; i < n; ++i) {
    for (int j = 0; j < n; ++j) {
      const int hop = s.spd(i, j);
      const int bucket = hop == GraphStructure::kUnreachable ? config_.max_hops + 1 : std::min(hop, config_.max_hops);
      spd_index(i, j) = head + heads * bucket;
      const int pair = 2 * static_cast<int>(delta[static_cast<std::size_t>(i)]) + static_cast<int>(delta[static_cast<std::size_t>(j)]);
      mask_index(i, j) = head + heads * pair;
    }
  }
  ad::Var b = ad::add(ad::gather(spd_table_, spd_index), ad::gather(mask_table_, mask_index));
  b = ad::add(b, ad::scalar_times(ad::slice_rows(parent_bias_, head, 1), s.parent.cast<double>()));
  b = ad::add(b, ad::scalar_times(ad::slice_rows(child_bias_, head, 1), s.child.cast<double>()));
  return b;
}

std::vector<ad::Var> MorphEncoder::attention_scores(const ad::Var& tokens, const GraphStructure& structure,
                                                    const ActiveMask& delta, int layer) const {
  if (layer < 0 || layer >= config_.layers) throw RangeError("morph encoder: layer " + std::to_string(layer));
  if (tokens.rows() != kCanonicalSlots || tokens.cols() != config_.dim || structure.spd.rows() != kCanonicalSlots) {
    throw ArityError("attention_scores: expected 24x" + std::to_string(config_.dim) + " tokens");
  }
  const Layer& L = layers_[static_cast<std::size_t>(layer)];
  const int dh = config_.dim / config_.heads;
  const double inv = 1.0 / std::sqrt(static_cast<double>(dh));
  const ad::Var q = ad::matmul(tokens, L.wq);
  const ad::Var k = ad::matmul(tokens, L.wk);

  ad::Matrix hard = ad::Matrix::Zero(kCanonicalSlots, kCanonicalSlots);
  if (config_.hard_mask && delta.any()) {
    for (int j = 0; j < kCanonicalSlots; ++j)
      if (!delta[static_cast<std::size_t>(j)]) hard.col(j).setConstant(-std::numeric_limits<double>::infinity());
  }

  std::vector<ad::Var> scores;
  for (int h = 0; h < config_.heads; ++h) {
    const ad::Var qh = ad::slice_cols(q, h * dh, dh);
    const ad::Var kh = ad::slice_cols(k, h * dh, dh);
    ad::Var a = ad::scale(ad::matmul(qh, ad::transpose(kh)), inv);
    a = ad::add(a, graph_bias(structure, delta, h));
    if (config_.hard_mask && delta.any()) a = ad::add_const(a, hard);
    scores.push_back(a);
  }
  return scores;
}

ad::Var MorphEncoder::encode(const ad::Var& J, const GraphStructure& structure, const ActiveMask& delta,
                             MorphTrace* trace) const {
  if (J.rows() != kCanonicalSlots || J.cols() != kMorphFeatures) throw ArityError("encode_morphology: J must be 24x11");
  Eigen::VectorXd keep(kCanonicalSlots);
  for (int i = 0; i < kCanonicalSlots; ++i) keep(i) = delta[static_cast<std::size_t>(i)] ? 1.0 : 0.0;
  ad::Var x = ad::row_scale(J, keep);
  if (config_.standardize) {
    ad::Matrix shift = ad::Matrix::Zero(kCanonicalSlots, kMorphFeatures);
    ad::Matrix scale = ad::Matrix::Ones(kCanonicalSlots, kMorphFeatures);
    for (int i = 0; i < kCanonicalSlots; ++i) {
      if (!delta[static_cast<std::size_t>(i)]) continue;
      for (int c = 0; c < kMorphFeatures; ++c) {
        shift(i, c) = -config_.column_mean[static_cast<std::size_t>(c)] / config_.column_scale[static_cast<std::size_t>(c)];
        scale(i, c) = 1.0 / config_.column_scale[static_cast<std::size_t>(c)];
      }
    }
    x = ad::add_const(ad::mul(x, ad::constant(scale)), shift);
  }
  x = token_projection_(x);

  const int dh = config_.dim / config_.heads;
  if (trace) trace->attention.clear();
  for (int l = 0; l < config_.layers; ++l) {
    const Layer& L = layers_[static_cast<std::size_t>(l)];
    const std::vector<ad::Var> scores = attention_scores(x, structure, delta, l);
    const ad::Var v = ad::matmul(x, L.wv);
    std::vector<ad::Var> heads;
    if (trace) trace->attention.emplace_back();
    for (int h = 0; h < config_.heads; ++h) {
      const ad::Var p = ad::softmax_rows(scores[static_cast<std::size_t>(h)]);
      if (trace) trace->attention.back().push_back(p.value());
      heads.push_back(ad::matmul(p, ad::slice_cols(v, h * dh, dh)));
    }
    x = ad::add(x, ad::concat_cols(heads));
    x = ad::add(x, L.ff2(ad::silu(L.ff1(x))));
    if (!x.value().allFinite()) throw NumericError("morph encoder: non-finite value in layer " + std::to_string(l));
  }
  return x;
}

ad::Var MorphEncoder::encode(const JointMorphologyMatrix& J, const GraphStructure& structure, const ActiveMask& delta,
                             MorphTrace* trace) const {
  return encode(ad::constant(J.values), structure, delta, trace);
}

}  // namespace morphgrasp
