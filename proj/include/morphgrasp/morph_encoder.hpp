#pragma once

#include "morphgrasp/autograd.hpp"
#include "morphgrasp/canonical.hpp"
#include "morphgrasp/params.hpp"
#include "morphgrasp/urdf.hpp"

#include <array>
#include <random>
#include <string>
#include <vector>

namespace morphgrasp {

inline constexpr int kMorphFeatures = 11;

/// Per-slot joint features: bbox (l, w, h) ++ limits (min, max) ++ origin xyz ++ axis.
struct JointMorphologyMatrix {
  Eigen::MatrixXd values = Eigen::MatrixXd::Zero(kCanonicalSlots, kMorphFeatures);
};

JointMorphologyMatrix extract_joint_morphology(const KinematicTree& tree, const CanonicalMapping& mapping);

struct GraphStructure {
  static constexpr int kUnreachable = -1;

  Eigen::MatrixXi adjacency;  // symmetric 0/1
  Eigen::MatrixXi parent;     // parent(i, j) = 1 iff j is the parent slot of i
  Eigen::MatrixXi child;      // transpose of parent
  Eigen::MatrixXi spd;        // hop distance, kUnreachable across components
};

GraphStructure build_graph_structure(const CanonicalLayout& layout);
/// Structure of an arbitrary forest given per-node parents (-1 for roots).
GraphStructure build_graph_structure(const std::vector<int>& parents);

struct MorphEncoderConfig {
  int dim = 256;
  int layers = 4;
  int heads = 8;
  int max_hops = 8;
  bool hard_mask = true;
  int ff_mult = 2;
  /// Optional per-column standardization of active J rows.
  bool standardize = false;
  std::array<double, kMorphFeatures> column_mean{};
  std::array<double, kMorphFeatures> column_scale{1, 1, 1, 1, 1, 1, 1, 1, 1, 1, 1};
};

/// Softmax weights recorded during encoding: [layer][head] -> 24x24.
struct MorphTrace {
  std::vector<std::vector<Eigen::MatrixXd>> attention;
};

class MorphEncoder {
 public:
  MorphEncoder(const MorphEncoderConfig& config, ParamStore& params, std::mt19937_64& rng,
               const std::string& prefix = "morph");

  const MorphEncoderConfig& config() const { return config_; }

  /// Pre-softmax per-head scores for `layer` given the layer's input tokens.
  std::vector<ad::Var> attention_scores(const ad::Var& tokens, const GraphStructure& structure,
                                        const ActiveMask& delta, int layer) const;

  /// Returns the 24 x D morph representation.
  ad::Var encode(const ad::Var& J, const GraphStructure& structure, const ActiveMask& delta,
                 MorphTrace* trace = nullptr) const;
  ad::Var encode(const JointMorphologyMatrix& J, const GraphStructure& structure, const ActiveMask& delta,
                 MorphTrace* trace = nullptr) const;

  // Bias tables, exposed so tests can isolate individual terms.
  const ad::Var& spd_table() const { return spd_table_; }      // heads x (max_hops + 2)
  const ad::Var& parent_bias() const { return parent_bias_; }  // heads x 1
  const ad::Var& child_bias() const { return child_bias_; }    // heads x 1
  const ad::Var& mask_table() const { return mask_table_; }    // heads x 4, index 2*delta_i + delta_j

 private:
  struct Layer {
    ad::Var wq, wk, wv;
    ad::Linear ff1, ff2;
  };

  ad::Var graph_bias(const GraphStructure& structure, const ActiveMask& delta, int head) const;

  MorphEncoderConfig config_;
  ad::Linear token_projection_;
  ad::Var spd_table_, parent_bias_, child_bias_, mask_table_;
  std::vector<Layer> layers_;
};

}  // namespace morphgrasp
