#include "morphgrasp/model.hpp"

#include <random>

namespace morphgrasp {

GraspModel::GraspModel(const ModelConfig& config, std::uint64_t seed)
    : config_(config), structure_(build_graph_structure(CanonicalLayout::standard())) {
  std::mt19937_64 rng(seed);
  morph_ = std::make_unique<MorphEncoder>(config_.morph, params_, rng);
  points_ = std::make_unique<PointEncoder>(config_.points, params_, rng);
  denoiser_ = std::make_unique<Denoiser>(config_.denoiser, params_, rng);
}

}  // namespace morphgrasp
