#pragma once

#include "morphgrasp/config.hpp"
#include "morphgrasp/denoiser.hpp"
#include "morphgrasp/morph_encoder.hpp"
#include "morphgrasp/params.hpp"
#include "morphgrasp/point_encoder.hpp"

#include <memory>

namespace morphgrasp {

/// The three networks sharing one parameter store. Parameters are
/// registered in a fixed order (morph, points, denoiser) from the config seed.
class GraspModel {
 public:
  explicit GraspModel(const ModelConfig& config, std::uint64_t seed);

  GraspModel(const GraspModel&) = delete;
  GraspModel& operator=(const GraspModel&) = delete;

  const ModelConfig& config() const { return config_; }
  ParamStore& params() { return params_; }
  const ParamStore& params() const { return params_; }
  const MorphEncoder& morph() const { return *morph_; }
  const PointEncoder& points() const { return *points_; }
  const Denoiser& denoiser() const { return *denoiser_; }
  const GraphStructure& structure() const { return structure_; }

 private:
  ModelConfig config_;
  ParamStore params_;
  std::unique_ptr<MorphEncoder> morph_;
  std::unique_ptr<PointEncoder> points_;
  std::unique_ptr<Denoiser> denoiser_;
  GraphStructure structure_;
};

}  // namespace morphgrasp
