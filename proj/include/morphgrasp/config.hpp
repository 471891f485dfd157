#pragma once

#include "morphgrasp/denoiser.hpp"
#include "morphgrasp/losses.hpp"
#include "morphgrasp/morph_encoder.hpp"
#include "morphgrasp/point_encoder.hpp"

#include <json.hpp>

#include <cstdint>
#include <filesystem>
#include <optional>
#include <string>

namespace morphgrasp {

struct ModelConfig {
  MorphEncoderConfig morph;
  PointEncoderConfig points;
  DenoiserConfig denoiser;  // denoiser.timesteps mirrors DiffusionConfig::timesteps
  int cloud_points = 2048;  // object clouds are resampled to this size
};

struct DiffusionConfig {
  int timesteps = 100;
  /// Unset means the standard linear range scaled by 1000 / timesteps.
  std::optional<double> beta_start;
  std::optional<double> beta_end;
  bool canonicalize = true;
};

struct TrainConfig {
  double lr = 1e-4;
  double lr_final = -1.0;  // cosine decay target over `steps`; negative keeps lr constant
  int batch_size = 128;
  int steps = 1000;
  int checkpoint_every = 500;
  int log_every = 1;
  double clip_norm = 0.0;
  std::string dataset;  // manifest path
};

struct SampleConfig {
  int n = 64;
  int steps = 0;  // 0 runs every timestep; otherwise strided
};

struct QualityConfig {
  double contact_tolerance = 0.002;
};

struct ToyConfig {
  std::string urdf;
  std::string mapping;
  int grasps = 32;
  int spheres = 4;
  int boxes = 4;
  double sphere_radius_min = 0.02;
  double sphere_radius_max = 0.035;
};

/// Every tunable in one place. Files are merged over these defaults; unknown keys are rejected.
struct RunConfig {
  std::uint64_t seed = 0;
  ModelConfig model;
  DiffusionConfig diffusion;
  PhysicsLossConfig physics;
  LossWeights alpha;
  TrainConfig train;
  SampleConfig sample;
  QualityConfig quality;
  ToyConfig toy;

  nlohmann::ordered_json to_json() const;
  static RunConfig from_json(const nlohmann::ordered_json& overrides);
  /// Checks ranges and propagates derived fields (denoiser timesteps).
  void validate();
  /// FNV-1a over the parts that determine parameter shapes and the schedule.
  std::uint64_t model_hash() const;
};

RunConfig load_config(const std::filesystem::path& path);
std::uint64_t fnv1a(std::string_view bytes);

}  // namespace morphgrasp
