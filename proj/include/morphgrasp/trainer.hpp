#pragma once

#include "morphgrasp/config.hpp"
#include "morphgrasp/dataset.hpp"
#include "morphgrasp/diffusion.hpp"
#include "morphgrasp/hand_model.hpp"
#include "morphgrasp/losses.hpp"
#include "morphgrasp/model.hpp"
#include "morphgrasp/params.hpp"
#include "morphgrasp/point_encoder.hpp"

#include <filesystem>
#include <iosfwd>
#include <random>
#include <vector>

namespace morphgrasp {

/// One record with its object already in the record's training frame.
struct TrainingScene {
  int embodiment = 0;
  ObjectModel object;
  PointGrouping grouping;
  CanonicalPose pose;
  JointWeights weights;
};

struct TrainingSet {
  std::vector<Embodiment> embodiments;
  std::vector<TrainingScene> scenes;
};

/// Canonicalizes each record when `config.diffusion.canonicalize`, resamples its
/// cloud to `config.model.cloud_points` and groups it.
TrainingSet build_training_set(const GraspDataset& dataset, const RunConfig& config);

struct TrainBatch {
  std::vector<int> rows;  // scene indices
  std::vector<int> t;
  Eigen::MatrixXd eps;    // b x 33
};

class Trainer {
 public:
  Trainer(const RunConfig& config, GraspModel& model, const TrainingSet& data);

  /// Uniform scenes (with replacement), uniform timesteps, Gaussian noise.
  TrainBatch draw_batch(std::mt19937_64& rng) const;
  /// Loss without an update. `per_row` receives each row's total.
  LossReport evaluate(const TrainBatch& batch, std::vector<double>* per_row = nullptr) const;
  /// Draws a batch from the trainer's RNG, computes the loss and applies one Adam update.
  LossReport step();
  LossReport step(const TrainBatch& batch);

  Adam& optimizer() { return optimizer_; }
  std::mt19937_64& rng() { return rng_; }
  const DiffusionSchedule& schedule() const { return schedule_; }

 private:
  struct Forward {
    LossReport report;
    ad::Var total;
  };
  Forward forward(const TrainBatch& batch, std::vector<double>* per_row) const;

  RunConfig config_;
  GraspModel& model_;
  const TrainingSet& data_;
  DiffusionSchedule schedule_;
  Adam optimizer_;
  std::mt19937_64 rng_;
};

struct TrainRunOptions {
  std::filesystem::path out_dir;
  bool resume = false;
  std::ostream* log = nullptr;  // one human-readable line per log interval
};

/// Runs the configured number of steps, writing config.json, metrics.jsonl,
/// checkpoint.mgck and train_state.bin into `out_dir`. On a numeric failure the
/// last good checkpoint is left in place and the error is rethrown.
LossReport run_training(const RunConfig& config, const GraspDataset& dataset, const TrainRunOptions& options);

/// Encodes the hand and object (cloud resampled to the configured size) and runs
/// reverse diffusion, strided when `config.sample.steps` is set.
std::vector<CanonicalPose> sample_grasps(const GraspModel& model, const RunConfig& config, const Embodiment& hand,
                                         const ObjectModel& object, int n, std::uint64_t seed);

/// Mean over `poses` of the L2 distance (33 channels) to the nearest pose in `reference`.
double mean_nearest_distance(const std::vector<CanonicalPose>& poses, const std::vector<CanonicalPose>& reference);

}  // namespace morphgrasp
