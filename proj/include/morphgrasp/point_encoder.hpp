#pragma once

#include "morphgrasp/autograd.hpp"
#include "morphgrasp/object.hpp"
#include "morphgrasp/params.hpp"

#include <random>
#include <string>
#include <vector>

namespace morphgrasp {

struct PointEncoderConfig {
  int dim = 256;
  int groups = 64;     // N_p
  int neighbors = 32;  // m
};

/// Non-differentiable grouping stage; depends only on the point cloud.
struct PointGrouping {
  std::vector<int> centers;
  std::vector<std::vector<int>> members;
  PointMatrix center_points;    // N_p x 3
  Eigen::MatrixXd relative;     // (N_p * m) x 3, member minus its center
  Eigen::MatrixXd center_offsets;  // N_p x 3, center minus cloud centroid
};

PointGrouping group_cloud(const PointMatrix& points, const PointEncoderConfig& config);

struct PointCloudFeature {
  Eigen::MatrixXd P;  // N_p x D
  PointMatrix centers;
};

class PointEncoder {
 public:
  PointEncoder(const PointEncoderConfig& config, ParamStore& params, std::mt19937_64& rng,
               const std::string& prefix = "points");

  const PointEncoderConfig& config() const { return config_; }

  /// N_p x D token matrix.
  ad::Var encode(const PointGrouping& grouping) const;
  PointCloudFeature encode_points(const ObjectModel& object) const;

 private:
  PointEncoderConfig config_;
  ad::Linear mlp1_, mlp2_, pos_;
  ad::Var wq_, wk_, wv_;
  ad::Linear ff1_, ff2_;
};

}  // namespace morphgrasp
