#pragma once

#include "morphgrasp/autograd.hpp"

#include <cstdint>
#include <random>
#include <string>
#include <vector>

namespace morphgrasp {

/// Named trainable tensors in registration order. The order is part of the
/// checkpoint format, so models must register parameters deterministically.
class ParamStore {
 public:
  ad::Var add(const std::string& name, ad::Matrix init);
  /// Xavier-uniform weight (in x out) plus zero bias (1 x out).
  ad::Linear add_linear(const std::string& prefix, int in, int out, std::mt19937_64& rng);

  const ad::Var& get(const std::string& name) const;
  bool contains(const std::string& name) const;
  const std::vector<std::pair<std::string, ad::Var>>& items() const { return items_; }
  std::vector<std::pair<std::string, ad::Var>>& items() { return items_; }

  void zero_grad();
  std::size_t scalar_count() const;

 private:
  std::vector<std::pair<std::string, ad::Var>> items_;
};

ad::Matrix xavier_uniform(int rows, int cols, std::mt19937_64& rng);

struct AdamConfig {
  double lr = 1e-4;
  double beta1 = 0.9;
  double beta2 = 0.999;
  double eps = 1e-8;
  /// Global gradient-norm clip; 0 disables.
  double clip_norm = 0.0;
};

class Adam {
 public:
  Adam(AdamConfig config, const ParamStore& params);

  /// Applies one update from the gradients currently stored on the parameters.
  void step(ParamStore& params);

  std::int64_t steps() const { return t_; }
  const AdamConfig& config() const { return config_; }
  void set_lr(double lr) { config_.lr = lr; }

  // Exposed for exact resume.
  std::vector<ad::Matrix>& first_moments() { return m_; }
  std::vector<ad::Matrix>& second_moments() { return v_; }
  const std::vector<ad::Matrix>& first_moments() const { return m_; }
  const std::vector<ad::Matrix>& second_moments() const { return v_; }
  void set_steps(std::int64_t t) { t_ = t; }

 private:
  AdamConfig config_;
  std::vector<ad::Matrix> m_, v_;
  std::int64_t t_ = 0;
};

}  // namespace morphgrasp
