#include "morphgrasp/params.hpp"

#include "morphgrasp/errors.hpp"

#include <cmath>

namespace morphgrasp {

ad::Var ParamStore::add(const std::string& name, ad::Matrix init) {
  if (contains(name)) throw ValidationError("duplicate parameter '" + name + "'");
  ad::Var v = ad::leaf(std::move(init));
  items_.emplace_back(name, v);
  return v;
}

ad::Matrix xavier_uniform(int rows, int cols, std::mt19937_64& rng) {
  const double bound = std::sqrt(6.0 / static_cast<double>(rows + cols));
  std::uniform_real_distribution<double> dist(-bound, bound);
  ad::Matrix m(rows, cols);
  // Column-major fill order is fixed so initialization is reproducible.
  for (Eigen::Index j = 0; j < m.cols(); ++j)
    for (Eigen::Index i = 0; i < m.rows(); ++i) m(i, j) = dist(rng);
  return m;
}

ad::Linear ParamStore::add_linear(const std::string& prefix, int in, int out, std::mt19937_64& rng) {
  ad::Linear l;
  l.weight = add(prefix + ".weight", xavier_uniform(in, out, rng));
  l.bias = add(prefix + ".bias", ad::Matrix::Zero(1, out));
  return l;
}

const ad::Var& ParamStore::get(const std::string& name) const {
  for (const auto& [n, v] : items_)
    if (n == name) return v;
  throw ValidationError("unknown parameter '" + name + "'");
}

bool ParamStore::contains(const std::string& name) const {
  for (const auto& item : items_)
    if (item.first == name) return true;
  return false;
}

void ParamStore::zero_grad() {
  for (auto& item : items_) item.second.zero_grad();
}

std::size_t ParamStore::scalar_count() const {
  std::size_t n = 0;
  for (const auto& item : items_) n += static_cast<std::size_t>(item.second.value().size());
  return n;
}

Adam::Adam(AdamConfig config, const ParamStore& params) : config_(config) {
  for (const auto& item : params.items()) {
    m_.push_back(ad::Matrix::Zero(item.second.rows(), item.second.cols()));
    v_.push_back(ad::Matrix::Zero(item.second.rows(), item.second.cols()));
  }
}

void Adam::step(ParamStore& params) {
  auto& items = params.items();
  if (items.size() != m_.size()) throw StateError("optimizer state does not match parameter set");
  ++t_;
  double clip = 1.0;
  if (config_.clip_norm > 0.0) {
    double sq = 0.0;
    for (const auto& item : items) sq += item.second.grad().squaredNorm();
    const double norm = std::sqrt(sq);
    if (norm > config_.clip_norm) clip = config_.clip_norm / norm;
  }
  const double bc1 = 1.0 - std::pow(config_.beta1, static_cast<double>(t_));
  const double bc2 = 1.0 - std::pow(config_.beta2, static_cast<double>(t_));
  for (std::size_t i = 0; i < items.size(); ++i) {
    const ad::Matrix g = items[i].second.grad() * clip;
    m_[i] = config_.beta1 * m_[i] + (1.0 - config_.beta1) * g;
    v_[i] = config_.beta2 * v_[i] + (1.0 - config_.beta2) * g.cwiseProduct(g);
    auto& w = items[i].second.mutable_value();
    w.array() -= config_.lr * (m_[i].array() / bc1) / ((v_[i].array() / bc2).sqrt() + config_.eps);
  }
}

}  // namespace morphgrasp
