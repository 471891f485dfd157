#pragma once

// A small reverse-mode differentiation tape over dense double matrices.
//
// Every operation returns a Var that shares ownership of its inputs, so the
// graph lives exactly as long as the value it produced. Nodes that do not
// depend on any trainable leaf carry no backward closure.

#include <Eigen/Dense>

#include <functional>
#include <memory>
#include <span>
#include <vector>

namespace morphgrasp::ad {

using Matrix = Eigen::MatrixXd;
using Index = Eigen::Index;

struct Node {
  Matrix value;
  Matrix grad;  // empty until something flows into it
  bool requires_grad = false;
  std::vector<std::shared_ptr<Node>> inputs;
  std::function<void(Node&)> backward_fn;

  void accumulate(const Matrix& g);
};

class Var {
 public:
  Var() = default;
  explicit Var(Matrix value, bool requires_grad = false);
  explicit Var(std::shared_ptr<Node> node) : node_(std::move(node)) {}

  const Matrix& value() const { return node_->value; }
  Matrix& mutable_value() { return node_->value; }
  /// Gradient accumulated by the last backward(); zeros if nothing reached it.
  Matrix grad() const;
  Index rows() const { return node_->value.rows(); }
  Index cols() const { return node_->value.cols(); }
  bool requires_grad() const { return node_ && node_->requires_grad; }
  bool valid() const { return static_cast<bool>(node_); }
  void zero_grad() { node_->grad.resize(0, 0); }

  const std::shared_ptr<Node>& node() const { return node_; }

 private:
  std::shared_ptr<Node> node_;
};

Var constant(Matrix value);
Var leaf(Matrix value);  // trainable

/// While alive, ops on this thread record no graph (inference mode).
class NoGradGuard {
 public:
  NoGradGuard();
  ~NoGradGuard();
  NoGradGuard(const NoGradGuard&) = delete;
  NoGradGuard& operator=(const NoGradGuard&) = delete;

 private:
  bool previous_;
};

/// Builds an op node. `backward` receives the finished node (its grad is set).
Var make_op(Matrix value, std::vector<Var> inputs, std::function<void(Node&)> backward);

/// Runs reverse accumulation from a 1x1 root.
void backward(const Var& root);

// ---- elementwise and linear algebra -----------------------------------------

Var matmul(const Var& a, const Var& b);
/// Same as matmul, but each output row is computed on its own so a row's
/// value does not depend on how many other rows are in the batch.
Var matmul_rowwise(const Var& a, const Var& w);
Var add(const Var& a, const Var& b);
Var sub(const Var& a, const Var& b);
Var mul(const Var& a, const Var& b);
Var scale(const Var& a, double s);
Var add_const(const Var& a, const Matrix& c);
/// Adds a 1xN row to every row of an MxN matrix.
Var add_row(const Var& a, const Var& row);
/// Multiplies row i by s[i].
Var row_scale(const Var& a, const Eigen::VectorXd& s);
/// s (1x1) times a constant matrix.
Var scalar_times(const Var& s, const Matrix& c);
Var silu(const Var& a);
Var square(const Var& a);
Var transpose(const Var& a);
Var softmax_rows(const Var& a);
/// x / sqrt(mean(x^2) + eps) per row.
Var rms_norm_rows(const Var& a, double eps = 1e-6);

Var sum(const Var& a);
Var mean(const Var& a);
/// Per-row sums as a column vector.
Var row_sum(const Var& a);

Var concat_cols(std::span<const Var> parts);
Var concat_rows(std::span<const Var> parts);
Var slice_cols(const Var& a, Index start, Index count);
Var slice_rows(const Var& a, Index start, Index count);
Var gather_rows(const Var& a, std::span<const int> rows);
/// out(i,j) = table.value()(index(i,j)) with the table read in column-major order.
Var gather(const Var& table, const Eigen::MatrixXi& index);
/// Splits an (k*m)xD matrix into k consecutive groups of m rows and max-pools each.
Var max_pool_groups(const Var& a, Index group_size);

/// Single-query-per-row attention with per-row key/value sets.
/// Row r of q attends over keys[group[r]] / values[group[r]] with logits
/// scaled by `scale`. Returns the attended rows; the softmax weights for each
/// row are written to `weights_out` when non-null.
Var grouped_attention(const Var& q, std::span<const Var> keys, std::span<const Var> values,
                      std::span<const int> group, double scale,
                      std::vector<Eigen::VectorXd>* weights_out = nullptr);

// ---- small layers -----------------------------------------------------------

/// y = x W + b with W (in x out) and b (1 x out).
struct Linear {
  Var weight;
  Var bias;
  Var operator()(const Var& x) const { return add_row(matmul(x, weight), bias); }
  /// Batch-size independent variant.
  Var rowwise(const Var& x) const { return add_row(matmul_rowwise(x, weight), bias); }
};

}  // namespace morphgrasp::ad
