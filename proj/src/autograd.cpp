#include "morphgrasp/autograd.hpp"

#include "morphgrasp/errors.hpp"

#include <cmath>
#include <limits>
#include <string>
#include <unordered_set>

namespace morphgrasp::ad {

void Node::accumulate(const Matrix& g) {
  if (grad.size() == 0) {
    grad = g;
  } else {
    grad += g;
  }
}

Var::Var(Matrix value, bool requires_grad) : node_(std::make_shared<Node>()) {
  node_->value = std::move(value);
  node_->requires_grad = requires_grad;
}

Matrix Var::grad() const {
  if (node_->grad.size() == 0) return Matrix::Zero(rows(), cols());
  return node_->grad;
}

namespace {
thread_local bool g_grad_enabled = true;
}

NoGradGuard::NoGradGuard() : previous_(g_grad_enabled) { g_grad_enabled = false; }
NoGradGuard::~NoGradGuard() { g_grad_enabled = previous_; }

Var constant(Matrix value) { return Var(std::move(value), false); }
Var leaf(Matrix value) { return Var(std::move(value), true); }

Var make_op(Matrix value, std::vector<Var> inputs, std::function<void(Node&)> backward) {
  auto node = std::make_shared<Node>();
  node->value = std::move(value);
  if (!g_grad_enabled) return Var(std::move(node));
  for (const auto& in : inputs) {
    if (in.requires_grad()) {
      node->requires_grad = true;
      break;
    }
  }
  if (node->requires_grad) {
    node->inputs.reserve(inputs.size());
    for (auto& in : inputs) node->inputs.push_back(in.node());
    node->backward_fn = std::move(backward);
  }
  return Var(std::move(node));
}

void backward(const Var& root) {
  if (root.rows() != 1 || root.cols() != 1) throw ArityError("backward() needs a 1x1 root");
  if (!root.requires_grad()) return;

  // Iterative post-order to avoid recursion depth limits on long graphs.
  std::vector<Node*> order;
  std::unordered_set<Node*> seen;
  std::vector<std::pair<Node*, std::size_t>> stack;
  stack.emplace_back(root.node().get(), 0);
  seen.insert(root.node().get());
  while (!stack.empty()) {
    auto& [node, next] = stack.back();
    if (next < node->inputs.size()) {
      Node* child = node->inputs[next++].get();
      if (child->requires_grad && seen.insert(child).second) stack.emplace_back(child, 0);
    } else {
      order.push_back(node);
      stack.pop_back();
    }
  }

  root.node()->accumulate(Matrix::Ones(1, 1));
  for (auto it = order.rbegin(); it != order.rend(); ++it) {
    Node* node = *it;
    if (node->backward_fn && node->grad.size() != 0) node->backward_fn(*node);
  }
}

namespace {

void check_same_shape(const Var& a, const Var& b, const char* op) {
  if (a.rows() != b.rows() || a.cols() != b.cols()) {
    throw ArityError(std::string(op) + ": shape mismatch " + std::to_string(a.rows()) + "x" +
                     std::to_string(a.cols()) + " vs " + std::to_string(b.rows()) + "x" +
                     std::to_string(b.cols()));
  }
}

Node& in(Node& n, std::size_t i) { return *n.inputs[i]; }

}  // namespace

Var matmul(const Var& a, const Var& b) {
  if (a.cols() != b.rows()) {
    throw ArityError("matmul: inner dimensions " + std::to_string(a.cols()) + " vs " +
                     std::to_string(b.rows()));
  }
  Matrix out = a.value() * b.value();
  const bool ga = a.requires_grad(), gb = b.requires_grad();
  return make_op(std::move(out), {a, b}, [ga, gb](Node& n) {
    Node& na = in(n, 0);
    Node& nb = in(n, 1);
    if (ga) na.accumulate(n.grad * nb.value.transpose());
    if (gb) nb.accumulate(na.value.transpose() * n.grad);
  });
}

Var matmul_rowwise(const Var& a, const Var& w) {
  if (a.cols() != w.rows()) {
    throw ArityError("matmul_rowwise: inner dimensions " + std::to_string(a.cols()) + " vs " +
                     std::to_string(w.rows()));
  }
  Matrix out(a.rows(), w.cols());
  for (Index r = 0; r < a.rows(); ++r) {
    const Eigen::RowVectorXd row = a.value().row(r);
    out.row(r).noalias() = row * w.value();
  }
  const bool ga = a.requires_grad(), gw = w.requires_grad();
  return make_op(std::move(out), {a, w}, [ga, gw](Node& n) {
    Node& na = in(n, 0);
    Node& nw = in(n, 1);
    if (ga) na.accumulate(n.grad * nw.value.transpose());
    if (gw) nw.accumulate(na.value.transpose() * n.grad);
  });
}

Var add(const Var& a, const Var& b) {
  check_same_shape(a, b, "add");
  const bool ga = a.requires_grad(), gb = b.requires_grad();
  return make_op(a.value() + b.value(), {a, b}, [ga, gb](Node& n) {
    if (ga) in(n, 0).accumulate(n.grad);
    if (gb) in(n, 1).accumulate(n.grad);
  });
}

Var sub(const Var& a, const Var& b) {
  check_same_shape(a, b, "sub");
  const bool ga = a.requires_grad(), gb = b.requires_grad();
  return make_op(a.value() - b.value(), {a, b}, [ga, gb](Node& n) {
    if (ga) in(n, 0).accumulate(n.grad);
    if (gb) in(n, 1).accumulate(-n.grad);
  });
}

Var mul(const Var& a, const Var& b) {
  check_same_shape(a, b, "mul");
  const bool ga = a.requires_grad(), gb = b.requires_grad();
  return make_op(a.value().cwiseProduct(b.value()), {a, b}, [ga, gb](Node& n) {
    Node& na = in(n, 0);
    Node& nb = in(n, 1);
    if (ga) na.accumulate(n.grad.cwiseProduct(nb.value));
    if (gb) nb.accumulate(n.grad.cwiseProduct(na.value));
  });
}

Var scale(const Var& a, double s) {
  return make_op(a.value() * s, {a}, [s](Node& n) { in(n, 0).accumulate(n.grad * s); });
}

Var add_const(const Var& a, const Matrix& c) {
  if (a.rows() != c.rows() || a.cols() != c.cols()) throw ArityError("add_const: shape mismatch");
  return make_op(a.value() + c, {a}, [](Node& n) { in(n, 0).accumulate(n.grad); });
}

Var add_row(const Var& a, const Var& row) {
  if (row.rows() != 1 || row.cols() != a.cols()) throw ArityError("add_row: bias shape mismatch");
  Matrix out = a.value().rowwise() + row.value().row(0);
  const bool ga = a.requires_grad(), gb = row.requires_grad();
  return make_op(std::move(out), {a, row}, [ga, gb](Node& n) {
    if (ga) in(n, 0).accumulate(n.grad);
    if (gb) in(n, 1).accumulate(n.grad.colwise().sum());
  });
}

Var row_scale(const Var& a, const Eigen::VectorXd& s) {
  if (s.size() != a.rows()) throw ArityError("row_scale: scale length mismatch");
  Matrix out = s.asDiagonal() * a.value();
  return make_op(std::move(out), {a}, [s](Node& n) { in(n, 0).accumulate(s.asDiagonal() * n.grad); });
}

Var scalar_times(const Var& s, const Matrix& c) {
  if (s.rows() != 1 || s.cols() != 1) throw ArityError("scalar_times: expected 1x1 scalar");
  return make_op(s.value()(0, 0) * c, {s}, [c](Node& n) {
    in(n, 0).accumulate(Matrix::Constant(1, 1, n.grad.cwiseProduct(c).sum()));
  });
}

Var silu(const Var& a) {
  const Matrix sig = (1.0 + (-a.value().array()).exp()).inverse().matrix();
  Matrix out = a.value().cwiseProduct(sig);
  return make_op(std::move(out), {a}, [sig](Node& n) {
    const auto& x = in(n, 0).value.array();
    const auto s = sig.array();
    in(n, 0).accumulate((n.grad.array() * (s * (1.0 + x * (1.0 - s)))).matrix());
  });
}

Var square(const Var& a) {
  return make_op(a.value().array().square().matrix(), {a}, [](Node& n) {
    in(n, 0).accumulate(2.0 * n.grad.cwiseProduct(in(n, 0).value));
  });
}

Var transpose(const Var& a) {
  return make_op(a.value().transpose(), {a}, [](Node& n) { in(n, 0).accumulate(n.grad.transpose()); });
}

Var softmax_rows(const Var& a) {
  const Matrix& x = a.value();
  Matrix p(x.rows(), x.cols());
  for (Index i = 0; i < x.rows(); ++i) {
    const double m = x.row(i).maxCoeff();
    if (!std::isfinite(m)) throw NumericError("softmax_rows: row " + std::to_string(i) + " has no finite logit");
    p.row(i) = (x.row(i).array() - m).exp().matrix();
    p.row(i) /= p.row(i).sum();
  }
  Matrix saved = p;
  return make_op(std::move(p), {a}, [saved](Node& n) {
    const Eigen::VectorXd dot = n.grad.cwiseProduct(saved).rowwise().sum();
    Matrix g = saved.cwiseProduct(n.grad.colwise() - dot);
    in(n, 0).accumulate(g);
  });
}

Var rms_norm_rows(const Var& a, double eps) {
  const Index cols = a.cols();
  Eigen::VectorXd inv(a.rows());
  Matrix out(a.rows(), cols);
  for (Index r = 0; r < a.rows(); ++r) {
    const Eigen::RowVectorXd row = a.value().row(r);
    inv[r] = 1.0 / std::sqrt(row.squaredNorm() / static_cast<double>(cols) + eps);
    out.row(r) = inv[r] * row;
  }
  return make_op(std::move(out), {a}, [inv, cols](Node& n) {
    const Matrix& x = in(n, 0).value;
    const Eigen::VectorXd dot = n.grad.cwiseProduct(x).rowwise().sum();
    const Eigen::VectorXd coef = (inv.array().cube() * dot.array() / static_cast<double>(cols)).matrix();
    in(n, 0).accumulate(inv.asDiagonal() * n.grad - coef.asDiagonal() * x);
  });
}

Var sum(const Var& a) {
  const Index r = a.rows(), c = a.cols();
  return make_op(Matrix::Constant(1, 1, a.value().sum()), {a}, [r, c](Node& n) {
    in(n, 0).accumulate(Matrix::Constant(r, c, n.grad(0, 0)));
  });
}

Var mean(const Var& a) {
  const Index r = a.rows(), c = a.cols();
  const double inv = 1.0 / static_cast<double>(r * c);
  return make_op(Matrix::Constant(1, 1, a.value().sum() * inv), {a}, [r, c, inv](Node& n) {
    in(n, 0).accumulate(Matrix::Constant(r, c, n.grad(0, 0) * inv));
  });
}

Var row_sum(const Var& a) {
  const Index c = a.cols();
  return make_op(a.value().rowwise().sum(), {a}, [c](Node& n) {
    in(n, 0).accumulate(n.grad.replicate(1, c));
  });
}

Var concat_cols(std::span<const Var> parts) {
  if (parts.empty()) throw ArityError("concat_cols: no inputs");
  const Index rows = parts[0].rows();
  Index cols = 0;
  for (const auto& p : parts) {
    if (p.rows() != rows) throw ArityError("concat_cols: row mismatch");
    cols += p.cols();
  }
  Matrix out(rows, cols);
  std::vector<Index> offsets;
  Index off = 0;
  for (const auto& p : parts) {
    out.middleCols(off, p.cols()) = p.value();
    offsets.push_back(off);
    off += p.cols();
  }
  std::vector<Var> inputs(parts.begin(), parts.end());
  return make_op(std::move(out), inputs, [offsets](Node& n) {
    for (std::size_t i = 0; i < n.inputs.size(); ++i) {
      Node& ni = in(n, i);
      if (ni.requires_grad) ni.accumulate(n.grad.middleCols(offsets[i], ni.value.cols()));
    }
  });
}

Var concat_rows(std::span<const Var> parts) {
  if (parts.empty()) throw ArityError("concat_rows: no inputs");
  const Index cols = parts[0].cols();
  Index rows = 0;
  for (const auto& p : parts) {
    if (p.cols() != cols) throw ArityError("concat_rows: column mismatch");
    rows += p.rows();
  }
  Matrix out(rows, cols);
  std::vector<Index> offsets;
  Index off = 0;
  for (const auto& p : parts) {
    out.middleRows(off, p.rows()) = p.value();
    offsets.push_back(off);
    off += p.rows();
  }
  std::vector<Var> inputs(parts.begin(), parts.end());
  return make_op(std::move(out), inputs, [offsets](Node& n) {
    for (std::size_t i = 0; i < n.inputs.size(); ++i) {
      Node& ni = in(n, i);
      if (ni.requires_grad) ni.accumulate(n.grad.middleRows(offsets[i], ni.value.rows()));
    }
  });
}

Var slice_cols(const Var& a, Index start, Index count) {
  if (start < 0 || count < 0 || start + count > a.cols()) throw ArityError("slice_cols: out of range");
  const Index r = a.rows(), c = a.cols();
  return make_op(a.value().middleCols(start, count), {a}, [r, c, start, count](Node& n) {
    Matrix g = Matrix::Zero(r, c);
    g.middleCols(start, count) = n.grad;
    in(n, 0).accumulate(g);
  });
}

Var slice_rows(const Var& a, Index start, Index count) {
  if (start < 0 || count < 0 || start + count > a.rows()) throw ArityError("slice_rows: out of range");
  const Index r = a.rows(), c = a.cols();
  return make_op(a.value().middleRows(start, count), {a}, [r, c, start, count](Node& n) {
    Matrix g = Matrix::Zero(r, c);
    g.middleRows(start, count) = n.grad;
    in(n, 0).accumulate(g);
  });
}

Var gather_rows(const Var& a, std::span<const int> rows) {
  Matrix out(static_cast<Index>(rows.size()), a.cols());
  for (std::size_t i = 0; i < rows.size(); ++i) {
    if (rows[i] < 0 || rows[i] >= a.rows()) throw ArityError("gather_rows: index out of range");
    out.row(static_cast<Index>(i)) = a.value().row(rows[i]);
  }
  std::vector<int> idx(rows.begin(), rows.end());
  const Index r = a.rows(), c = a.cols();
  return make_op(std::move(out), {a}, [idx, r, c](Node& n) {
    Matrix g = Matrix::Zero(r, c);
    for (std::size_t i = 0; i < idx.size(); ++i) g.row(idx[i]) += n.grad.row(static_cast<Index>(i));
    in(n, 0).accumulate(g);
  });
}

Var gather(const Var& table, const Eigen::MatrixXi& index) {
  const Index size = table.value().size();
  Matrix out(index.rows(), index.cols());
  for (Index j = 0; j < index.cols(); ++j) {
    for (Index i = 0; i < index.rows(); ++i) {
      const int k = index(i, j);
      if (k < 0 || k >= size) throw ArityError("gather: index out of range");
      out(i, j) = table.value().data()[k];
    }
  }
  const Index tr = table.rows(), tc = table.cols();
  return make_op(std::move(out), {table}, [index, tr, tc](Node& n) {
    Matrix g = Matrix::Zero(tr, tc);
    for (Index j = 0; j < index.cols(); ++j)
      for (Index i = 0; i < index.rows(); ++i) g.data()[index(i, j)] += n.grad(i, j);
    in(n, 0).accumulate(g);
  });
}

Var max_pool_groups(const Var& a, Index group_size) {
  if (group_size <= 0 || a.rows() % group_size != 0) throw ArityError("max_pool_groups: bad group size");
  const Index groups = a.rows() / group_size;
  const Index cols = a.cols();
  Matrix out(groups, cols);
  Eigen::MatrixXi arg(groups, cols);
  for (Index g = 0; g < groups; ++g) {
    for (Index c = 0; c < cols; ++c) {
      Index best = g * group_size;
      for (Index r = best + 1; r < (g + 1) * group_size; ++r) {
        if (a.value()(r, c) > a.value()(best, c)) best = r;
      }
      out(g, c) = a.value()(best, c);
      arg(g, c) = static_cast<int>(best);
    }
  }
  const Index rows = a.rows();
  return make_op(std::move(out), {a}, [arg, rows, cols](Node& n) {
    Matrix g = Matrix::Zero(rows, cols);
    for (Index i = 0; i < arg.rows(); ++i)
      for (Index c = 0; c < cols; ++c) g(arg(i, c), c) += n.grad(i, c);
    in(n, 0).accumulate(g);
  });
}

Var grouped_attention(const Var& q, std::span<const Var> keys, std::span<const Var> values,
                      std::span<const int> group, double scale,
                      std::vector<Eigen::VectorXd>* weights_out) {
  const Index b = q.rows();
  if (static_cast<Index>(group.size()) != b) throw ArityError("grouped_attention: group length mismatch");
  if (keys.size() != values.size() || keys.empty()) throw ArityError("grouped_attention: key/value sets mismatch");
  const Index dv = values[0].cols();
  for (std::size_t g = 0; g < keys.size(); ++g) {
    if (keys[g].cols() != q.cols()) throw ArityError("grouped_attention: key width mismatch");
    if (values[g].rows() != keys[g].rows() || values[g].cols() != dv) {
      throw ArityError("grouped_attention: value shape mismatch");
    }
  }

  Matrix out(b, dv);
  std::vector<Eigen::VectorXd> weights(static_cast<std::size_t>(b));
  for (Index r = 0; r < b; ++r) {
    const int g = group[static_cast<std::size_t>(r)];
    if (g < 0 || g >= static_cast<int>(keys.size())) throw ArityError("grouped_attention: group out of range");
    const Matrix& k = keys[static_cast<std::size_t>(g)].value();
    Eigen::VectorXd logits = k * q.value().row(r).transpose() * scale;
    const double m = logits.maxCoeff();
    Eigen::VectorXd w = (logits.array() - m).exp().matrix();
    w /= w.sum();
    out.row(r) = w.transpose() * values[static_cast<std::size_t>(g)].value();
    weights[static_cast<std::size_t>(r)] = std::move(w);
  }
  if (weights_out) *weights_out = weights;

  std::vector<Var> inputs{q};
  inputs.insert(inputs.end(), keys.begin(), keys.end());
  inputs.insert(inputs.end(), values.begin(), values.end());
  const std::size_t ng = keys.size();
  std::vector<int> grp(group.begin(), group.end());
  return make_op(std::move(out), inputs, [weights = std::move(weights), grp, ng, scale](Node& n) {
    Node& nq = in(n, 0);
    Matrix gq = Matrix::Zero(nq.value.rows(), nq.value.cols());
    std::vector<Matrix> gk(ng), gv(ng);
    for (std::size_t g = 0; g < ng; ++g) {
      gk[g] = Matrix::Zero(in(n, 1 + g).value.rows(), in(n, 1 + g).value.cols());
      gv[g] = Matrix::Zero(in(n, 1 + ng + g).value.rows(), in(n, 1 + ng + g).value.cols());
    }
    for (Index r = 0; r < n.grad.rows(); ++r) {
      const auto g = static_cast<std::size_t>(grp[static_cast<std::size_t>(r)]);
      const Matrix& k = in(n, 1 + g).value;
      const Matrix& v = in(n, 1 + ng + g).value;
      const Eigen::VectorXd& w = weights[static_cast<std::size_t>(r)];
      const Eigen::RowVectorXd go = n.grad.row(r);
      gv[g] += w * go;
      const Eigen::VectorXd dw = v * go.transpose();
      const Eigen::VectorXd dl = w.cwiseProduct(dw.array().matrix() - Eigen::VectorXd::Constant(w.size(), w.dot(dw)));
      gq.row(r) += scale * (dl.transpose() * k);
      gk[g] += scale * dl * nq.value.row(r);
    }
    if (nq.requires_grad) nq.accumulate(gq);
    for (std::size_t g = 0; g < ng; ++g) {
      if (in(n, 1 + g).requires_grad) in(n, 1 + g).accumulate(gk[g]);
      if (in(n, 1 + ng + g).requires_grad) in(n, 1 + ng + g).accumulate(gv[g]);
    }
  });
}

}  // namespace morphgrasp::ad
