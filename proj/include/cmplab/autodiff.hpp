#pragma once

#include <algorithm>
#include <cmath>
#include <string>
#include <vector>

#include "cmplab/errors.hpp"
#include "cmplab/tensor.hpp"

namespace cmplab {

// Reverse-mode tape over dense tensors. Nodes are appended in forward
// order, so reverse insertion order is a valid reverse topological order;
// gradients accumulate additively when a node feeds several consumers.

using NodeId = int;

enum class Op {
  leaf,
  affine,
  relu,
  softmax_xent,
  apply_mask,
  add,
  sub,
  scale,
  matmul,
  matmul_nt,
  softmax_rows,
  mean_rows,
  l2_normalize,
  dot,
  sum,
  embed,
};

struct Node {
  Op op = Op::leaf;
  std::vector<NodeId> parents;
  Tensor value;
  Tensor grad;
  Tensor aux;             // mask constant, cached softmax, cached unit vector
  std::vector<int> ids;   // embedding row indices
  double factor = 0.0;    // scale multiplier / cached norm
  int target = -1;        // cross-entropy class index
};

class Graph {
 public:
  NodeId input(Tensor v) {
    Node n;
    n.value = std::move(v);
    nodes_.push_back(std::move(n));
    return static_cast<NodeId>(nodes_.size()) - 1;
  }

  NodeId record(Node n) {
    nodes_.push_back(std::move(n));
    return static_cast<NodeId>(nodes_.size()) - 1;
  }

  const Tensor& value(NodeId id) const { return nodes_[check(id)].value; }

  const Tensor& grad(NodeId id) const {
    const Node& n = nodes_[check(id)];
    if (n.grad.size() == 0) throw ContractError("gradient requested before backward()");
    return n.grad;
  }

  int size() const { return static_cast<int>(nodes_.size()); }

  Node& node(NodeId id) { return nodes_[check(id)]; }
  const Node& node(NodeId id) const { return nodes_[check(id)]; }

  // Populates gradients for every ancestor of `root`. A second call
  // without reset_grads() is a contract violation: gradients would
  // silently double-accumulate.
  void backward(NodeId root) {
    if (backward_done_) throw ContractError("backward() called twice without reset_grads()");
    Node& r = nodes_[check(root)];
    if (r.value.size() != 1)
      throw ContractError("backward root must be scalar, got shape " + r.value.shape_str());
    for (auto& n : nodes_) n.grad = Tensor(n.value.shape());
    r.grad[0] = 1.0;
    for (int id = root; id >= 0; --id) push_grad(id);
    backward_done_ = true;
  }

  void reset_grads() {
    for (auto& n : nodes_) n.grad = Tensor();
    backward_done_ = false;
  }

 private:
  size_t check(NodeId id) const {
    if (id < 0 || id >= static_cast<NodeId>(nodes_.size()))
      throw IndexError("node id " + std::to_string(id) + " out of range");
    return static_cast<size_t>(id);
  }

  void push_grad(NodeId id);

  std::vector<Node> nodes_;
  bool backward_done_ = false;
};

// ---- forward ops ----------------------------------------------------------

// y = x W + bias, bias broadcast over rows.
inline NodeId affine(Graph& g, NodeId x, NodeId w, NodeId bias) {
  const Tensor& xv = g.value(x);
  const Tensor& wv = g.value(w);
  const Tensor& bv = g.value(bias);
  if (xv.rank() != 2 || wv.rank() != 2 || xv.cols() != wv.rows())
    throw ShapeError("affine: shape mismatch " + xv.shape_str() + " vs " + wv.shape_str());
  if (bv.size() != wv.cols())
    throw ShapeError("affine: bias shape " + bv.shape_str() + " does not match " + wv.shape_str());
  int n = xv.rows(), k = xv.cols(), m = wv.cols();
  Node out;
  out.op = Op::affine;
  out.parents = {x, w, bias};
  out.value = Tensor({n, m});
  for (int i = 0; i < n; ++i)
    for (int j = 0; j < m; ++j) {
      double acc = bv[j];
      for (int a = 0; a < k; ++a) acc += xv.at(i, a) * wv.at(a, j);
      out.value.at(i, j) = acc;
    }
  return g.record(std::move(out));
}

inline NodeId relu(Graph& g, NodeId x) {
  Node out;
  out.op = Op::relu;
  out.parents = {x};
  const Tensor& xv = g.value(x);
  out.value = Tensor(xv.shape());
  for (int i = 0; i < xv.size(); ++i) out.value[i] = xv[i] > 0.0 ? xv[i] : 0.0;
  return g.record(std::move(out));
}

// Fused -log softmax(logits)[target], max-shifted. Logits are read flat.
inline NodeId softmax_cross_entropy(Graph& g, NodeId logits, int target) {
  const Tensor& lv = g.value(logits);
  if (target < 0 || target >= lv.size())
    throw IndexError("cross-entropy target " + std::to_string(target) + " out of range [0," +
                     std::to_string(lv.size()) + ")");
  int imax = 0;
  for (int i = 1; i < lv.size(); ++i)
    if (lv[i] > lv[imax]) imax = i;
  double mx = lv[imax];
  double rest = 0.0;  // sum of exp(x - mx) over the non-max entries; exp(0) = 1 handled via log1p
  for (int i = 0; i < lv.size(); ++i)
    if (i != imax) rest += std::exp(lv[i] - mx);
  Node out;
  out.op = Op::softmax_xent;
  out.parents = {logits};
  out.target = target;
  out.value = Tensor::scalar(std::log1p(rest) + (mx - lv[target]));
  out.aux = Tensor(lv.shape());
  for (int i = 0; i < lv.size(); ++i) out.aux[i] = std::exp(lv[i] - mx) / (1.0 + rest);
  return g.record(std::move(out));
}

// Elementwise product with a constant mask; no gradient flows into the mask.
inline NodeId apply_mask(Graph& g, NodeId x, Tensor mask) {
  const Tensor& xv = g.value(x);
  require_same_shape(xv, mask, "apply_mask");
  Node out;
  out.op = Op::apply_mask;
  out.parents = {x};
  out.value = Tensor(xv.shape());
  for (int i = 0; i < xv.size(); ++i) out.value[i] = xv[i] * mask[i];
  out.aux = std::move(mask);
  return g.record(std::move(out));
}

inline NodeId add(Graph& g, NodeId a, NodeId b) {
  const Tensor& av = g.value(a);
  const Tensor& bv = g.value(b);
  require_same_shape(av, bv, "add");
  Node out;
  out.op = Op::add;
  out.parents = {a, b};
  out.value = Tensor(av.shape());
  for (int i = 0; i < av.size(); ++i) out.value[i] = av[i] + bv[i];
  return g.record(std::move(out));
}

inline NodeId sub(Graph& g, NodeId a, NodeId b) {
  const Tensor& av = g.value(a);
  const Tensor& bv = g.value(b);
  require_same_shape(av, bv, "sub");
  Node out;
  out.op = Op::sub;
  out.parents = {a, b};
  out.value = Tensor(av.shape());
  for (int i = 0; i < av.size(); ++i) out.value[i] = av[i] - bv[i];
  return g.record(std::move(out));
}

inline NodeId scale(Graph& g, NodeId x, double k) {
  const Tensor& xv = g.value(x);
  Node out;
  out.op = Op::scale;
  out.parents = {x};
  out.factor = k;
  out.value = Tensor(xv.shape());
  for (int i = 0; i < xv.size(); ++i) out.value[i] = xv[i] * k;
  return g.record(std::move(out));
}

inline NodeId matmul(Graph& g, NodeId a, NodeId b) {
  const Tensor& av = g.value(a);
  const Tensor& bv = g.value(b);
  if (av.rank() != 2 || bv.rank() != 2 || av.cols() != bv.rows())
    throw ShapeError("matmul: shape mismatch " + av.shape_str() + " vs " + bv.shape_str());
  int n = av.rows(), k = av.cols(), m = bv.cols();
  Node out;
  out.op = Op::matmul;
  out.parents = {a, b};
  out.value = Tensor({n, m});
  for (int i = 0; i < n; ++i)
    for (int j = 0; j < m; ++j) {
      double acc = 0.0;
      for (int t = 0; t < k; ++t) acc += av.at(i, t) * bv.at(t, j);
      out.value.at(i, j) = acc;
    }
  return g.record(std::move(out));
}

// y = A Bᵀ with A [n,k], B [m,k].
inline NodeId matmul_nt(Graph& g, NodeId a, NodeId b) {
  const Tensor& av = g.value(a);
  const Tensor& bv = g.value(b);
  if (av.rank() != 2 || bv.rank() != 2 || av.cols() != bv.cols())
    throw ShapeError("matmul_nt: shape mismatch " + av.shape_str() + " vs " + bv.shape_str());
  int n = av.rows(), k = av.cols(), m = bv.rows();
  Node out;
  out.op = Op::matmul_nt;
  out.parents = {a, b};
  out.value = Tensor({n, m});
  for (int i = 0; i < n; ++i)
    for (int j = 0; j < m; ++j) {
      double acc = 0.0;
      for (int t = 0; t < k; ++t) acc += av.at(i, t) * bv.at(j, t);
      out.value.at(i, j) = acc;
    }
  return g.record(std::move(out));
}

inline NodeId softmax_rows(Graph& g, NodeId x) {
  const Tensor& xv = g.value(x);
  if (xv.rank() != 2) throw ShapeError("softmax_rows: expected rank-2, got " + xv.shape_str());
  Node out;
  out.op = Op::softmax_rows;
  out.parents = {x};
  out.value = Tensor(xv.shape());
  for (int i = 0; i < xv.rows(); ++i) {
    double mx = xv.at(i, 0);
    for (int j = 1; j < xv.cols(); ++j) mx = std::max(mx, xv.at(i, j));
    double z = 0.0;
    for (int j = 0; j < xv.cols(); ++j) z += std::exp(xv.at(i, j) - mx);
    for (int j = 0; j < xv.cols(); ++j) out.value.at(i, j) = std::exp(xv.at(i, j) - mx) / z;
  }
  out.aux = out.value;
  return g.record(std::move(out));
}

inline NodeId mean_rows(Graph& g, NodeId x) {
  const Tensor& xv = g.value(x);
  if (xv.rank() != 2) throw ShapeError("mean_rows: expected rank-2, got " + xv.shape_str());
  Node out;
  out.op = Op::mean_rows;
  out.parents = {x};
  out.value = Tensor({1, xv.cols()});
  for (int j = 0; j < xv.cols(); ++j) {
    double acc = 0.0;
    for (int i = 0; i < xv.rows(); ++i) acc += xv.at(i, j);
    out.value.at(0, j) = acc / xv.rows();
  }
  return g.record(std::move(out));
}

inline NodeId l2_normalize(Graph& g, NodeId x) {
  const Tensor& xv = g.value(x);
  double nsq = 0.0;
  for (int i = 0; i < xv.size(); ++i) nsq += xv[i] * xv[i];
  double norm = std::sqrt(nsq);
  if (!(norm > 1e-12)) throw NumericError("l2_normalize: vector norm too small");
  Node out;
  out.op = Op::l2_normalize;
  out.parents = {x};
  out.factor = norm;
  out.value = Tensor(xv.shape());
  for (int i = 0; i < xv.size(); ++i) out.value[i] = xv[i] / norm;
  out.aux = out.value;
  return g.record(std::move(out));
}

inline NodeId dot(Graph& g, NodeId a, NodeId b) {
  const Tensor& av = g.value(a);
  const Tensor& bv = g.value(b);
  if (av.size() != bv.size())
    throw ShapeError("dot: size mismatch " + av.shape_str() + " vs " + bv.shape_str());
  double acc = 0.0;
  for (int i = 0; i < av.size(); ++i) acc += av[i] * bv[i];
  Node out;
  out.op = Op::dot;
  out.parents = {a, b};
  out.value = Tensor::scalar(acc);
  return g.record(std::move(out));
}

inline NodeId sum(Graph& g, NodeId x) {
  const Tensor& xv = g.value(x);
  double acc = 0.0;
  for (int i = 0; i < xv.size(); ++i) acc += xv[i];
  Node out;
  out.op = Op::sum;
  out.parents = {x};
  out.value = Tensor::scalar(acc);
  return g.record(std::move(out));
}

// Row lookup: out[r] = table[ids[r]]. Gradient scatters into the table.
inline NodeId embed(Graph& g, NodeId table, std::vector<int> ids) {
  const Tensor& tv = g.value(table);
  if (tv.rank() != 2) throw ShapeError("embed: expected rank-2 table, got " + tv.shape_str());
  if (ids.empty()) throw ContractError("embed: empty id list");
  for (int id : ids)
    if (id < 0 || id >= tv.rows())
      throw IndexError("embed: id " + std::to_string(id) + " out of range [0," +
                       std::to_string(tv.rows()) + ")");
  Node out;
  out.op = Op::embed;
  out.parents = {table};
  out.value = Tensor({static_cast<int>(ids.size()), tv.cols()});
  for (size_t r = 0; r < ids.size(); ++r)
    for (int j = 0; j < tv.cols(); ++j) out.value.at(static_cast<int>(r), j) = tv.at(ids[r], j);
  out.ids = std::move(ids);
  return g.record(std::move(out));
}

// max(0, a - b) on scalars; subgradient at a == b is 0.
inline NodeId hinge(Graph& g, NodeId a, NodeId b) { return relu(g, sub(g, a, b)); }

// ---- backward -------------------------------------------------------------

inline void Graph::push_grad(NodeId id) {
  Node& n = nodes_[static_cast<size_t>(id)];
  const Tensor& go = n.grad;
  switch (n.op) {
    case Op::leaf:
      break;
    case Op::affine: {
      Node& x = nodes_[n.parents[0]];
      Node& w = nodes_[n.parents[1]];
      Node& b = nodes_[n.parents[2]];
      int rows = x.value.rows(), k = x.value.cols(), m = w.value.cols();
      for (int i = 0; i < rows; ++i)
        for (int a = 0; a < k; ++a) {
          double acc = 0.0;
          for (int j = 0; j < m; ++j) acc += go.at(i, j) * w.value.at(a, j);
          x.grad.at(i, a) += acc;
        }
      for (int a = 0; a < k; ++a)
        for (int j = 0; j < m; ++j) {
          double acc = 0.0;
          for (int i = 0; i < rows; ++i) acc += x.value.at(i, a) * go.at(i, j);
          w.grad.at(a, j) += acc;
        }
      for (int j = 0; j < m; ++j) {
        double acc = 0.0;
        for (int i = 0; i < rows; ++i) acc += go.at(i, j);
        b.grad[j] += acc;
      }
      break;
    }
    case Op::relu: {
      Node& x = nodes_[n.parents[0]];
      for (int i = 0; i < x.value.size(); ++i)
        if (x.value[i] > 0.0) x.grad[i] += go[i];
      break;
    }
    case Op::softmax_xent: {
      Node& x = nodes_[n.parents[0]];
      double g0 = go[0];
      for (int i = 0; i < x.value.size(); ++i)
        x.grad[i] += g0 * (n.aux[i] - (i == n.target ? 1.0 : 0.0));
      break;
    }
    case Op::apply_mask: {
      Node& x = nodes_[n.parents[0]];
      for (int i = 0; i < x.value.size(); ++i) x.grad[i] += n.aux[i] * go[i];
      break;
    }
    case Op::add: {
      Node& a = nodes_[n.parents[0]];
      Node& b = nodes_[n.parents[1]];
      for (int i = 0; i < go.size(); ++i) {
        a.grad[i] += go[i];
        b.grad[i] += go[i];
      }
      break;
    }
    case Op::sub: {
      Node& a = nodes_[n.parents[0]];
      Node& b = nodes_[n.parents[1]];
      for (int i = 0; i < go.size(); ++i) {
        a.grad[i] += go[i];
        b.grad[i] -= go[i];
      }
      break;
    }
    case Op::scale: {
      Node& x = nodes_[n.parents[0]];
      for (int i = 0; i < go.size(); ++i) x.grad[i] += n.factor * go[i];
      break;
    }
    case Op::matmul: {
      Node& a = nodes_[n.parents[0]];
      Node& b = nodes_[n.parents[1]];
      int rows = a.value.rows(), k = a.value.cols(), m = b.value.cols();
      for (int i = 0; i < rows; ++i)
        for (int t = 0; t < k; ++t) {
          double acc = 0.0;
          for (int j = 0; j < m; ++j) acc += go.at(i, j) * b.value.at(t, j);
          a.grad.at(i, t) += acc;
        }
      for (int t = 0; t < k; ++t)
        for (int j = 0; j < m; ++j) {
          double acc = 0.0;
          for (int i = 0; i < rows; ++i) acc += a.value.at(i, t) * go.at(i, j);
          b.grad.at(t, j) += acc;
        }
      break;
    }
    case Op::matmul_nt: {
      Node& a = nodes_[n.parents[0]];
      Node& b = nodes_[n.parents[1]];
      int rows = a.value.rows(), k = a.value.cols(), m = b.value.rows();
      for (int i = 0; i < rows; ++i)
        for (int t = 0; t < k; ++t) {
          double acc = 0.0;
          for (int j = 0; j < m; ++j) acc += go.at(i, j) * b.value.at(j, t);
          a.grad.at(i, t) += acc;
        }
      for (int j = 0; j < m; ++j)
        for (int t = 0; t < k; ++t) {
          double acc = 0.0;
          for (int i = 0; i < rows; ++i) acc += go.at(i, j) * a.value.at(i, t);
          b.grad.at(j, t) += acc;
        }
      break;
    }
    case Op::softmax_rows: {
      Node& x = nodes_[n.parents[0]];
      for (int i = 0; i < x.value.rows(); ++i) {
        double s = 0.0;
        for (int j = 0; j < x.value.cols(); ++j) s += go.at(i, j) * n.aux.at(i, j);
        for (int j = 0; j < x.value.cols(); ++j)
          x.grad.at(i, j) += n.aux.at(i, j) * (go.at(i, j) - s);
      }
      break;
    }
    case Op::mean_rows: {
      Node& x = nodes_[n.parents[0]];
      double inv = 1.0 / x.value.rows();
      for (int i = 0; i < x.value.rows(); ++i)
        for (int j = 0; j < x.value.cols(); ++j) x.grad.at(i, j) += go.at(0, j) * inv;
      break;
    }
    case Op::l2_normalize: {
      Node& x = nodes_[n.parents[0]];
      double s = 0.0;
      for (int i = 0; i < go.size(); ++i) s += go[i] * n.aux[i];
      for (int i = 0; i < go.size(); ++i) x.grad[i] += (go[i] - s * n.aux[i]) / n.factor;
      break;
    }
    case Op::dot: {
      Node& a = nodes_[n.parents[0]];
      Node& b = nodes_[n.parents[1]];
      double g0 = go[0];
      for (int i = 0; i < a.value.size(); ++i) {
        a.grad[i] += g0 * b.value[i];
        b.grad[i] += g0 * a.value[i];
      }
      break;
    }
    case Op::sum: {
      Node& x = nodes_[n.parents[0]];
      double g0 = go[0];
      for (int i = 0; i < x.value.size(); ++i) x.grad[i] += g0;
      break;
    }
    case Op::embed: {
      Node& t = nodes_[n.parents[0]];
      for (size_t r = 0; r < n.ids.size(); ++r)
        for (int j = 0; j < t.value.cols(); ++j)
          t.grad.at(n.ids[r], j) += go.at(static_cast<int>(r), j);
      break;
    }
  }
}

}  // namespace cmplab
