// Copyright (c) 2026 The cuctts Authors
//
// Licensed under the Apache License, Version 2.0 (the "License");
// you may not use this file except in compliance with the License.
// You may obtain a copy of the License at
//
//     http://www.apache.org/licenses/LICENSE-2.0
//
// Unless required by applicable law or agreed to in writing, software
// distributed under the License is distributed on an "AS IS" BASIS,
// WITHOUT WARRANTIES OR CONDITIONS OF ANY KIND, either express or implied.
// See the License for the specific language governing permissions and
// limitations under the License.

// Minimal reverse-mode automatic differentiation over row-major 2-D matrices.
//
// Every tensor is a [rows x cols] matrix; sequence models use rows for time
// (phonemes or frames) and columns for channels. A Tensor is a cheap handle
// onto a shared graph node. Operations record a backward closure only when
// gradient recording is enabled and at least one input requires a gradient.

#ifndef CUCTTS_AUTOGRAD_HPP_
#define CUCTTS_AUTOGRAD_HPP_

#include <Eigen/Dense>

#include <cmath>
#include <functional>
#include <memory>
#include <random>
#include <span>
#include <stdexcept>
#include <string>
#include <unordered_set>
#include <vector>

namespace cuctts {

template <typename S>
using Matrix = Eigen::Matrix<S, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;
template <typename S>
using RowVector = Eigen::Matrix<S, 1, Eigen::Dynamic, Eigen::RowMajor>;

class ShapeError : public std::invalid_argument {
 public:
  using std::invalid_argument::invalid_argument;
};

namespace ag {

namespace detail {
inline bool& grad_enabled_flag() {
  thread_local bool enabled = true;
  return enabled;
}
}  // namespace detail

inline bool grad_enabled() { return detail::grad_enabled_flag(); }

/// Disables graph recording for its lifetime (inference paths).
class NoGradGuard {
 public:
  NoGradGuard() : previous_(detail::grad_enabled_flag()) { detail::grad_enabled_flag() = false; }
  ~NoGradGuard() { detail::grad_enabled_flag() = previous_; }
  NoGradGuard(const NoGradGuard&) = delete;
  NoGradGuard& operator=(const NoGradGuard&) = delete;

 private:
  bool previous_;
};

template <typename S>
struct Node {
  Matrix<S> value;
  Matrix<S> grad;
  bool requires_grad = false;
  std::vector<std::shared_ptr<Node>> parents;
  std::function<void(Node&)> backward_fn;

  void accumulate(const Matrix<S>& g) {
    if (grad.size() == 0) {
      grad = g;
    } else {
      grad += g;
    }
  }
};

template <typename S>
class Tensor {
 public:
  using Scalar = S;

  Tensor() = default;
  explicit Tensor(Matrix<S> value, bool requires_grad = false)
      : node_(std::make_shared<Node<S>>()) {
    node_->value = std::move(value);
    node_->requires_grad = requires_grad;
  }

  static Tensor constant(Matrix<S> value) { return Tensor(std::move(value), false); }
  static Tensor zeros(Eigen::Index rows, Eigen::Index cols) {
    return Tensor(Matrix<S>::Zero(rows, cols));
  }

  bool defined() const { return node_ != nullptr; }
  const Matrix<S>& value() const { return node_->value; }
  Matrix<S>& mutable_value() { return node_->value; }
  const Matrix<S>& grad() const { return node_->grad; }
  bool has_grad() const { return node_->grad.size() != 0; }
  void zero_grad() { node_->grad.resize(0, 0); }
  bool requires_grad() const { return node_ && node_->requires_grad; }
  Eigen::Index rows() const { return node_->value.rows(); }
  Eigen::Index cols() const { return node_->value.cols(); }
  S item() const {
    if (rows() != 1 || cols() != 1) throw ShapeError("item() on non-scalar tensor");
    return node_->value(0, 0);
  }
  /// Same value, cut from the graph.
  Tensor detach() const { return Tensor(node_->value, false); }

  const std::shared_ptr<Node<S>>& node() const { return node_; }

 private:
  std::shared_ptr<Node<S>> node_;
};

namespace detail {

template <typename S>
Tensor<S> make_result(Matrix<S> value, std::initializer_list<Tensor<S>> inputs,
                      std::function<void(Node<S>&)> backward) {
  Tensor<S> out(std::move(value));
  if (!grad_enabled()) return out;
  bool any = false;
  for (const auto& t : inputs) any = any || t.requires_grad();
  if (!any) return out;
  auto& n = *out.node();
  n.requires_grad = true;
  for (const auto& t : inputs) n.parents.push_back(t.node());
  n.backward_fn = std::move(backward);
  return out;
}

template <typename S>
Tensor<S> make_result(Matrix<S> value, const std::vector<Tensor<S>>& inputs,
                      std::function<void(Node<S>&)> backward) {
  Tensor<S> out(std::move(value));
  if (!grad_enabled()) return out;
  bool any = false;
  for (const auto& t : inputs) any = any || t.requires_grad();
  if (!any) return out;
  auto& n = *out.node();
  n.requires_grad = true;
  for (const auto& t : inputs) n.parents.push_back(t.node());
  n.backward_fn = std::move(backward);
  return out;
}

template <typename S>
void push(const std::shared_ptr<Node<S>>& p, const Matrix<S>& g) {
  if (p->requires_grad) p->accumulate(g);
}

inline void check(bool ok, const std::string& what) {
  if (!ok) throw ShapeError(what);
}

}  // namespace detail

/// Runs reverse accumulation from a scalar root. Interior gradients are
/// released afterwards; leaf gradients (parameters) accumulate.
template <typename S>
void backward(const Tensor<S>& root) {
  detail::check(root.rows() == 1 && root.cols() == 1, "backward() requires a scalar root");
  if (!root.requires_grad()) return;
  std::vector<Node<S>*> order;
  std::unordered_set<Node<S>*> seen;
  std::vector<std::pair<Node<S>*, std::size_t>> stack;
  stack.emplace_back(root.node().get(), 0);
  seen.insert(root.node().get());
  while (!stack.empty()) {
    auto& [node, next] = stack.back();
    if (next < node->parents.size()) {
      Node<S>* p = node->parents[next++].get();
      if (p->requires_grad && !seen.count(p)) {
        seen.insert(p);
        stack.emplace_back(p, 0);
      }
    } else {
      order.push_back(node);
      stack.pop_back();
    }
  }
  root.node()->accumulate(Matrix<S>::Ones(1, 1));
  for (auto it = order.rbegin(); it != order.rend(); ++it) {
    Node<S>* n = *it;
    if (n->backward_fn && n->grad.size() != 0) {
      n->backward_fn(*n);
      n->grad.resize(0, 0);
    }
  }
}

// ---------------------------------------------------------------------------
// Linear algebra

template <typename S>
Tensor<S> matmul(const Tensor<S>& a, const Tensor<S>& b) {
  detail::check(a.cols() == b.rows(), "matmul: inner dimensions differ");
  auto pa = a.node(), pb = b.node();
  return detail::make_result<S>(a.value() * b.value(), {a, b}, [pa, pb](Node<S>& n) {
    if (pa->requires_grad) pa->accumulate(n.grad * pb->value.transpose());
    if (pb->requires_grad) pb->accumulate(pa->value.transpose() * n.grad);
  });
}

/// a * b^T
template <typename S>
Tensor<S> matmul_nt(const Tensor<S>& a, const Tensor<S>& b) {
  detail::check(a.cols() == b.cols(), "matmul_nt: column counts differ");
  auto pa = a.node(), pb = b.node();
  return detail::make_result<S>(a.value() * b.value().transpose(), {a, b},
                                [pa, pb](Node<S>& n) {
                                  if (pa->requires_grad) pa->accumulate(n.grad * pb->value);
                                  if (pb->requires_grad)
                                    pb->accumulate(n.grad.transpose() * pa->value);
                                });
}

// ---------------------------------------------------------------------------
// Elementwise

template <typename S>
Tensor<S> add(const Tensor<S>& a, const Tensor<S>& b) {
  detail::check(a.rows() == b.rows() && a.cols() == b.cols(), "add: shape mismatch");
  auto pa = a.node(), pb = b.node();
  return detail::make_result<S>(a.value() + b.value(), {a, b}, [pa, pb](Node<S>& n) {
    detail::push(pa, n.grad);
    detail::push(pb, n.grad);
  });
}

template <typename S>
Tensor<S> sub(const Tensor<S>& a, const Tensor<S>& b) {
  detail::check(a.rows() == b.rows() && a.cols() == b.cols(), "sub: shape mismatch");
  auto pa = a.node(), pb = b.node();
  return detail::make_result<S>(a.value() - b.value(), {a, b}, [pa, pb](Node<S>& n) {
    detail::push(pa, n.grad);
    if (pb->requires_grad) pb->accumulate(-n.grad);
  });
}

template <typename S>
Tensor<S> mul(const Tensor<S>& a, const Tensor<S>& b) {
  detail::check(a.rows() == b.rows() && a.cols() == b.cols(), "mul: shape mismatch");
  auto pa = a.node(), pb = b.node();
  return detail::make_result<S>(a.value().cwiseProduct(b.value()), {a, b},
                                [pa, pb](Node<S>& n) {
                                  if (pa->requires_grad)
                                    pa->accumulate(n.grad.cwiseProduct(pb->value));
                                  if (pb->requires_grad)
                                    pb->accumulate(n.grad.cwiseProduct(pa->value));
                                });
}

template <typename S>
Tensor<S> scale(const Tensor<S>& a, S s) {
  auto pa = a.node();
  return detail::make_result<S>(a.value() * s, {a},
                                [pa, s](Node<S>& n) { detail::push(pa, Matrix<S>(n.grad * s)); });
}

template <typename S>
Tensor<S> add_scalar(const Tensor<S>& a, S s) {
  auto pa = a.node();
  Matrix<S> v = a.value().array() + s;
  return detail::make_result<S>(std::move(v), {a}, [pa](Node<S>& n) { detail::push(pa, n.grad); });
}

/// a + row, with row [1 x cols] broadcast over rows.
template <typename S>
Tensor<S> add_row(const Tensor<S>& a, const Tensor<S>& row) {
  detail::check(row.rows() == 1 && row.cols() == a.cols(), "add_row: bias shape mismatch");
  auto pa = a.node(), pr = row.node();
  Matrix<S> v = a.value().rowwise() + RowVector<S>(row.value());
  return detail::make_result<S>(std::move(v), {a, row}, [pa, pr](Node<S>& n) {
    detail::push(pa, n.grad);
    if (pr->requires_grad) pr->accumulate(Matrix<S>(n.grad.colwise().sum()));
  });
}

/// a * row elementwise, row broadcast over rows.
template <typename S>
Tensor<S> mul_row(const Tensor<S>& a, const Tensor<S>& row) {
  detail::check(row.rows() == 1 && row.cols() == a.cols(), "mul_row: shape mismatch");
  auto pa = a.node(), pr = row.node();
  Matrix<S> v = a.value().array().rowwise() * RowVector<S>(row.value()).array();
  return detail::make_result<S>(std::move(v), {a, row}, [pa, pr](Node<S>& n) {
    if (pa->requires_grad) {
      Matrix<S> g = n.grad.array().rowwise() * RowVector<S>(pr->value).array();
      pa->accumulate(g);
    }
    if (pr->requires_grad)
      pr->accumulate(Matrix<S>(n.grad.cwiseProduct(pa->value).colwise().sum()));
  });
}

template <typename S>
Tensor<S> relu(const Tensor<S>& a) {
  auto pa = a.node();
  Matrix<S> v = a.value().cwiseMax(S(0));
  return detail::make_result<S>(std::move(v), {a}, [pa](Node<S>& n) {
    Matrix<S> g = (pa->value.array() > S(0)).select(n.grad, S(0));
    pa->accumulate(g);
  });
}

template <typename S>
Tensor<S> exp(const Tensor<S>& a) {
  auto pa = a.node();
  Matrix<S> v = a.value().array().exp();
  auto out = detail::make_result<S>(v, {a}, nullptr);
  if (out.requires_grad()) {
    Matrix<S> saved = v;
    out.node()->backward_fn = [pa, saved](Node<S>& n) {
      pa->accumulate(Matrix<S>(n.grad.cwiseProduct(saved)));
    };
  }
  return out;
}

template <typename S>
Tensor<S> square(const Tensor<S>& a) {
  auto pa = a.node();
  return detail::make_result<S>(a.value().cwiseAbs2(), {a}, [pa](Node<S>& n) {
    pa->accumulate(Matrix<S>(S(2) * n.grad.cwiseProduct(pa->value)));
  });
}

template <typename S>
Tensor<S> abs(const Tensor<S>& a) {
  auto pa = a.node();
  return detail::make_result<S>(a.value().cwiseAbs(), {a}, [pa](Node<S>& n) {
    Matrix<S> sign = pa->value.unaryExpr([](S x) { return S((x > 0) - (x < 0)); });
    pa->accumulate(Matrix<S>(n.grad.cwiseProduct(sign)));
  });
}

/// Clamps into [lo, hi]; the gradient is zero where the clamp is active.
template <typename S>
Tensor<S> clamp(const Tensor<S>& a, S lo, S hi) {
  auto pa = a.node();
  Matrix<S> v = a.value().cwiseMax(lo).cwiseMin(hi);
  return detail::make_result<S>(std::move(v), {a}, [pa, lo, hi](Node<S>& n) {
    Matrix<S> g = ((pa->value.array() >= lo) && (pa->value.array() <= hi)).select(n.grad, S(0));
    pa->accumulate(g);
  });
}

// ---------------------------------------------------------------------------
// Reductions

template <typename S>
Tensor<S> sum(const Tensor<S>& a) {
  auto pa = a.node();
  Matrix<S> v(1, 1);
  v(0, 0) = a.value().sum();
  return detail::make_result<S>(std::move(v), {a}, [pa](Node<S>& n) {
    pa->accumulate(Matrix<S>::Constant(pa->value.rows(), pa->value.cols(), n.grad(0, 0)));
  });
}

template <typename S>
Tensor<S> mean(const Tensor<S>& a) {
  detail::check(a.value().size() > 0, "mean of empty tensor");
  return scale(sum(a), S(1) / S(a.value().size()));
}

/// Column means: [rows x cols] -> [1 x cols].
template <typename S>
Tensor<S> mean_rows(const Tensor<S>& a) {
  detail::check(a.rows() > 0, "mean_rows of empty tensor");
  auto pa = a.node();
  Matrix<S> v = a.value().colwise().mean();
  return detail::make_result<S>(std::move(v), {a}, [pa](Node<S>& n) {
    Matrix<S> g = n.grad.replicate(pa->value.rows(), 1) / S(pa->value.rows());
    pa->accumulate(g);
  });
}

/// [1 x cols] -> [rows x cols].
template <typename S>
Tensor<S> broadcast_rows(const Tensor<S>& row, Eigen::Index rows) {
  detail::check(row.rows() == 1, "broadcast_rows expects a single row");
  auto pr = row.node();
  return detail::make_result<S>(row.value().replicate(rows, 1), {row}, [pr](Node<S>& n) {
    pr->accumulate(Matrix<S>(n.grad.colwise().sum()));
  });
}

// ---------------------------------------------------------------------------
// Structural

template <typename S>
Tensor<S> concat_cols(const std::vector<Tensor<S>>& parts) {
  detail::check(!parts.empty(), "concat_cols of nothing");
  const Eigen::Index rows = parts.front().rows();
  Eigen::Index cols = 0;
  for (const auto& p : parts) {
    detail::check(p.rows() == rows, "concat_cols: row counts differ");
    cols += p.cols();
  }
  Matrix<S> v(rows, cols);
  Eigen::Index c = 0;
  std::vector<std::shared_ptr<Node<S>>> nodes;
  std::vector<Eigen::Index> offsets;
  for (const auto& p : parts) {
    v.middleCols(c, p.cols()) = p.value();
    nodes.push_back(p.node());
    offsets.push_back(c);
    c += p.cols();
  }
  return detail::make_result<S>(std::move(v), parts, [nodes, offsets](Node<S>& n) {
    for (std::size_t i = 0; i < nodes.size(); ++i) {
      if (nodes[i]->requires_grad)
        nodes[i]->accumulate(Matrix<S>(n.grad.middleCols(offsets[i], nodes[i]->value.cols())));
    }
  });
}

template <typename S>
Tensor<S> slice_cols(const Tensor<S>& a, Eigen::Index start, Eigen::Index count) {
  detail::check(start >= 0 && count >= 0 && start + count <= a.cols(), "slice_cols out of range");
  auto pa = a.node();
  return detail::make_result<S>(Matrix<S>(a.value().middleCols(start, count)), {a},
                                [pa, start, count](Node<S>& n) {
                                  Matrix<S> g = Matrix<S>::Zero(pa->value.rows(), pa->value.cols());
                                  g.middleCols(start, count) = n.grad;
                                  pa->accumulate(g);
                                });
}

/// Output row i is a[index[i]]. Gradients scatter-add back.
template <typename S>
Tensor<S> gather_rows(const Tensor<S>& a, std::span<const int> index) {
  auto pa = a.node();
  Matrix<S> v(static_cast<Eigen::Index>(index.size()), a.cols());
  for (std::size_t i = 0; i < index.size(); ++i) {
    detail::check(index[i] >= 0 && index[i] < a.rows(), "gather_rows index out of range");
    v.row(static_cast<Eigen::Index>(i)) = a.value().row(index[i]);
  }
  std::vector<int> idx(index.begin(), index.end());
  return detail::make_result<S>(std::move(v), {a}, [pa, idx](Node<S>& n) {
    Matrix<S> g = Matrix<S>::Zero(pa->value.rows(), pa->value.cols());
    for (std::size_t i = 0; i < idx.size(); ++i) g.row(idx[i]) += n.grad.row(static_cast<Eigen::Index>(i));
    pa->accumulate(g);
  });
}

/// Zero-padded sliding windows: [T x C] -> [T x kernel*C]; row t holds
/// frames t-pad .. t-pad+kernel-1 with pad = (kernel-1)/2.
template <typename S>
Tensor<S> unfold(const Tensor<S>& a, int kernel) {
  detail::check(kernel >= 1 && kernel % 2 == 1, "unfold: kernel must be odd and positive");
  const Eigen::Index T = a.rows(), C = a.cols();
  const int pad = (kernel - 1) / 2;
  Matrix<S> v = Matrix<S>::Zero(T, kernel * C);
  for (Eigen::Index t = 0; t < T; ++t) {
    for (int k = 0; k < kernel; ++k) {
      const Eigen::Index src = t - pad + k;
      if (src >= 0 && src < T) v.block(t, k * C, 1, C) = a.value().row(src);
    }
  }
  auto pa = a.node();
  return detail::make_result<S>(std::move(v), {a}, [pa, kernel, pad](Node<S>& n) {
    const Eigen::Index T = pa->value.rows(), C = pa->value.cols();
    Matrix<S> g = Matrix<S>::Zero(T, C);
    for (Eigen::Index t = 0; t < T; ++t) {
      for (int k = 0; k < kernel; ++k) {
        const Eigen::Index src = t - pad + k;
        if (src >= 0 && src < T) g.row(src) += n.grad.block(t, k * C, 1, C);
      }
    }
    pa->accumulate(g);
  });
}

// ---------------------------------------------------------------------------
// Normalization and attention primitives

/// Row-wise softmax. `additive_mask`, when non-empty, is added to the logits
/// before normalization (use a large negative value to exclude entries).
template <typename S>
Tensor<S> softmax_rows(const Tensor<S>& a, const Matrix<S>& additive_mask = Matrix<S>()) {
  Matrix<S> logits = a.value();
  if (additive_mask.size() != 0) {
    detail::check(additive_mask.rows() == logits.rows() && additive_mask.cols() == logits.cols(),
                  "softmax_rows: mask shape mismatch");
    logits += additive_mask;
  }
  Matrix<S> p(logits.rows(), logits.cols());
  for (Eigen::Index r = 0; r < logits.rows(); ++r) {
    const S m = logits.row(r).maxCoeff();
    p.row(r) = (logits.row(r).array() - m).exp();
    p.row(r) /= p.row(r).sum();
  }
  auto pa = a.node();
  auto out = detail::make_result<S>(p, {a}, nullptr);
  if (out.requires_grad()) {
    out.node()->backward_fn = [pa, p](Node<S>& n) {
      Matrix<S> g(p.rows(), p.cols());
      for (Eigen::Index r = 0; r < p.rows(); ++r) {
        const S dot = n.grad.row(r).dot(p.row(r));
        g.row(r) = p.row(r).cwiseProduct((n.grad.row(r).array() - dot).matrix());
      }
      pa->accumulate(g);
    };
  }
  return out;
}

/// Layer normalization over columns with learned gain and bias rows.
template <typename S>
Tensor<S> layer_norm(const Tensor<S>& a, const Tensor<S>& gamma, const Tensor<S>& beta,
                     S eps = S(1e-5)) {
  const Eigen::Index R = a.rows(), C = a.cols();
  detail::check(gamma.cols() == C && beta.cols() == C, "layer_norm: parameter width mismatch");
  Matrix<S> xhat(R, C);
  Eigen::Matrix<S, Eigen::Dynamic, 1> inv_std(R);
  for (Eigen::Index r = 0; r < R; ++r) {
    const S mu = a.value().row(r).mean();
    const S var = (a.value().row(r).array() - mu).square().mean();
    inv_std(r) = S(1) / std::sqrt(var + eps);
    xhat.row(r) = (a.value().row(r).array() - mu) * inv_std(r);
  }
  Matrix<S> v = (xhat.array().rowwise() * RowVector<S>(gamma.value()).array()).rowwise() +
                RowVector<S>(beta.value()).array();
  auto pa = a.node(), pg = gamma.node(), pb = beta.node();
  auto out = detail::make_result<S>(std::move(v), {a, gamma, beta}, nullptr);
  if (out.requires_grad()) {
    out.node()->backward_fn = [pa, pg, pb, xhat, inv_std](Node<S>& n) {
      const Eigen::Index C = xhat.cols();
      if (pg->requires_grad) pg->accumulate(Matrix<S>(n.grad.cwiseProduct(xhat).colwise().sum()));
      if (pb->requires_grad) pb->accumulate(Matrix<S>(n.grad.colwise().sum()));
      if (pa->requires_grad) {
        Matrix<S> dxhat = n.grad.array().rowwise() * RowVector<S>(pg->value).array();
        Matrix<S> g(xhat.rows(), C);
        for (Eigen::Index r = 0; r < xhat.rows(); ++r) {
          const S m1 = dxhat.row(r).mean();
          const S m2 = dxhat.row(r).dot(xhat.row(r)) / S(C);
          g.row(r) = (dxhat.row(r).array() - m1 - xhat.row(r).array() * m2) * inv_std(r);
        }
        pa->accumulate(g);
      }
    };
  }
  return out;
}

/// Inverted dropout with an explicit random stream. Identity when p == 0.
template <typename S, typename Rng>
Tensor<S> dropout(const Tensor<S>& a, double p, Rng& rng) {
  if (p <= 0.0) return a;
  if (p >= 1.0) throw std::invalid_argument("dropout probability must be < 1");
  std::bernoulli_distribution keep(1.0 - p);
  Matrix<S> mask(a.rows(), a.cols());
  const S kept = S(1.0 / (1.0 - p));
  for (Eigen::Index i = 0; i < mask.size(); ++i) mask.data()[i] = keep(rng) ? kept : S(0);
  return mul(a, Tensor<S>::constant(std::move(mask)));
}

}  // namespace ag
}  // namespace cuctts

#endif  // CUCTTS_AUTOGRAD_HPP_
