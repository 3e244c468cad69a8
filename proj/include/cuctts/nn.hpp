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

// Neural building blocks on top of the autograd tensors: a named parameter
// store, linear and width-k convolution layers, layer norm, multi-head
// attention and the feed-forward Transformer block.

#ifndef CUCTTS_NN_HPP_
#define CUCTTS_NN_HPP_

#include <cmath>
#include <cstdint>
#include <map>
#include <random>
#include <string>
#include <utility>
#include <vector>

#include "cuctts/autograd.hpp"

namespace cuctts::nn {

using ag::Tensor;

/// Ordered registry of trainable tensors keyed by module path.
template <typename S>
class ParamStore {
 public:
  explicit ParamStore(std::uint64_t seed = 0) : rng_(seed) {}

  Tensor<S> add(const std::string& name, Matrix<S> init) {
    if (index_.count(name)) throw std::invalid_argument("duplicate parameter name: " + name);
    index_[name] = params_.size();
    params_.emplace_back(name, Tensor<S>(std::move(init), true));
    return params_.back().second;
  }

  Tensor<S> xavier(const std::string& name, Eigen::Index fan_in, Eigen::Index fan_out,
                   Eigen::Index rows, Eigen::Index cols) {
    const double bound = std::sqrt(6.0 / static_cast<double>(fan_in + fan_out));
    std::uniform_real_distribution<double> u(-bound, bound);
    Matrix<S> m(rows, cols);
    for (Eigen::Index i = 0; i < m.size(); ++i) m.data()[i] = static_cast<S>(u(rng_));
    return add(name, std::move(m));
  }

  Tensor<S> normal(const std::string& name, Eigen::Index rows, Eigen::Index cols, double stddev) {
    std::normal_distribution<double> nd(0.0, stddev);
    Matrix<S> m(rows, cols);
    for (Eigen::Index i = 0; i < m.size(); ++i) m.data()[i] = static_cast<S>(nd(rng_));
    return add(name, std::move(m));
  }

  Tensor<S> zeros(const std::string& name, Eigen::Index rows, Eigen::Index cols) {
    return add(name, Matrix<S>::Zero(rows, cols));
  }
  Tensor<S> ones(const std::string& name, Eigen::Index rows, Eigen::Index cols) {
    return add(name, Matrix<S>::Ones(rows, cols));
  }

  const std::vector<std::pair<std::string, Tensor<S>>>& params() const { return params_; }
  std::vector<std::pair<std::string, Tensor<S>>>& params() { return params_; }

  bool contains(const std::string& name) const { return index_.count(name) != 0; }
  Tensor<S>& at(const std::string& name) {
    auto it = index_.find(name);
    if (it == index_.end()) throw std::out_of_range("no parameter named " + name);
    return params_[it->second].second;
  }

  std::size_t count() const {
    std::size_t n = 0;
    for (const auto& [_, t] : params_) n += static_cast<std::size_t>(t.value().size());
    return n;
  }
  std::size_t count_with_prefix(const std::string& prefix) const {
    std::size_t n = 0;
    for (const auto& [name, t] : params_)
      if (name.rfind(prefix, 0) == 0) n += static_cast<std::size_t>(t.value().size());
    return n;
  }

  void zero_grad() {
    for (auto& [_, t] : params_) t.zero_grad();
  }

 private:
  std::mt19937_64 rng_;
  std::vector<std::pair<std::string, Tensor<S>>> params_;
  std::map<std::string, std::size_t> index_;
};

template <typename S>
class Linear {
 public:
  Linear() = default;
  Linear(ParamStore<S>& ps, const std::string& name, Eigen::Index in, Eigen::Index out,
         bool bias = true)
      : weight_(ps.xavier(name + ".weight", in, out, in, out)) {
    if (bias) bias_ = ps.zeros(name + ".bias", 1, out);
  }

  Tensor<S> operator()(const Tensor<S>& x) const {
    auto y = ag::matmul(x, weight_);
    return bias_.defined() ? ag::add_row(y, bias_) : y;
  }

  const Tensor<S>& weight() const { return weight_; }
  const Tensor<S>& bias() const { return bias_; }

 private:
  Tensor<S> weight_;
  Tensor<S> bias_;
};

/// 1-D convolution along rows with "same" zero padding.
/// Weight layout is [kernel*in x out] matching ag::unfold.
template <typename S>
class Conv1d {
 public:
  Conv1d() = default;
  Conv1d(ParamStore<S>& ps, const std::string& name, Eigen::Index in, Eigen::Index out, int kernel)
      : kernel_(kernel),
        weight_(ps.xavier(name + ".weight", in * kernel, out, in * kernel, out)),
        bias_(ps.zeros(name + ".bias", 1, out)) {}

  Tensor<S> operator()(const Tensor<S>& x) const {
    auto cols = kernel_ == 1 ? x : ag::unfold(x, kernel_);
    return ag::add_row(ag::matmul(cols, weight_), bias_);
  }

  int kernel() const { return kernel_; }

 private:
  int kernel_ = 1;
  Tensor<S> weight_;
  Tensor<S> bias_;
};

template <typename S>
class LayerNorm {
 public:
  LayerNorm() = default;
  LayerNorm(ParamStore<S>& ps, const std::string& name, Eigen::Index dim)
      : gamma_(ps.ones(name + ".gamma", 1, dim)), beta_(ps.zeros(name + ".beta", 1, dim)) {}

  Tensor<S> operator()(const Tensor<S>& x) const { return ag::layer_norm(x, gamma_, beta_); }

 private:
  Tensor<S> gamma_;
  Tensor<S> beta_;
};

/// Per-head attention weights from the most recent forward call.
template <typename S>
struct AttentionTrace {
  std::vector<Matrix<S>> weights;  // one [queries x keys] matrix per head
};

/// Scaled dot-product multi-head attention with separate query and key/value
/// input widths. Output width is `model_dim`.
template <typename S>
class MultiHeadAttention {
 public:
  MultiHeadAttention() = default;
  MultiHeadAttention(ParamStore<S>& ps, const std::string& name, Eigen::Index query_dim,
                     Eigen::Index kv_dim, Eigen::Index model_dim, int heads)
      : heads_(heads),
        model_dim_(model_dim),
        wq_(ps, name + ".wq", query_dim, model_dim),
        wk_(ps, name + ".wk", kv_dim, model_dim),
        wv_(ps, name + ".wv", kv_dim, model_dim),
        wo_(ps, name + ".wo", model_dim, model_dim) {
    if (heads <= 0 || model_dim % heads != 0)
      throw std::invalid_argument(name + ": model_dim must be divisible by heads");
  }

  /// `key_mask[j] == true` excludes key j for every query.
  Tensor<S> operator()(const Tensor<S>& query, const Tensor<S>& keys,
                       const std::vector<bool>& key_mask = {},
                       AttentionTrace<S>* trace = nullptr) const {
    auto q = wq_(query);
    auto k = wk_(keys);
    auto v = wv_(keys);
    return attend(q, k, v, key_mask, trace);
  }

  Tensor<S> attend(const Tensor<S>& q, const Tensor<S>& k, const Tensor<S>& v,
                   const std::vector<bool>& key_mask, AttentionTrace<S>* trace) const {
    const Eigen::Index dk = model_dim_ / heads_;
    Matrix<S> mask;
    if (!key_mask.empty()) {
      if (static_cast<Eigen::Index>(key_mask.size()) != k.rows())
        throw ShapeError("attention key mask length differs from key count");
      bool any_open = false;
      for (bool m : key_mask) any_open = any_open || !m;
      if (any_open) {
        mask = Matrix<S>::Zero(q.rows(), k.rows());
        for (Eigen::Index j = 0; j < k.rows(); ++j)
          if (key_mask[static_cast<std::size_t>(j)]) mask.col(j).setConstant(S(-1e9));
      }
    }
    std::vector<Tensor<S>> outs;
    outs.reserve(static_cast<std::size_t>(heads_));
    if (trace) trace->weights.clear();
    const S inv = S(1) / std::sqrt(static_cast<S>(dk));
    for (int h = 0; h < heads_; ++h) {
      auto qh = ag::slice_cols(q, h * dk, dk);
      auto kh = ag::slice_cols(k, h * dk, dk);
      auto vh = ag::slice_cols(v, h * dk, dk);
      auto p = ag::softmax_rows(ag::scale(ag::matmul_nt(qh, kh), inv), mask);
      if (trace) trace->weights.push_back(p.value());
      outs.push_back(ag::matmul(p, vh));
    }
    return wo_(heads_ == 1 ? outs.front() : ag::concat_cols(outs));
  }

  const Linear<S>& wq() const { return wq_; }
  const Linear<S>& wk() const { return wk_; }
  const Linear<S>& wv() const { return wv_; }
  const Linear<S>& wo() const { return wo_; }
  int heads() const { return heads_; }

 private:
  int heads_ = 1;
  Eigen::Index model_dim_ = 0;
  Linear<S> wq_, wk_, wv_, wo_;
};

/// Feed-forward Transformer block: self-attention and a two-layer
/// convolutional position-wise network, each with residual and post-norm.
template <typename S>
class FFTBlock {
 public:
  FFTBlock() = default;
  FFTBlock(ParamStore<S>& ps, const std::string& name, Eigen::Index dim, int heads,
           Eigen::Index ff_dim, int kernel)
      : attn_(ps, name + ".attn", dim, dim, dim, heads),
        norm1_(ps, name + ".norm1", dim),
        conv1_(ps, name + ".conv1", dim, ff_dim, kernel),
        conv2_(ps, name + ".conv2", ff_dim, dim, 1),
        norm2_(ps, name + ".norm2", dim) {}

  template <typename Rng>
  Tensor<S> operator()(const Tensor<S>& x, double dropout_p, Rng& rng) const {
    auto a = ag::dropout(attn_(x, x), dropout_p, rng);
    auto h = norm1_(ag::add(x, a));
    auto f = conv2_(ag::relu(conv1_(h)));
    f = ag::dropout(f, dropout_p, rng);
    return norm2_(ag::add(h, f));
  }

 private:
  MultiHeadAttention<S> attn_;
  LayerNorm<S> norm1_;
  Conv1d<S> conv1_;
  Conv1d<S> conv2_;
  LayerNorm<S> norm2_;
};

/// Sinusoidal position table [length x dim].
template <typename S>
Matrix<S> sinusoid_positions(Eigen::Index length, Eigen::Index dim) {
  Matrix<S> pe(length, dim);
  for (Eigen::Index pos = 0; pos < length; ++pos) {
    for (Eigen::Index i = 0; i < dim; ++i) {
      const double rate = std::pow(10000.0, -2.0 * static_cast<double>(i / 2) / static_cast<double>(dim));
      const double angle = static_cast<double>(pos) * rate;
      pe(pos, i) = static_cast<S>(i % 2 == 0 ? std::sin(angle) : std::cos(angle));
    }
  }
  return pe;
}

}  // namespace cuctts::nn

#endif  // CUCTTS_NN_HPP_
