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

// Cross-utterance phoneme embedding.
//
//   F = TransformerEncoder(phonemes) + speaker            [T x d_model]
//   G = MHA(F Wq, B Wk, B Wv)                             [T x d_attn]
//   H = [G, F] W                                          [T x d_model]
//   D = DurationPredictor(H)                              [T] log(1 + frames)

#ifndef CUCTTS_CU_EMBEDDING_HPP_
#define CUCTTS_CU_EMBEDDING_HPP_

#include <cmath>
#include <map>
#include <string>
#include <vector>

#include "cuctts/config.hpp"
#include "cuctts/nn.hpp"

namespace cuctts {

using ag::Tensor;

template <typename S>
struct MixtureEncoding {
  Tensor<S> F;  ///< pre-fusion
  Tensor<S> H;  ///< post-fusion
  Tensor<S> D;  ///< [T x 1] predicted log-durations
};

template <typename S>
class PhonemeEncoder {
 public:
  PhonemeEncoder() = default;
  PhonemeEncoder(nn::ParamStore<S>& ps, const ModelConfig& c)
      : positional_(c.positional_encoding),
        embedding_(ps.normal("encoder.embedding", c.n_phonemes, c.d_model, 1.0 / std::sqrt(c.d_model))) {
    for (int i = 0; i < c.encoder_layers; ++i)
      blocks_.emplace_back(ps, "encoder.block" + std::to_string(i), c.d_model, c.encoder_heads, c.encoder_ff,
                           c.encoder_kernel);
  }

  template <typename Rng>
  Tensor<S> operator()(std::span<const int> ids, double dropout, Rng& rng) const {
    for (int id : ids)
      if (id < 0 || id >= embedding_.rows()) throw std::invalid_argument("phoneme id outside inventory");
    auto x = ag::gather_rows(embedding_, ids);
    if (positional_)
      x = ag::add(x, Tensor<S>::constant(nn::sinusoid_positions<S>(x.rows(), x.cols())));
    for (const auto& b : blocks_) x = b(x, dropout, rng);
    return x;
  }

  void set_positional(bool on) { positional_ = on; }

 private:
  bool positional_ = true;
  Tensor<S> embedding_;
  std::vector<nn::FFTBlock<S>> blocks_;
};

template <typename S>
class SpeakerTable {
 public:
  SpeakerTable() = default;
  SpeakerTable(nn::ParamStore<S>& ps, int num_speakers, int dim)
      : table_(ps.normal("speaker.embedding", std::max(num_speakers, 1), dim, 0.02)) {}

  void set_names(const std::vector<std::string>& names) {
    if (static_cast<Eigen::Index>(names.size()) > table_.rows())
      throw std::invalid_argument("more speaker names than embedding rows");
    index_.clear();
    names_ = names;
    for (std::size_t i = 0; i < names.size(); ++i) index_[names[i]] = static_cast<int>(i);
  }
  const std::vector<std::string>& names() const { return names_; }

  int lookup(const std::string& speaker_id) const {
    auto it = index_.find(speaker_id);
    if (it == index_.end()) throw std::invalid_argument("unknown speaker id '" + speaker_id + "'");
    return it->second;
  }

  Tensor<S> row(int index) const {
    if (index < 0 || index >= table_.rows()) throw std::invalid_argument("speaker index out of range");
    const int idx[1] = {index};
    return ag::gather_rows(table_, std::span<const int>(idx, 1));
  }

 private:
  Tensor<S> table_;
  std::map<std::string, int> index_;
  std::vector<std::string> names_;
};

/// F[t] = encoder(phonemes)[t] + speaker.
template <typename S>
Tensor<S> add_speaker(const Tensor<S>& encoded, const Tensor<S>& speaker_row) {
  return ag::add(encoded, ag::broadcast_rows(speaker_row, encoded.rows()));
}

/// Multi-head attention from phoneme mixture encodings onto the 2L context
/// pair embeddings.
template <typename S>
class ContextFusion {
 public:
  ContextFusion() = default;
  ContextFusion(nn::ParamStore<S>& ps, const ModelConfig& c)
      : expected_rows_(2 * c.context_size),
        attn_(ps, "context_attn", c.d_model, c.d_ctx, c.d_attn, c.context_heads) {}

  Tensor<S> operator()(const Tensor<S>& F, const Tensor<S>& B, const std::vector<bool>& key_mask = {},
                       nn::AttentionTrace<S>* trace = nullptr) const {
    if (B.rows() != expected_rows_)
      throw ShapeError("context embedding has " + std::to_string(B.rows()) + " rows, expected 2L = " +
                       std::to_string(expected_rows_));
    return attn_(F, B, key_mask, trace);
  }

  const nn::MultiHeadAttention<S>& attention() const { return attn_; }

 private:
  Eigen::Index expected_rows_ = 0;
  nn::MultiHeadAttention<S> attn_;
};

/// h_t = [g_t, f_t] W (no bias). Without a context branch, h_t = f_t W.
template <typename S>
class CuProjection {
 public:
  CuProjection() = default;
  CuProjection(nn::ParamStore<S>& ps, Eigen::Index in, Eigen::Index out) : proj_(ps, "cu_proj", in, out, false) {}

  Tensor<S> operator()(const Tensor<S>& G, const Tensor<S>& F) const {
    if (G.rows() != F.rows()) throw ShapeError("project_cu: G and F row counts differ");
    return proj_(ag::concat_cols<S>({G, F}));
  }
  Tensor<S> operator()(const Tensor<S>& F) const { return proj_(F); }

  const Tensor<S>& weight() const { return proj_.weight(); }

 private:
  nn::Linear<S> proj_;
};

/// Two blocks of (conv + ReLU + layer norm + dropout) and a linear head
/// giving one scalar per phoneme. Shared by duration, pitch and energy.
template <typename S>
class VariancePredictor {
 public:
  VariancePredictor() = default;
  VariancePredictor(nn::ParamStore<S>& ps, const std::string& name, const ModelConfig& c, Eigen::Index in)
      : conv1_(ps, name + ".conv1", in, c.duration_filter, c.duration_kernel),
        norm1_(ps, name + ".norm1", c.duration_filter),
        conv2_(ps, name + ".conv2", c.duration_filter, c.duration_filter, c.duration_kernel),
        norm2_(ps, name + ".norm2", c.duration_filter),
        head_(ps, name + ".head", c.duration_filter, 1) {}

  template <typename Rng>
  Tensor<S> operator()(const Tensor<S>& x, double dropout, Rng& rng) const {
    auto h = ag::dropout(norm1_(ag::relu(conv1_(x))), dropout, rng);
    h = ag::dropout(norm2_(ag::relu(conv2_(h))), dropout, rng);
    return head_(h);
  }

 private:
  nn::Conv1d<S> conv1_;
  nn::LayerNorm<S> norm1_;
  nn::Conv1d<S> conv2_;
  nn::LayerNorm<S> norm2_;
  nn::Linear<S> head_;
};

/// Log-domain durations to integer frame counts: round(exp(d) - 1), at
/// least one frame for non-silence phonemes.
inline std::vector<int> durations_from_log(const std::vector<double>& log_durations,
                                           const std::vector<bool>& is_silence) {
  std::vector<int> out(log_durations.size());
  for (std::size_t i = 0; i < log_durations.size(); ++i) {
    const double frames = std::exp(std::min(log_durations[i], 20.0)) - 1.0;
    int d = static_cast<int>(std::lround(std::max(frames, 0.0)));
    if (!is_silence[i]) d = std::max(d, 1);
    out[i] = d;
  }
  return out;
}

inline double log_duration_target(int frames) { return std::log1p(static_cast<double>(frames)); }

}  // namespace cuctts

#endif  // CUCTTS_CU_EMBEDDING_HPP_
