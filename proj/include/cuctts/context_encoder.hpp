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

// Cross-utterance sentence pairs and their fixed-size embeddings.
//
// A window of 2L+1 utterance texts yields 2L adjacent pairs, each rendered
// as "[CLS] left [SEP] right" and mapped to one d_ctx vector by a frozen
// sentence-pair embedder. Embeddings are computed once and cached per
// utterance id; training reads only the cache.

#ifndef CUCTTS_CONTEXT_ENCODER_HPP_
#define CUCTTS_CONTEXT_ENCODER_HPP_

#include <json.hpp>

#include <cmath>
#include <cstdint>
#include <filesystem>
#include <fstream>
#include <memory>
#include <random>
#include <sstream>
#include <stdexcept>
#include <string>
#include <unordered_map>
#include <vector>

#include "cuctts/archive.hpp"
#include "cuctts/corpus.hpp"
#include "cuctts/g2p.hpp"

namespace cuctts::context {

struct CrossUtterancePair {
  std::string left;
  std::string right;
  int index = 0;  ///< in [-L, L-1]; pair -1 is (u_{i-1}, u_i), pair 0 is (u_i, u_{i+1})

  bool has_sentinel() const { return left.empty() || right.empty(); }

  /// Classifier token, left sentence, separator, right sentence.
  std::vector<std::string> tokens() const {
    std::vector<std::string> t{"[CLS]"};
    for (auto& w : text::split_words(text::normalize_text(left))) t.push_back(w);
    t.push_back("[SEP]");
    for (auto& w : text::split_words(text::normalize_text(right))) t.push_back(w);
    return t;
  }

  std::string render() const {
    std::string s;
    for (const auto& tok : tokens()) s += (s.empty() ? "" : " ") + tok;
    return s;
  }
};

inline std::vector<CrossUtterancePair> make_pairs(const std::vector<std::string>& window) {
  if (window.size() < 3 || window.size() % 2 == 0)
    throw std::invalid_argument("context window must have odd length >= 3, got " + std::to_string(window.size()));
  const int L = static_cast<int>(window.size() / 2);
  std::vector<CrossUtterancePair> pairs;
  pairs.reserve(window.size() - 1);
  for (std::size_t k = 0; k + 1 < window.size(); ++k)
    pairs.push_back({window[k], window[k + 1], static_cast<int>(k) - L});
  return pairs;
}

struct ContextEmbeddingSet {
  Matrix<float> vectors;        ///< [2L x d_ctx]
  std::vector<bool> sentinel;   ///< pair touches a document boundary
  int L = 0;

  void validate() const {
    if (L < 1 || vectors.rows() != 2 * L) throw std::invalid_argument("context embedding set must have 2L rows");
    if (static_cast<Eigen::Index>(sentinel.size()) != vectors.rows())
      throw std::invalid_argument("sentinel flags differ from pair count");
    if (!vectors.allFinite()) throw std::invalid_argument("context embedding contains non-finite values");
  }
};

/// Frozen pair embedder. Implementations hold no trainable state.
class SentencePairEmbedder {
 public:
  virtual ~SentencePairEmbedder() = default;
  virtual int dim() const = 0;
  virtual RowVector<float> embed(const CrossUtterancePair& pair) const = 0;
  virtual std::string name() const = 0;
};

/// Deterministic stand-in for a pretrained language model: hashed unigram and
/// bigram features (tagged with their sentence segment) expanded through a
/// fixed Gaussian random projection, then L2-normalized and scaled to sqrt(d).
class HashPairEmbedder final : public SentencePairEmbedder {
 public:
  explicit HashPairEmbedder(int dim = 768, std::uint64_t salt = 0x9e3779b97f4a7c15ULL) : dim_(dim), salt_(salt) {}

  int dim() const override { return dim_; }
  std::string name() const override { return "hash"; }

  RowVector<float> embed(const CrossUtterancePair& pair) const override {
    const auto toks = pair.tokens();
    std::vector<double> acc(static_cast<std::size_t>(dim_), 0.0);
    int segment = 0;
    std::string prev = "^";
    auto add_feature = [&](const std::string& f) {
      std::mt19937_64 rng(fnv1a(f) ^ salt_);
      std::normal_distribution<double> nd;
      for (auto& a : acc) a += nd(rng);
    };
    for (const auto& t : toks) {
      if (t == "[SEP]") segment = 1;
      const std::string tag = std::to_string(segment) + "|";
      add_feature("u|" + tag + t);
      add_feature("b|" + tag + prev + "|" + t);
      prev = t;
    }
    double norm = 0.0;
    for (double a : acc) norm += a * a;
    norm = std::sqrt(norm);
    RowVector<float> v(dim_);
    const double s = norm > 0.0 ? std::sqrt(static_cast<double>(dim_)) / norm : 0.0;
    for (int i = 0; i < dim_; ++i) v(i) = static_cast<float>(acc[static_cast<std::size_t>(i)] * s);
    return v;
  }

  static std::uint64_t fnv1a(const std::string& s) {
    std::uint64_t h = 1469598103934665603ULL;
    for (unsigned char c : s) {
      h ^= c;
      h *= 1099511628211ULL;
    }
    return h;
  }

 private:
  int dim_;
  std::uint64_t salt_;
};

/// Embeddings computed offline by a pretrained masked language model (see
/// tools/bert_pair_embed.py). File format: JSON lines
/// {"pair": "<rendered pair>", "embedding": [d floats]}.
class PrecomputedPairEmbedder final : public SentencePairEmbedder {
 public:
  explicit PrecomputedPairEmbedder(const std::filesystem::path& path) {
    std::ifstream is(path);
    if (!is) throw std::runtime_error("cannot open pair embeddings " + path.string());
    std::string line;
    while (std::getline(is, line)) {
      if (line.empty()) continue;
      const auto j = nlohmann::json::parse(line);
      const auto v = j.at("embedding").get<std::vector<float>>();
      if (dim_ == 0) dim_ = static_cast<int>(v.size());
      if (static_cast<int>(v.size()) != dim_) throw std::runtime_error(path.string() + ": inconsistent embedding width");
      RowVector<float> row(dim_);
      for (int i = 0; i < dim_; ++i) row(i) = v[static_cast<std::size_t>(i)];
      table_[j.at("pair").get<std::string>()] = std::move(row);
    }
    if (table_.empty()) throw std::runtime_error(path.string() + ": no embeddings");
  }

  int dim() const override { return dim_; }
  std::string name() const override { return "precomputed"; }

  RowVector<float> embed(const CrossUtterancePair& pair) const override {
    auto it = table_.find(pair.render());
    if (it == table_.end()) throw std::runtime_error("no precomputed embedding for \"" + pair.render() + "\"");
    return it->second;
  }

 private:
  int dim_ = 0;
  std::unordered_map<std::string, RowVector<float>> table_;
};

inline ContextEmbeddingSet embed_pairs(const std::vector<CrossUtterancePair>& pairs,
                                       const SentencePairEmbedder& embedder) {
  if (pairs.empty()) throw std::invalid_argument("embed_pairs: no pairs");
  ContextEmbeddingSet set;
  set.L = static_cast<int>(pairs.size() / 2);
  set.vectors.resize(static_cast<Eigen::Index>(pairs.size()), embedder.dim());
  for (std::size_t i = 0; i < pairs.size(); ++i) {
    try {
      auto v = embedder.embed(pairs[i]);
      if (v.cols() != embedder.dim()) throw std::runtime_error("embedder returned wrong width");
      set.vectors.row(static_cast<Eigen::Index>(i)) = v;
    } catch (const std::exception& e) {
      throw std::runtime_error("embedding pair " + std::to_string(i) + " failed: " + e.what());
    }
    set.sentinel.push_back(pairs[i].has_sentinel());
  }
  return set;
}

// ---------------------------------------------------------------------------
// Cache: <dir>/<id>.ctx holding "pairs" [2L x d_ctx] float32 and "sentinel".

inline std::filesystem::path cache_path(const std::filesystem::path& dir, const std::string& id) {
  return dir / (id + ".ctx");
}

inline void save_context(const std::filesystem::path& path, const ContextEmbeddingSet& set) {
  io::TensorArchive a;
  a.put_f32("pairs", set.vectors);
  std::vector<int> flags(set.sentinel.begin(), set.sentinel.end());
  a.put_i32_vec("sentinel", flags);
  a.save(path);
}

inline ContextEmbeddingSet load_context(const std::filesystem::path& path) {
  const auto a = io::TensorArchive::load(path);
  ContextEmbeddingSet set;
  set.vectors = a.get_f32("pairs");
  for (int f : a.get_i32_vec("sentinel")) set.sentinel.push_back(f != 0);
  set.L = static_cast<int>(set.vectors.rows() / 2);
  set.validate();
  return set;
}

/// Embeds every utterance's context window once and writes the cache.
inline void precompute_and_cache(const std::vector<corpus::UtteranceRecord>& records,
                                 const SentencePairEmbedder& embedder, const std::filesystem::path& dir) {
  std::filesystem::create_directories(dir);
  const auto texts = corpus::text_index(records);
  for (const auto& r : records) {
    const auto window = corpus::context_texts(r, texts);
    save_context(cache_path(dir, r.id), embed_pairs(make_pairs(window), embedder));
  }
}

/// Throws listing every manifest id (with features) that has no cache entry.
inline void verify_cache(const std::vector<corpus::UtteranceRecord>& records, const std::filesystem::path& dir) {
  std::vector<std::string> missing;
  for (const auto& r : records)
    if (!r.feature_path.empty() && !std::filesystem::exists(cache_path(dir, r.id))) missing.push_back(r.id);
  if (!missing.empty()) {
    std::string msg = "context cache is missing " + std::to_string(missing.size()) + " id(s):";
    for (const auto& id : missing) msg += " " + id;
    throw std::runtime_error(msg);
  }
}

inline std::unique_ptr<SentencePairEmbedder> make_embedder(const std::string& kind, int dim,
                                                           const std::string& path = {}) {
  if (kind == "hash") return std::make_unique<HashPairEmbedder>(dim);
  if (kind == "precomputed") return std::make_unique<PrecomputedPairEmbedder>(path);
  throw std::invalid_argument("unknown embedder '" + kind + "' (expected hash or precomputed)");
}

}  // namespace cuctts::context

#endif  // CUCTTS_CONTEXT_ENCODER_HPP_
