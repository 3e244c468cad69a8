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

// Synthetic corpus of harmonic tones, one voiced segment per phoneme, with
// exact alignments. Used by tests and for trying the pipeline end to end
// without a speech corpus.

#ifndef CUCTTS_TOY_CORPUS_HPP_
#define CUCTTS_TOY_CORPUS_HPP_

#include <json.hpp>

#include <cmath>
#include <filesystem>
#include <fstream>
#include <numbers>
#include <random>
#include <string>
#include <vector>

#include "cuctts/audio.hpp"
#include "cuctts/context_encoder.hpp"
#include "cuctts/corpus.hpp"
#include "cuctts/g2p.hpp"
#include "cuctts/training.hpp"

namespace cuctts::toy {

inline const std::vector<std::string>& sentences() {
  static const std::vector<std::string> s = {
      "Mary asked the time.",        "The clock said nine.",      "She ran to the door.",
      "It was raining again.",       "Her coat was still wet.",   "A cab waited outside.",
      "The driver looked tired.",    "They drove into town.",     "Lights shone on the road.",
      "At last she was home.",       "The cat slept by the fire.", "Nobody said a word.",
  };
  return s;
}

struct ToyUtterance {
  std::string id;
  std::string text;
  text::PhonemeSequence phonemes;
  std::vector<int> durations;  ///< frames per phoneme
  audio::Waveform wave;
};

/// Renders one utterance: each non-silence phoneme is a harmonic tone whose
/// pitch and loudness depend on the phoneme and on a per-utterance offset;
/// silences are near-silent. Durations are whole hops.
inline ToyUtterance render(const std::string& id, const std::string& sentence, std::uint64_t seed,
                           const audio::AudioConfig& cfg = {}) {
  static const text::G2P g2p;
  ToyUtterance u;
  u.id = id;
  u.text = sentence;
  u.phonemes = g2p(sentence);
  std::mt19937_64 rng(seed);
  std::uniform_real_distribution<double> jitter(-0.1, 0.1);
  const double pitch_offset = 1.0 + jitter(rng);
  const auto ids = u.phonemes.ids();
  double phase = 0.0;
  for (std::size_t i = 0; i < ids.size(); ++i) {
    const bool sil = text::is_silence(u.phonemes.phonemes[i]);
    const int frames = sil ? 4 : 3 + ids[i] % 4;
    u.durations.push_back(frames);
    const double f0 = (110.0 + 12.0 * (ids[i] % 9)) * pitch_offset;
    const double amp = sil ? 0.0 : 0.15 + 0.04 * (ids[i] % 5);
    for (int n = 0; n < frames * cfg.hop; ++n) {
      phase += 2.0 * std::numbers::pi * f0 / cfg.sample_rate;
      double v = 0.0;
      for (int k = 1; k <= 4; ++k) v += std::sin(k * phase) / k;
      u.wave.samples.push_back(static_cast<float>(amp * v));
    }
  }
  // One hop short so the frame count (1 + N / hop) equals the duration sum.
  u.wave.samples.resize(u.wave.samples.size() - static_cast<std::size_t>(cfg.hop));
  u.wave.sample_rate = cfg.sample_rate;
  return u;
}

/// Alignment lines in seconds matching render().
inline std::vector<corpus::AlignedPhone> alignment(const ToyUtterance& u, const audio::AudioConfig& cfg) {
  std::vector<corpus::AlignedPhone> out;
  double t = 0.0;
  for (std::size_t i = 0; i < u.durations.size(); ++i) {
    const double len = static_cast<double>(u.durations[i]) * cfg.hop / cfg.sample_rate;
    out.push_back({t, t + len, u.phonemes.phonemes[i]});
    t += len;
  }
  return out;
}

/// Writes `metadata.jsonl`, `wavs/` and `alignments/` for `count` utterances
/// forming a single document.
inline void write_corpus(const std::filesystem::path& dir, int count, std::uint64_t seed = 1,
                         const audio::AudioConfig& cfg = {}) {
  std::filesystem::create_directories(dir / "wavs");
  std::filesystem::create_directories(dir / "alignments");
  std::ofstream meta(dir / "metadata.jsonl");
  if (!meta) throw std::runtime_error("cannot write " + (dir / "metadata.jsonl").string());
  const auto& s = sentences();
  for (int i = 0; i < count; ++i) {
    char id[32];
    std::snprintf(id, sizeof(id), "toy_%03d", i);
    const auto u = render(id, s[static_cast<std::size_t>(i) % s.size()], seed + static_cast<std::uint64_t>(i), cfg);
    audio::write_wav(dir / "wavs" / (u.id + ".wav"), u.wave);
    std::ofstream lab(dir / "alignments" / (u.id + ".lab"));
    for (const auto& a : alignment(u, cfg)) lab << a.start << ' ' << a.end << ' ' << a.phone << '\n';
    meta << nlohmann::json{{"id", u.id}, {"text", u.text}, {"speaker_id", "toy"},
                           {"audio", "wavs/" + u.id + ".wav"}, {"document", "story"}}
                .dump()
         << '\n';
  }
}

/// In-memory training set of `count` utterances with exact durations and
/// hash-embedded context windows (when the model consumes context).
template <typename S>
std::vector<TrainingExample<S>> make_examples(int count, const ModelConfig& model, std::uint64_t seed = 1,
                                              const audio::AudioConfig& cfg = {}) {
  const auto& s = sentences();
  std::vector<corpus::DocumentUtterance> doc;
  std::vector<ToyUtterance> utts;
  for (int i = 0; i < count; ++i) {
    utts.push_back(render("toy_" + std::to_string(i), s[static_cast<std::size_t>(i) % s.size()],
                          seed + static_cast<std::uint64_t>(i), cfg));
    doc.push_back({utts.back().id, utts.back().text, "toy", ""});
  }
  const auto records = corpus::build_context_windows({doc}, std::max(model.context_size, 1));
  const auto texts = corpus::text_index(records);
  context::HashPairEmbedder embedder(model.d_ctx);
  std::vector<TrainingExample<S>> out;
  for (std::size_t i = 0; i < utts.size(); ++i) {
    corpus::FeatureFile ff;
    ff.phonemes = utts[i].phonemes;
    ff.features = corpus::extract_features(utts[i].wave, utts[i].phonemes, alignment(utts[i], cfg), cfg);
    std::optional<context::ContextEmbeddingSet> ctx;
    if (uses_context(model.variant))
      ctx = context::embed_pairs(context::make_pairs(corpus::context_texts(records[i], texts)), embedder);
    out.push_back({utts[i].id, make_input<S>(ff, 0, ctx)});
  }
  return out;
}

}  // namespace cuctts::toy

#endif  // CUCTTS_TOY_CORPUS_HPP_
