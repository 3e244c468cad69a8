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

// Acoustic decoder: latent injection, length regulation, a parallel
// feed-forward Transformer mel decoder, and waveform realization.

#ifndef CUCTTS_DECODER_HPP_
#define CUCTTS_DECODER_HPP_

#include <cstdlib>
#include <filesystem>
#include <memory>
#include <numeric>
#include <span>
#include <string>
#include <vector>

#include "cuctts/archive.hpp"
#include "cuctts/audio.hpp"
#include "cuctts/config.hpp"
#include "cuctts/nn.hpp"

namespace cuctts {

using ag::Tensor;

/// H + Linear(z): lifts the d_z latent to d_model and adds it per phoneme.
template <typename S>
class LatentInjection {
 public:
  LatentInjection() = default;
  LatentInjection(nn::ParamStore<S>& ps, const ModelConfig& c) : proj_(ps, "latent_proj", c.d_z, c.d_model) {}

  Tensor<S> operator()(const Tensor<S>& H, const Tensor<S>& z) const {
    if (z.rows() != H.rows()) throw ShapeError("inject_latent: z and H row counts differ");
    return ag::add(H, proj_(z));
  }

 private:
  nn::Linear<S> proj_;
};

/// Source-row index for each output frame: row t repeated durations[t] times.
inline std::vector<int> expand_index(std::span<const int> durations) {
  std::vector<int> idx;
  for (std::size_t t = 0; t < durations.size(); ++t) {
    if (durations[t] < 0) throw std::invalid_argument("length_regulate: negative duration");
    idx.insert(idx.end(), static_cast<std::size_t>(durations[t]), static_cast<int>(t));
  }
  if (idx.empty()) throw std::invalid_argument("length_regulate: all durations are zero");
  return idx;
}

template <typename S>
Tensor<S> length_regulate(const Tensor<S>& rows, std::span<const int> durations) {
  if (static_cast<Eigen::Index>(durations.size()) != rows.rows())
    throw ShapeError("length_regulate: duration count differs from row count");
  const auto idx = expand_index(durations);
  return ag::gather_rows(rows, std::span<const int>(idx));
}

template <typename S>
class MelDecoder {
 public:
  MelDecoder() = default;
  MelDecoder(nn::ParamStore<S>& ps, const ModelConfig& c)
      : positional_(c.positional_encoding), out_(ps, "decoder.out", c.d_model, c.n_mels) {
    for (int i = 0; i < c.decoder_layers; ++i)
      blocks_.emplace_back(ps, "decoder.block" + std::to_string(i), c.d_model, c.decoder_heads, c.decoder_ff,
                           c.decoder_kernel);
  }

  template <typename Rng>
  Tensor<S> operator()(const Tensor<S>& frames, double dropout, Rng& rng) const {
    auto x = frames;
    if (positional_) x = ag::add(x, Tensor<S>::constant(nn::sinusoid_positions<S>(x.rows(), x.cols())));
    for (const auto& b : blocks_) x = b(x, dropout, rng);
    return out_(x);
  }

  void set_positional(bool on) { positional_ = on; }

 private:
  bool positional_ = true;
  std::vector<nn::FFTBlock<S>> blocks_;
  nn::Linear<S> out_;
};

// ---------------------------------------------------------------------------
// Vocoders

class Vocoder {
 public:
  virtual ~Vocoder() = default;
  /// mel: [frames x n_mels] natural-log magnitudes.
  virtual audio::Waveform vocode(const Matrix<float>& mel) const = 0;
};

class GriffinLimVocoder final : public Vocoder {
 public:
  explicit GriffinLimVocoder(audio::AudioConfig cfg) : cfg_(cfg) {}
  audio::Waveform vocode(const Matrix<float>& mel) const override {
    return {cfg_.sample_rate, audio::griffin_lim(mel.cast<double>(), cfg_)};
  }

 private:
  audio::AudioConfig cfg_;
};

/// Writes the mel interchange archive and runs `command <mel> <wav>`; the
/// command must write a 16-bit PCM WAV file (e.g. a pretrained neural vocoder).
inline void write_mel_interchange(const std::filesystem::path& path, const Matrix<float>& mel,
                                  const audio::AudioConfig& cfg) {
  io::TensorArchive a;
  a.put_f32("mel", mel);
  a.put_i32_vec("sample_rate", {cfg.sample_rate});
  a.put_i32_vec("hop", {cfg.hop});
  a.put_i32_vec("n_mels", {cfg.n_mels});
  a.put_string("scale", "natural_log_magnitude");
  a.save(path);
}

class ExternalVocoder final : public Vocoder {
 public:
  ExternalVocoder(std::string command, audio::AudioConfig cfg, std::filesystem::path scratch)
      : command_(std::move(command)), cfg_(cfg), scratch_(std::move(scratch)) {}

  audio::Waveform vocode(const Matrix<float>& mel) const override {
    std::filesystem::create_directories(scratch_);
    const auto mel_path = scratch_ / "vocoder_in.mel";
    const auto wav_path = scratch_ / "vocoder_out.wav";
    write_mel_interchange(mel_path, mel, cfg_);
    const std::string cmd = command_ + " '" + mel_path.string() + "' '" + wav_path.string() + "'";
    if (std::system(cmd.c_str()) != 0) throw std::runtime_error("vocoder command failed: " + cmd);
    return audio::resample(audio::read_wav(wav_path), cfg_.sample_rate);
  }

 private:
  std::string command_;
  audio::AudioConfig cfg_;
  std::filesystem::path scratch_;
};

/// External binding when a command is configured, otherwise Griffin-Lim
/// unless the fallback is disabled.
inline std::unique_ptr<Vocoder> make_vocoder(const std::string& command, const audio::AudioConfig& cfg,
                                             const std::filesystem::path& scratch, bool allow_fallback = true) {
  if (!command.empty()) return std::make_unique<ExternalVocoder>(command, cfg, scratch);
  if (!allow_fallback) throw std::runtime_error("no vocoder binding configured and the fallback is disabled");
  return std::make_unique<GriffinLimVocoder>(cfg);
}

}  // namespace cuctts

#endif  // CUCTTS_DECODER_HPP_
