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

// Model, training and run configuration with JSON (de)serialization.
// Precedence is defaults < config file < command-line flags.

#ifndef CUCTTS_CONFIG_HPP_
#define CUCTTS_CONFIG_HPP_

#include <json.hpp>

#include <cstdint>
#include <filesystem>
#include <fstream>
#include <stdexcept>
#include <string>

#include "cuctts/audio.hpp"
#include "cuctts/g2p.hpp"

namespace cuctts {

enum class Variant { kBaseline, kGlobalVae, kFineGrainedVae, kCvae, kCucVae };

inline std::string to_string(Variant v) {
  switch (v) {
    case Variant::kBaseline: return "baseline";
    case Variant::kGlobalVae: return "global_vae";
    case Variant::kFineGrainedVae: return "fine_grained_vae";
    case Variant::kCvae: return "cvae";
    case Variant::kCucVae: return "cuc_vae";
  }
  return "?";
}

inline Variant parse_variant(const std::string& s) {
  if (s == "baseline") return Variant::kBaseline;
  if (s == "global_vae") return Variant::kGlobalVae;
  if (s == "fine_grained_vae") return Variant::kFineGrainedVae;
  if (s == "cvae") return Variant::kCvae;
  if (s == "cuc_vae") return Variant::kCucVae;
  throw std::invalid_argument("unknown variant '" + s +
                              "' (expected baseline, global_vae, fine_grained_vae, cvae or cuc_vae)");
}

inline bool uses_context(Variant v) { return v == Variant::kCucVae; }
inline bool has_learned_prior(Variant v) { return v == Variant::kCvae || v == Variant::kCucVae; }
inline bool has_vae(Variant v) { return v != Variant::kBaseline; }

struct ModelConfig {
  Variant variant = Variant::kCucVae;
  int context_size = 5;  ///< L
  int n_phonemes = static_cast<int>(text::phoneme_inventory().size());
  int num_speakers = 1;
  int d_model = 256;
  int encoder_layers = 4;
  int encoder_heads = 2;
  int encoder_ff = 1024;
  int encoder_kernel = 9;
  int decoder_layers = 4;
  int decoder_heads = 2;
  int decoder_ff = 1024;
  int decoder_kernel = 9;
  int n_mels = 80;
  int d_ctx = 768;
  int context_heads = 8;
  int d_attn = 256;
  int d_z = 2;
  int vae_hidden = 256;
  int vae_layers = 4;
  int duration_filter = 256;
  int duration_kernel = 3;
  int reference_kernel = 3;  ///< utterance-level reference encoder (global VAE)
  double dropout = 0.1;
  double logvar_clamp = 14.0;
  bool positional_encoding = true;
  bool mask_sentinel_pairs = false;
};

struct OptimConfig {
  double peak_lr = 1e-3;
  int warmup_steps = 4000;
  double beta1 = 0.9;
  double beta2 = 0.98;
  double eps = 1e-9;
  double grad_clip = 1.0;
};

struct TrainConfig {
  int steps = 100000;
  double beta1_max = 1e-4;  ///< KL(posterior || prior) weight
  double beta2_max = 1e-4;  ///< KL(prior || N(0, I)) weight
  int kl_warmup_steps = 10000;
  int frame_budget = 4000;  ///< max mel frames per batch
  int checkpoint_every = 5000;
  int log_every = 1;
  std::uint64_t seed = 1;
  double divergence_factor = 1e3;
  OptimConfig optim;
};

struct PathsConfig {
  std::string manifest;
  std::string context_cache;
  std::string out_dir = "run";
  std::string embedder = "hash";     ///< hash | precomputed
  std::string embedder_path;         ///< embeddings file for "precomputed"
  std::string vocoder_command;       ///< empty = Griffin-Lim fallback
};

struct RunConfig {
  ModelConfig model;
  TrainConfig train;
  PathsConfig paths;
  audio::AudioConfig audio;
  text::G2POptions g2p;
};

// ---------------------------------------------------------------------------
// JSON

inline void to_json(nlohmann::json& j, const ModelConfig& c) {
  j = {{"variant", to_string(c.variant)},
       {"context_size", c.context_size},
       {"n_phonemes", c.n_phonemes},
       {"num_speakers", c.num_speakers},
       {"d_model", c.d_model},
       {"encoder_layers", c.encoder_layers},
       {"encoder_heads", c.encoder_heads},
       {"encoder_ff", c.encoder_ff},
       {"encoder_kernel", c.encoder_kernel},
       {"decoder_layers", c.decoder_layers},
       {"decoder_heads", c.decoder_heads},
       {"decoder_ff", c.decoder_ff},
       {"decoder_kernel", c.decoder_kernel},
       {"n_mels", c.n_mels},
       {"d_ctx", c.d_ctx},
       {"context_heads", c.context_heads},
       {"d_attn", c.d_attn},
       {"d_z", c.d_z},
       {"vae_hidden", c.vae_hidden},
       {"vae_layers", c.vae_layers},
       {"duration_filter", c.duration_filter},
       {"duration_kernel", c.duration_kernel},
       {"reference_kernel", c.reference_kernel},
       {"dropout", c.dropout},
       {"logvar_clamp", c.logvar_clamp},
       {"positional_encoding", c.positional_encoding},
       {"mask_sentinel_pairs", c.mask_sentinel_pairs}};
}

inline void from_json(const nlohmann::json& j, ModelConfig& c) {
  if (j.contains("variant")) c.variant = parse_variant(j.at("variant").get<std::string>());
#define CUCTTS_READ(field) c.field = j.value(#field, c.field)
  CUCTTS_READ(context_size);
  CUCTTS_READ(n_phonemes);
  CUCTTS_READ(num_speakers);
  CUCTTS_READ(d_model);
  CUCTTS_READ(encoder_layers);
  CUCTTS_READ(encoder_heads);
  CUCTTS_READ(encoder_ff);
  CUCTTS_READ(encoder_kernel);
  CUCTTS_READ(decoder_layers);
  CUCTTS_READ(decoder_heads);
  CUCTTS_READ(decoder_ff);
  CUCTTS_READ(decoder_kernel);
  CUCTTS_READ(n_mels);
  CUCTTS_READ(d_ctx);
  CUCTTS_READ(context_heads);
  CUCTTS_READ(d_attn);
  CUCTTS_READ(d_z);
  CUCTTS_READ(vae_hidden);
  CUCTTS_READ(vae_layers);
  CUCTTS_READ(duration_filter);
  CUCTTS_READ(duration_kernel);
  CUCTTS_READ(reference_kernel);
  CUCTTS_READ(dropout);
  CUCTTS_READ(logvar_clamp);
  CUCTTS_READ(positional_encoding);
  CUCTTS_READ(mask_sentinel_pairs);
#undef CUCTTS_READ
}

inline void to_json(nlohmann::json& j, const OptimConfig& c) {
  j = {{"peak_lr", c.peak_lr}, {"warmup_steps", c.warmup_steps}, {"beta1", c.beta1},
       {"beta2", c.beta2},     {"eps", c.eps},                   {"grad_clip", c.grad_clip}};
}
inline void from_json(const nlohmann::json& j, OptimConfig& c) {
  c.peak_lr = j.value("peak_lr", c.peak_lr);
  c.warmup_steps = j.value("warmup_steps", c.warmup_steps);
  c.beta1 = j.value("beta1", c.beta1);
  c.beta2 = j.value("beta2", c.beta2);
  c.eps = j.value("eps", c.eps);
  c.grad_clip = j.value("grad_clip", c.grad_clip);
}

inline void to_json(nlohmann::json& j, const TrainConfig& c) {
  j = {{"steps", c.steps},
       {"beta1_max", c.beta1_max},
       {"beta2_max", c.beta2_max},
       {"kl_warmup_steps", c.kl_warmup_steps},
       {"frame_budget", c.frame_budget},
       {"checkpoint_every", c.checkpoint_every},
       {"log_every", c.log_every},
       {"seed", c.seed},
       {"divergence_factor", c.divergence_factor},
       {"optim", c.optim}};
}
inline void from_json(const nlohmann::json& j, TrainConfig& c) {
  c.steps = j.value("steps", c.steps);
  c.beta1_max = j.value("beta1_max", c.beta1_max);
  c.beta2_max = j.value("beta2_max", c.beta2_max);
  c.kl_warmup_steps = j.value("kl_warmup_steps", c.kl_warmup_steps);
  c.frame_budget = j.value("frame_budget", c.frame_budget);
  c.checkpoint_every = j.value("checkpoint_every", c.checkpoint_every);
  c.log_every = j.value("log_every", c.log_every);
  c.seed = j.value("seed", c.seed);
  c.divergence_factor = j.value("divergence_factor", c.divergence_factor);
  if (j.contains("optim")) j.at("optim").get_to(c.optim);
}

inline void to_json(nlohmann::json& j, const PathsConfig& c) {
  j = {{"manifest", c.manifest},          {"context_cache", c.context_cache}, {"out_dir", c.out_dir},
       {"embedder", c.embedder},          {"embedder_path", c.embedder_path},
       {"vocoder_command", c.vocoder_command}};
}
inline void from_json(const nlohmann::json& j, PathsConfig& c) {
  c.manifest = j.value("manifest", c.manifest);
  c.context_cache = j.value("context_cache", c.context_cache);
  c.out_dir = j.value("out_dir", c.out_dir);
  c.embedder = j.value("embedder", c.embedder);
  c.embedder_path = j.value("embedder_path", c.embedder_path);
  c.vocoder_command = j.value("vocoder_command", c.vocoder_command);
}

inline nlohmann::json audio_to_json(const audio::AudioConfig& c) {
  return {{"sample_rate", c.sample_rate}, {"n_fft", c.n_fft},   {"hop", c.hop},
          {"win", c.win},                 {"n_mels", c.n_mels}, {"fmin", c.fmin},
          {"fmax", c.fmax},               {"f0_min", c.f0_min}, {"f0_max", c.f0_max},
          {"voicing_threshold", c.voicing_threshold},           {"log_floor", c.log_floor},
          {"griffin_lim_iters", c.griffin_lim_iters}};
}
inline audio::AudioConfig audio_from_json(const nlohmann::json& j, audio::AudioConfig c = {}) {
  c.sample_rate = j.value("sample_rate", c.sample_rate);
  c.n_fft = j.value("n_fft", c.n_fft);
  c.hop = j.value("hop", c.hop);
  c.win = j.value("win", c.win);
  c.n_mels = j.value("n_mels", c.n_mels);
  c.fmin = j.value("fmin", c.fmin);
  c.fmax = j.value("fmax", c.fmax);
  c.f0_min = j.value("f0_min", c.f0_min);
  c.f0_max = j.value("f0_max", c.f0_max);
  c.voicing_threshold = j.value("voicing_threshold", c.voicing_threshold);
  c.log_floor = j.value("log_floor", c.log_floor);
  c.griffin_lim_iters = j.value("griffin_lim_iters", c.griffin_lim_iters);
  return c;
}

inline nlohmann::json to_json(const RunConfig& c) {
  return {{"model", c.model},
          {"train", c.train},
          {"paths", c.paths},
          {"audio", audio_to_json(c.audio)},
          {"g2p", {{"edge_silence", c.g2p.edge_silence}, {"word_boundaries", c.g2p.word_boundaries}}}};
}

inline RunConfig run_config_from_json(const nlohmann::json& j) {
  RunConfig c;
  if (j.contains("model")) j.at("model").get_to(c.model);
  if (j.contains("train")) j.at("train").get_to(c.train);
  if (j.contains("paths")) j.at("paths").get_to(c.paths);
  if (j.contains("audio")) c.audio = audio_from_json(j.at("audio"));
  if (j.contains("g2p")) {
    c.g2p.edge_silence = j.at("g2p").value("edge_silence", c.g2p.edge_silence);
    c.g2p.word_boundaries = j.at("g2p").value("word_boundaries", c.g2p.word_boundaries);
  }
  return c;
}

inline RunConfig load_run_config(const std::filesystem::path& path) {
  std::ifstream is(path);
  if (!is) throw std::runtime_error("cannot open config " + path.string());
  return run_config_from_json(nlohmann::json::parse(is));
}

inline void save_run_config(const std::filesystem::path& path, const RunConfig& c) {
  std::ofstream os(path);
  if (!os) throw std::runtime_error("cannot write config " + path.string());
  os << to_json(c).dump(2) << '\n';
}

/// Stable identifier of the parameter layout a model config produces.
inline std::string fingerprint(const ModelConfig& c) {
  nlohmann::json j = c;
  j.erase("dropout");
  j.erase("mask_sentinel_pairs");
  const std::string s = j.dump();
  std::uint64_t h = 1469598103934665603ULL;
  for (unsigned char ch : s) {
    h ^= ch;
    h *= 1099511628211ULL;
  }
  char buf[17];
  std::snprintf(buf, sizeof(buf), "%016llx", static_cast<unsigned long long>(h));
  return buf;
}

}  // namespace cuctts

#endif  // CUCTTS_CONFIG_HPP_
