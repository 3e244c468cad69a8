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

// The acoustic model and its ablation variants.
//
//   baseline          H = F; pitch and energy predictors feed the decoder
//   global_vae        H = F; one utterance-level latent, N(0, I) prior
//   fine_grained_vae  H = F; per-phoneme latent, N(0, I) prior
//   cvae              H = F W; per-phoneme latent, learned prior from [H, D]
//   cuc_vae           H = [MHA(F, B), F] W; learned prior from [H, D]

#ifndef CUCTTS_MODEL_HPP_
#define CUCTTS_MODEL_HPP_

#include <cmath>
#include <numeric>
#include <optional>
#include <random>
#include <sstream>
#include <span>
#include <string>
#include <vector>

#include "cuctts/archive.hpp"
#include "cuctts/config.hpp"
#include "cuctts/cu_embedding.hpp"
#include "cuctts/cuc_vae.hpp"
#include "cuctts/decoder.hpp"
#include "cuctts/nn.hpp"

namespace cuctts {

template <typename S>
struct UtteranceInput {
  std::vector<int> phoneme_ids;
  std::vector<bool> silence;
  int speaker = 0;
  Matrix<S> context;                   ///< [2L x d_ctx], cuc_vae only
  std::vector<bool> context_sentinel;
  // Training targets.
  Matrix<S> mel;                       ///< [frames x n_mels]
  std::vector<int> durations;
  std::vector<S> pitch;                ///< per-phoneme, baseline only
  std::vector<S> energy;

  std::size_t length() const { return phoneme_ids.size(); }
};

template <typename S>
struct ForwardResult {
  MixtureEncoding<S> enc;
  Tensor<S> mel;
  std::optional<LatentTensors<S>> posterior;
  std::optional<LatentTensors<S>> prior;
  Tensor<S> z;
  Tensor<S> pitch;
  Tensor<S> energy;
  Tensor<S> kl_post;   ///< scalar
  Tensor<S> kl_prior;  ///< scalar
};

struct SynthesisOptions {
  SampleMode mode = SampleMode::kSample;
  double tau = 1.0;
  bool standard_gaussian = false;
};

template <typename S>
struct SynthesisOutput {
  Matrix<S> mel;
  std::vector<int> durations;
  std::vector<double> log_durations;
  LatentParams<S> prior;  ///< N(0, I) for variants without a learned prior
  LatentSample<S> latent;
};

template <typename S>
class TTSModel {
 public:
  explicit TTSModel(const ModelConfig& cfg, std::uint64_t init_seed = 1) : cfg_(cfg), params_(init_seed) {
    if (cfg.context_size < 1 && uses_context(cfg.variant)) throw std::invalid_argument("cuc_vae requires L >= 1");
    encoder_ = PhonemeEncoder<S>(params_, cfg);
    speakers_ = SpeakerTable<S>(params_, cfg.num_speakers, cfg.d_model);
    if (uses_context(cfg.variant)) {
      fusion_ = ContextFusion<S>(params_, cfg);
      projection_ = CuProjection<S>(params_, cfg.d_attn + cfg.d_model, cfg.d_model);
    } else if (cfg.variant == Variant::kCvae) {
      projection_ = CuProjection<S>(params_, cfg.d_model, cfg.d_model);
    }
    duration_ = VariancePredictor<S>(params_, "duration", cfg, cfg.d_model);
    switch (cfg.variant) {
      case Variant::kBaseline:
        pitch_ = VariancePredictor<S>(params_, "pitch", cfg, cfg.d_model);
        energy_ = VariancePredictor<S>(params_, "energy", cfg, cfg.d_model);
        pitch_embed_ = nn::Linear<S>(params_, "pitch_embed", 1, cfg.d_model);
        energy_embed_ = nn::Linear<S>(params_, "energy_embed", 1, cfg.d_model);
        break;
      case Variant::kGlobalVae:
        reference_.emplace_back(params_, "reference.conv0", cfg.n_mels, cfg.vae_hidden, cfg.reference_kernel);
        reference_.emplace_back(params_, "reference.conv1", cfg.vae_hidden, cfg.vae_hidden, cfg.reference_kernel);
        global_head_ = GaussianHead<S>(params_, "posterior", cfg.vae_hidden, cfg);
        break;
      case Variant::kFineGrainedVae:
        posterior_ = PosteriorNetwork<S>(params_, cfg);
        break;
      case Variant::kCvae:
      case Variant::kCucVae:
        posterior_ = PosteriorNetwork<S>(params_, cfg);
        prior_ = PriorNetwork<S>(params_, cfg);
        break;
    }
    if (has_vae(cfg.variant)) injection_ = LatentInjection<S>(params_, cfg);
    decoder_ = MelDecoder<S>(params_, cfg);
    std::vector<std::string> names;
    for (int i = 0; i < std::max(cfg.num_speakers, 1); ++i) names.push_back("speaker" + std::to_string(i));
    speakers_.set_names(names);
  }

  const ModelConfig& config() const { return cfg_; }
  nn::ParamStore<S>& params() { return params_; }
  const nn::ParamStore<S>& params() const { return params_; }
  SpeakerTable<S>& speakers() { return speakers_; }
  const SpeakerTable<S>& speakers() const { return speakers_; }
  std::size_t parameter_count() const { return params_.count(); }

  /// Zeroes every parameter whose name starts with `prefix`.
  void zero_parameters(const std::string& prefix) {
    for (auto& [name, t] : params_.params())
      if (name.rfind(prefix, 0) == 0) t.mutable_value().setZero();
  }

  void set_positional(bool on) {
    encoder_.set_positional(on);
    decoder_.set_positional(on);
  }

  // -------------------------------------------------------------------------
  // Pieces exposed for testing and analysis

  template <typename Rng>
  Tensor<S> encode_phonemes(const UtteranceInput<S>& in, double dropout, Rng& rng) const {
    if (in.phoneme_ids.empty()) throw std::invalid_argument("empty phoneme sequence");
    return add_speaker(encoder_(in.phoneme_ids, dropout, rng), speakers_.row(in.speaker));
  }

  /// G for cuc_vae; empty tensor otherwise.
  Tensor<S> fuse_context(const Tensor<S>& F, const UtteranceInput<S>& in,
                         nn::AttentionTrace<S>* trace = nullptr) const {
    if (!uses_context(cfg_.variant)) return {};
    if (in.context.rows() != 2 * cfg_.context_size)
      throw ShapeError("context embedding has " + std::to_string(in.context.rows()) + " rows, expected 2L = " +
                       std::to_string(2 * cfg_.context_size));
    std::vector<bool> mask;
    if (cfg_.mask_sentinel_pairs) mask = in.context_sentinel;
    return fusion_(F, Tensor<S>::constant(in.context), mask, trace);
  }

  template <typename Rng>
  MixtureEncoding<S> encode(const UtteranceInput<S>& in, double dropout, Rng& rng,
                            nn::AttentionTrace<S>* trace = nullptr) const {
    MixtureEncoding<S> e;
    e.F = encode_phonemes(in, dropout, rng);
    if (uses_context(cfg_.variant)) {
      e.H = projection_(fuse_context(e.F, in, trace), e.F);
    } else if (cfg_.variant == Variant::kCvae) {
      e.H = projection_(e.F);
    } else {
      e.H = e.F;
    }
    e.D = duration_(e.H, dropout, rng);
    return e;
  }

  // -------------------------------------------------------------------------
  // Training forward pass (teacher-forced durations)

  template <typename Rng>
  ForwardResult<S> forward(const UtteranceInput<S>& in, Rng& rng, double dropout_override = -1.0) const {
    const double dropout = dropout_override >= 0.0 ? dropout_override : cfg_.dropout;
    const auto T = static_cast<Eigen::Index>(in.length());
    if (static_cast<Eigen::Index>(in.durations.size()) != T)
      throw ShapeError("duration count differs from phoneme count");
    if (in.mel.cols() != cfg_.n_mels) throw ShapeError("reference mel has wrong bin count");
    ForwardResult<S> r;
    r.enc = encode(in, dropout, rng);
    r.kl_post = Tensor<S>::zeros(1, 1);
    r.kl_prior = Tensor<S>::zeros(1, 1);
    Tensor<S> hidden = r.enc.H;
    switch (cfg_.variant) {
      case Variant::kBaseline: {
        r.pitch = pitch_(r.enc.H, dropout, rng);
        r.energy = energy_(r.enc.H, dropout, rng);
        Matrix<S> p(T, 1), e(T, 1);
        for (Eigen::Index t = 0; t < T; ++t) {
          p(t, 0) = in.pitch.at(static_cast<std::size_t>(t));
          e(t, 0) = in.energy.at(static_cast<std::size_t>(t));
        }
        hidden = ag::add(ag::add(hidden, pitch_embed_(Tensor<S>::constant(p))), energy_embed_(Tensor<S>::constant(e)));
        break;
      }
      case Variant::kGlobalVae: {
        auto post = global_posterior(in.mel);
        r.kl_post = kl_prior_standard(post);
        r.z = reparameterize(post, standard_normal<S>(1, cfg_.d_z, rng));
        r.posterior = post;
        hidden = injection_(hidden, ag::broadcast_rows(r.z, T));
        break;
      }
      case Variant::kFineGrainedVae: {
        auto post = posterior_(in.mel, in.durations);
        r.kl_post = kl_prior_standard(post);
        r.z = reparameterize(post, standard_normal<S>(T, cfg_.d_z, rng));
        r.posterior = post;
        hidden = injection_(hidden, r.z);
        break;
      }
      case Variant::kCvae:
      case Variant::kCucVae: {
        Matrix<S> logd(T, 1);
        for (Eigen::Index t = 0; t < T; ++t) logd(t, 0) = static_cast<S>(log_duration_target(in.durations[static_cast<std::size_t>(t)]));
        auto prior = prior_(r.enc.H, Tensor<S>::constant(logd));
        auto post = posterior_(in.mel, in.durations);
        r.kl_post = kl_posterior_prior(post, prior);
        r.kl_prior = kl_prior_standard(prior);
        r.z = reparameterize(post, prior, standard_normal<S>(T, cfg_.d_z, rng));
        r.posterior = post;
        r.prior = prior;
        hidden = injection_(hidden, r.z);
        break;
      }
    }
    auto frames = length_regulate(hidden, in.durations);
    r.mel = decoder_(frames, dropout, rng);
    return r;
  }

  // -------------------------------------------------------------------------
  // Inference

  template <typename Rng>
  SynthesisOutput<S> synthesize(const UtteranceInput<S>& in, const SynthesisOptions& opt, Rng& rng) const {
    ag::NoGradGuard no_grad;
    const auto T = static_cast<Eigen::Index>(in.length());
    auto enc = encode(in, 0.0, rng);
    SynthesisOutput<S> out;
    std::vector<bool> silence = in.silence;
    silence.resize(in.length(), false);
    for (Eigen::Index t = 0; t < T; ++t) out.log_durations.push_back(static_cast<double>(enc.D.value()(t, 0)));
    out.durations = durations_from_log(out.log_durations, silence);
    if (std::accumulate(out.durations.begin(), out.durations.end(), 0) == 0) out.durations.back() = 1;
    Tensor<S> hidden = enc.H;
    switch (cfg_.variant) {
      case Variant::kBaseline: {
        auto p = pitch_(enc.H, 0.0, rng);
        auto e = energy_(enc.H, 0.0, rng);
        hidden = ag::add(ag::add(hidden, pitch_embed_(p)), energy_embed_(e));
        out.prior = LatentParams<S>::standard(T, cfg_.d_z);
        break;
      }
      case Variant::kGlobalVae: {
        out.prior = LatentParams<S>::standard(1, cfg_.d_z);
        out.latent = inference_sample(out.prior, opt.mode, opt.tau, true, rng);
        hidden = injection_(hidden, ag::broadcast_rows(Tensor<S>::constant(out.latent.z), T));
        break;
      }
      case Variant::kFineGrainedVae: {
        out.prior = LatentParams<S>::standard(T, cfg_.d_z);
        out.latent = inference_sample(out.prior, opt.mode, opt.tau, true, rng);
        hidden = injection_(hidden, Tensor<S>::constant(out.latent.z));
        break;
      }
      case Variant::kCvae:
      case Variant::kCucVae: {
        auto prior = prior_(enc.H, enc.D);
        out.prior = prior.values();
        out.latent = inference_sample(out.prior, opt.mode, opt.tau, opt.standard_gaussian, rng);
        hidden = injection_(hidden, Tensor<S>::constant(out.latent.z));
        break;
      }
    }
    auto frames = length_regulate(hidden, out.durations);
    out.mel = decoder_(frames, 0.0, rng).value();
    return out;
  }

  // -------------------------------------------------------------------------
  // Serialization

  void save(io::TensorArchive& a) const {
    a.put_string("model/fingerprint", fingerprint(cfg_));
    a.put_string("model/config", nlohmann::json(cfg_).dump());
    std::string names;
    for (const auto& n : speakers_.names()) names += n + "\n";
    a.put_string("model/speakers", names);
    for (const auto& [name, t] : params_.params()) a.put_matrix<S>("param/" + name, t.value());
  }

  void load(const io::TensorArchive& a) {
    const auto fp = a.get_string("model/fingerprint");
    if (fp != fingerprint(cfg_))
      throw std::runtime_error("checkpoint fingerprint " + fp + " does not match the model configuration " +
                               fingerprint(cfg_));
    for (auto& [name, t] : params_.params()) {
      auto m = a.get_matrix<S>("param/" + name);
      if (m.rows() != t.rows() || m.cols() != t.cols()) throw std::runtime_error("checkpoint shape mismatch for " + name);
      t.mutable_value() = std::move(m);
    }
    std::vector<std::string> names;
    std::istringstream ss(a.get_string("model/speakers"));
    std::string n;
    while (std::getline(ss, n))
      if (!n.empty()) names.push_back(n);
    speakers_.set_names(names);
  }

 private:
  LatentTensors<S> global_posterior(const Matrix<S>& mel) const {
    auto h = Tensor<S>::constant(mel);
    for (const auto& c : reference_) h = ag::relu(c(h));
    return global_head_(ag::mean_rows(h));
  }

  ModelConfig cfg_;
  nn::ParamStore<S> params_;
  PhonemeEncoder<S> encoder_;
  SpeakerTable<S> speakers_;
  ContextFusion<S> fusion_;
  CuProjection<S> projection_;
  VariancePredictor<S> duration_;
  VariancePredictor<S> pitch_;
  VariancePredictor<S> energy_;
  nn::Linear<S> pitch_embed_;
  nn::Linear<S> energy_embed_;
  std::vector<nn::Conv1d<S>> reference_;
  GaussianHead<S> global_head_;
  PosteriorNetwork<S> posterior_;
  PriorNetwork<S> prior_;
  LatentInjection<S> injection_;
  MelDecoder<S> decoder_;
};

}  // namespace cuctts

#endif  // CUCTTS_MODEL_HPP_
