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

// Objective, optimizer, batching and the training loop.
//
//   total = L1(mel) + MSE(log-duration) + beta1 * KL(post || prior)
//           + beta2 * KL(prior || N(0, I))      (+ pitch/energy MSE, baseline)

#ifndef CUCTTS_TRAINING_HPP_
#define CUCTTS_TRAINING_HPP_

#include <json.hpp>

#include <algorithm>
#include <chrono>
#include <cmath>
#include <filesystem>
#include <fstream>
#include <map>
#include <optional>
#include <random>
#include <set>
#include <sstream>
#include <stdexcept>
#include <string>
#include <vector>

#include "cuctts/archive.hpp"
#include "cuctts/config.hpp"
#include "cuctts/context_encoder.hpp"
#include "cuctts/corpus.hpp"
#include "cuctts/model.hpp"

namespace cuctts {

class NonFiniteLossError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

class DivergenceError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

struct LossBreakdown {
  double recon = 0.0;
  double dur = 0.0;
  double kl_post = 0.0;
  double kl_prior = 0.0;
  double variance = 0.0;  ///< baseline pitch + energy MSE
  double beta1 = 0.0;
  double beta2 = 0.0;
  double total = 0.0;
};

inline void to_json(nlohmann::json& j, const LossBreakdown& l) {
  j = {{"recon", l.recon}, {"dur", l.dur},         {"kl_post", l.kl_post}, {"kl_prior", l.kl_prior},
       {"beta1", l.beta1}, {"beta2", l.beta2},     {"variance", l.variance}, {"total", l.total}};
}

template <typename S>
struct LossTensors {
  Tensor<S> total;
  LossBreakdown parts;
};

/// beta(step) = beta_max * min(1, step / warmup).
inline double kl_anneal(long step, long warmup_steps, double beta_max) {
  if (step < 0) throw std::invalid_argument("kl_anneal: negative step");
  if (warmup_steps <= 0) return beta_max;
  return beta_max * std::min(1.0, static_cast<double>(step) / static_cast<double>(warmup_steps));
}

/// Batch objective. Reconstruction is the L1 mean over every frame and bin in
/// the batch; the duration term averages over phonemes; the KL terms are
/// per-utterance sums averaged over the batch.
template <typename S>
LossTensors<S> elbo_loss(const std::vector<ForwardResult<S>>& results,
                         const std::vector<const UtteranceInput<S>*>& inputs, double beta1, double beta2) {
  if (results.empty() || results.size() != inputs.size()) throw std::invalid_argument("elbo_loss: empty or mismatched batch");
  long frames = 0, phonemes = 0;
  Eigen::Index n_mels = 0;
  for (const auto* in : inputs) {
    frames += in->mel.rows();
    phonemes += static_cast<long>(in->length());
    n_mels = in->mel.cols();
  }
  std::vector<Tensor<S>> recon, dur, kl_post, kl_prior, variance;
  for (std::size_t b = 0; b < results.size(); ++b) {
    const auto& r = results[b];
    const auto& in = *inputs[b];
    if (r.mel.rows() != in.mel.rows() || r.mel.cols() != in.mel.cols())
      throw ShapeError("elbo_loss: predicted mel is " + std::to_string(r.mel.rows()) + "x" +
                       std::to_string(r.mel.cols()) + ", target is " + std::to_string(in.mel.rows()) + "x" +
                       std::to_string(in.mel.cols()));
    recon.push_back(ag::sum(ag::abs(ag::sub(r.mel, Tensor<S>::constant(in.mel)))));
    Matrix<S> logd(static_cast<Eigen::Index>(in.length()), 1);
    for (std::size_t t = 0; t < in.length(); ++t)
      logd(static_cast<Eigen::Index>(t), 0) = static_cast<S>(log_duration_target(in.durations[t]));
    dur.push_back(ag::sum(ag::square(ag::sub(r.enc.D, Tensor<S>::constant(logd)))));
    kl_post.push_back(r.kl_post);
    kl_prior.push_back(r.kl_prior);
    if (r.pitch.defined()) {
      Matrix<S> p(logd.rows(), 1), e(logd.rows(), 1);
      for (Eigen::Index t = 0; t < p.rows(); ++t) {
        p(t, 0) = in.pitch.at(static_cast<std::size_t>(t));
        e(t, 0) = in.energy.at(static_cast<std::size_t>(t));
      }
      variance.push_back(ag::add(ag::sum(ag::square(ag::sub(r.pitch, Tensor<S>::constant(p)))),
                                 ag::sum(ag::square(ag::sub(r.energy, Tensor<S>::constant(e))))));
    }
  }
  auto total_of = [](const std::vector<Tensor<S>>& v) {
    Tensor<S> acc = v.front();
    for (std::size_t i = 1; i < v.size(); ++i) acc = ag::add(acc, v[i]);
    return acc;
  };
  const S batch = static_cast<S>(results.size());
  auto l_recon = ag::scale(total_of(recon), S(1) / static_cast<S>(frames * n_mels));
  auto l_dur = ag::scale(total_of(dur), S(1) / static_cast<S>(phonemes));
  auto l_post = ag::scale(total_of(kl_post), S(1) / batch);
  auto l_prior = ag::scale(total_of(kl_prior), S(1) / batch);

  LossTensors<S> out;
  out.parts.recon = static_cast<double>(l_recon.item());
  out.parts.dur = static_cast<double>(l_dur.item());
  out.parts.kl_post = static_cast<double>(l_post.item());
  out.parts.kl_prior = static_cast<double>(l_prior.item());
  out.parts.beta1 = beta1;
  out.parts.beta2 = beta2;
  out.total = ag::add(ag::add(l_recon, l_dur),
                      ag::add(ag::scale(l_post, static_cast<S>(beta1)), ag::scale(l_prior, static_cast<S>(beta2))));
  if (!variance.empty()) {
    auto l_var = ag::scale(total_of(variance), S(1) / static_cast<S>(phonemes));
    out.parts.variance = static_cast<double>(l_var.item());
    out.total = ag::add(out.total, l_var);
  }
  out.parts.total = static_cast<double>(out.total.item());
  const std::pair<const char*, double> terms[] = {{"recon", out.parts.recon},       {"dur", out.parts.dur},
                                                  {"kl_post", out.parts.kl_post},   {"kl_prior", out.parts.kl_prior},
                                                  {"variance", out.parts.variance}, {"total", out.parts.total}};
  for (const auto& [name, v] : terms)
    if (!std::isfinite(v)) throw NonFiniteLossError(std::string("non-finite ") + name + " loss");
  return out;
}

// ---------------------------------------------------------------------------
// Optimization

/// Linear warmup to peak_lr, then inverse square-root decay. Steps are 1-based.
inline double learning_rate(long step, const OptimConfig& c) {
  const double s = static_cast<double>(std::max(step, 1L));
  if (c.warmup_steps <= 0) return c.peak_lr;
  const double w = static_cast<double>(c.warmup_steps);
  return c.peak_lr * std::min(s / w, std::sqrt(w / s));
}

/// Scales all gradients so their global L2 norm is at most max_norm.
/// Returns the norm before clipping.
template <typename S>
double clip_grad_norm(nn::ParamStore<S>& ps, double max_norm) {
  double sq = 0.0;
  for (auto& [_, t] : ps.params())
    if (t.has_grad()) sq += static_cast<double>(t.grad().squaredNorm());
  const double norm = std::sqrt(sq);
  if (max_norm > 0.0 && norm > max_norm) {
    const S f = static_cast<S>(max_norm / (norm + 1e-12));
    for (auto& [_, t] : ps.params())
      if (t.has_grad()) t.node()->grad *= f;
  }
  return norm;
}

template <typename S>
class Adam {
 public:
  Adam(nn::ParamStore<S>& ps, OptimConfig cfg) : ps_(&ps), cfg_(cfg) {
    for (const auto& [_, t] : ps.params()) {
      m_.push_back(Matrix<S>::Zero(t.rows(), t.cols()));
      v_.push_back(Matrix<S>::Zero(t.rows(), t.cols()));
    }
  }

  void step(double lr) {
    ++t_;
    const double bc1 = 1.0 - std::pow(cfg_.beta1, static_cast<double>(t_));
    const double bc2 = 1.0 - std::pow(cfg_.beta2, static_cast<double>(t_));
    const S b1 = static_cast<S>(cfg_.beta1), b2 = static_cast<S>(cfg_.beta2);
    auto& params = ps_->params();
    for (std::size_t i = 0; i < params.size(); ++i) {
      auto& p = params[i].second;
      if (!p.has_grad()) continue;
      const auto& g = p.grad();
      m_[i] = b1 * m_[i] + (S(1) - b1) * g;
      v_[i] = b2 * v_[i] + (S(1) - b2) * g.cwiseProduct(g);
      const auto mhat = m_[i].array() / static_cast<S>(bc1);
      const auto vhat = v_[i].array() / static_cast<S>(bc2);
      p.mutable_value().array() -= static_cast<S>(lr) * mhat / (vhat.sqrt() + static_cast<S>(cfg_.eps));
    }
  }

  long steps_taken() const { return t_; }

  void save(io::TensorArchive& a) const {
    const auto& params = ps_->params();
    for (std::size_t i = 0; i < params.size(); ++i) {
      a.put_matrix<S>("adam/m/" + params[i].first, m_[i]);
      a.put_matrix<S>("adam/v/" + params[i].first, v_[i]);
    }
    a.put_f64("adam/t", Matrix<double>::Constant(1, 1, static_cast<double>(t_)));
  }

  void load(const io::TensorArchive& a) {
    const auto& params = ps_->params();
    for (std::size_t i = 0; i < params.size(); ++i) {
      m_[i] = a.get_matrix<S>("adam/m/" + params[i].first);
      v_[i] = a.get_matrix<S>("adam/v/" + params[i].first);
    }
    t_ = static_cast<long>(a.get_f64("adam/t")(0, 0));
  }

 private:
  nn::ParamStore<S>* ps_;
  OptimConfig cfg_;
  std::vector<Matrix<S>> m_, v_;
  long t_ = 0;
};

// ---------------------------------------------------------------------------
// Data

template <typename S>
struct TrainingExample {
  std::string id;
  UtteranceInput<S> input;
};

/// Per-phoneme pitch (mean voiced F0 / 100 Hz, 0 when unvoiced) and energy
/// (log(1 + mean frame energy)) targets for the baseline predictors.
inline void phoneme_prosody_targets(const corpus::AcousticFeatures& f, std::vector<double>& pitch,
                                    std::vector<double>& energy) {
  pitch.clear();
  energy.clear();
  std::size_t frame = 0;
  for (int d : f.durations) {
    double f0 = 0.0, en = 0.0;
    int voiced = 0;
    for (int k = 0; k < d; ++k, ++frame) {
      if (f.f0[frame] > 0.0f) {
        f0 += f.f0[frame];
        ++voiced;
      }
      en += f.energy[frame];
    }
    pitch.push_back(voiced ? f0 / voiced / 100.0 : 0.0);
    energy.push_back(d ? std::log1p(en / d) : 0.0);
  }
}

/// Speaker ids of the utterances that have features, sorted.
inline std::vector<std::string> speaker_names(const std::vector<corpus::UtteranceRecord>& records) {
  std::set<std::string> s;
  for (const auto& r : records)
    if (!r.feature_path.empty()) s.insert(r.speaker_id);
  return {s.begin(), s.end()};
}

template <typename S>
UtteranceInput<S> make_input(const corpus::FeatureFile& ff, int speaker,
                             const std::optional<context::ContextEmbeddingSet>& ctx) {
  UtteranceInput<S> in;
  in.phoneme_ids = ff.phonemes.ids();
  for (const auto& p : ff.phonemes.phonemes) in.silence.push_back(text::is_silence(p));
  in.speaker = speaker;
  in.mel = ff.features.mel.cast<S>();
  in.durations = ff.features.durations;
  std::vector<double> pitch, energy;
  phoneme_prosody_targets(ff.features, pitch, energy);
  for (double p : pitch) in.pitch.push_back(static_cast<S>(p));
  for (double e : energy) in.energy.push_back(static_cast<S>(e));
  if (ctx) {
    in.context = ctx->vectors.cast<S>();
    in.context_sentinel = ctx->sentinel;
  }
  return in;
}

/// Loads every manifest record that has features. Context embeddings are read
/// from `context_cache` only when the variant consumes them.
template <typename S>
std::vector<TrainingExample<S>> load_training_set(const std::vector<corpus::UtteranceRecord>& records,
                                                  const ModelConfig& cfg, const std::vector<std::string>& speakers,
                                                  const std::filesystem::path& context_cache) {
  std::map<std::string, int> speaker_index;
  for (std::size_t i = 0; i < speakers.size(); ++i) speaker_index[speakers[i]] = static_cast<int>(i);
  if (uses_context(cfg.variant)) {
    if (context_cache.empty()) throw std::invalid_argument("cuc_vae training requires a context cache directory");
    context::verify_cache(records, context_cache);
  }
  std::vector<TrainingExample<S>> out;
  for (const auto& r : records) {
    if (r.feature_path.empty()) continue;
    std::optional<context::ContextEmbeddingSet> ctx;
    if (uses_context(cfg.variant)) {
      ctx = context::load_context(context::cache_path(context_cache, r.id));
      if (ctx->L != cfg.context_size || ctx->vectors.cols() != cfg.d_ctx)
        throw std::invalid_argument("context cache entry " + r.id + " has L=" + std::to_string(ctx->L) + ", d=" +
                                    std::to_string(ctx->vectors.cols()) + "; model expects L=" +
                                    std::to_string(cfg.context_size) + ", d=" + std::to_string(cfg.d_ctx));
    }
    out.push_back({r.id, make_input<S>(corpus::load_features(r.feature_path), speaker_index.at(r.speaker_id), ctx)});
  }
  if (out.empty()) throw std::invalid_argument("manifest has no utterances with features");
  return out;
}

/// Shuffles and greedily packs utterances into batches of at most
/// `frame_budget` mel frames. An utterance longer than the budget forms its
/// own batch.
template <typename Rng>
std::vector<std::vector<std::size_t>> make_batches(const std::vector<long>& frame_counts, long frame_budget, Rng& rng) {
  std::vector<std::size_t> order(frame_counts.size());
  std::iota(order.begin(), order.end(), std::size_t{0});
  std::shuffle(order.begin(), order.end(), rng);
  std::vector<std::vector<std::size_t>> batches;
  std::vector<std::size_t> cur;
  long used = 0;
  for (auto i : order) {
    if (!cur.empty() && used + frame_counts[i] > frame_budget) {
      batches.push_back(std::move(cur));
      cur.clear();
      used = 0;
    }
    cur.push_back(i);
    used += frame_counts[i];
  }
  if (!cur.empty()) batches.push_back(std::move(cur));
  return batches;
}

// ---------------------------------------------------------------------------
// Trainer

struct StepReport {
  long step = 0;
  double lr = 0.0;
  double grad_norm = 0.0;
  std::size_t batch_size = 0;
  LossBreakdown loss;
};

template <typename S>
class Trainer {
 public:
  Trainer(TTSModel<S>& model, TrainConfig cfg)
      : model_(&model), cfg_(cfg), adam_(model.params(), cfg.optim), rng_(cfg.seed) {}

  /// One optimizer update on `batch`.
  StepReport step(const std::vector<const UtteranceInput<S>*>& batch) {
    const long s = step_ + 1;
    const double b1 = kl_anneal(s, cfg_.kl_warmup_steps, cfg_.beta1_max);
    const double b2 = kl_anneal(s, cfg_.kl_warmup_steps, cfg_.beta2_max);
    model_->params().zero_grad();
    std::vector<ForwardResult<S>> results;
    for (const auto* in : batch) results.push_back(model_->forward(*in, rng_));
    LossTensors<S> loss;
    try {
      loss = elbo_loss(results, batch, b1, b2);
    } catch (const NonFiniteLossError& e) {
      throw NonFiniteLossError(std::string(e.what()) + " at step " + std::to_string(s));
    }
    if (!initial_loss_) initial_loss_ = loss.parts.total;
    if (loss.parts.total > cfg_.divergence_factor * std::max(*initial_loss_, 1e-8))
      throw DivergenceError("training diverged at step " + std::to_string(s) + ": loss " +
                            std::to_string(loss.parts.total) + " exceeds " + std::to_string(cfg_.divergence_factor) +
                            " x initial loss " + std::to_string(*initial_loss_));
    ag::backward(loss.total);
    StepReport rep;
    rep.grad_norm = clip_grad_norm(model_->params(), cfg_.optim.grad_clip);
    rep.lr = learning_rate(s, cfg_.optim);
    adam_.step(rep.lr);
    step_ = s;
    rep.step = s;
    rep.batch_size = batch.size();
    rep.loss = loss.parts;
    return rep;
  }

  long global_step() const { return step_; }
  std::mt19937_64& rng() { return rng_; }
  TTSModel<S>& model() { return *model_; }

  void save_checkpoint(const std::filesystem::path& path) const {
    io::TensorArchive a;
    model_->save(a);
    adam_.save(a);
    a.put_f64("train/step", Matrix<double>::Constant(1, 1, static_cast<double>(step_)));
    a.put_f64("train/initial_loss", Matrix<double>::Constant(1, 1, initial_loss_.value_or(-1.0)));
    std::ostringstream rs;
    rs << rng_;
    a.put_string("train/rng", rs.str());
    if (path.has_parent_path()) std::filesystem::create_directories(path.parent_path());
    a.save(path);
  }

  void load_checkpoint(const std::filesystem::path& path) {
    const auto a = io::TensorArchive::load(path);
    model_->load(a);
    adam_.load(a);
    step_ = static_cast<long>(a.get_f64("train/step")(0, 0));
    const double init = a.get_f64("train/initial_loss")(0, 0);
    initial_loss_ = init >= 0.0 ? std::optional<double>(init) : std::nullopt;
    std::istringstream rs(a.get_string("train/rng"));
    rs >> rng_;
  }

 private:
  TTSModel<S>* model_;
  TrainConfig cfg_;
  Adam<S> adam_;
  std::mt19937_64 rng_;
  long step_ = 0;
  std::optional<double> initial_loss_;
};

/// Model configuration stored in a checkpoint.
inline ModelConfig checkpoint_model_config(const io::TensorArchive& a) {
  return nlohmann::json::parse(a.get_string("model/config")).get<ModelConfig>();
}

/// Rebuilds a model from a checkpoint (weights and speaker table).
template <typename S>
TTSModel<S> load_model(const std::filesystem::path& path) {
  const auto a = io::TensorArchive::load(path);
  TTSModel<S> model(checkpoint_model_config(a));
  model.load(a);
  return model;
}

/// Runs `cfg.steps` updates over `examples`, re-batching every epoch. Each
/// step appends one JSON line to `log`. Checkpoints go to
/// `out_dir/checkpoint_<step>.ckpt` and `out_dir/last.ckpt`.
template <typename S>
void train(Trainer<S>& trainer, const std::vector<TrainingExample<S>>& examples, const TrainConfig& cfg,
           const std::filesystem::path& out_dir, std::ostream* log) {
  std::vector<long> frames;
  for (const auto& e : examples) frames.push_back(e.input.mel.rows());
  std::filesystem::create_directories(out_dir);
  while (trainer.global_step() < cfg.steps) {
    for (const auto& batch : make_batches(frames, cfg.frame_budget, trainer.rng())) {
      if (trainer.global_step() >= cfg.steps) break;
      std::vector<const UtteranceInput<S>*> inputs;
      for (auto i : batch) inputs.push_back(&examples[i].input);
      const auto rep = trainer.step(inputs);
      if (log && cfg.log_every > 0 && rep.step % cfg.log_every == 0) {
        nlohmann::json j = rep.loss;
        j["step"] = rep.step;
        j["lr"] = rep.lr;
        j["grad_norm"] = rep.grad_norm;
        j["batch_size"] = rep.batch_size;
        *log << j.dump() << '\n' << std::flush;
      }
      if (cfg.checkpoint_every > 0 && rep.step % cfg.checkpoint_every == 0)
        trainer.save_checkpoint(out_dir / ("checkpoint_" + std::to_string(rep.step) + ".ckpt"));
    }
  }
  trainer.save_checkpoint(out_dir / "last.ckpt");
}

}  // namespace cuctts

#endif  // CUCTTS_TRAINING_HPP_
