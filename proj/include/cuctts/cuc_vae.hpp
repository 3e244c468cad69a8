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

// Per-phoneme prosody latents with an utterance-specific prior.
//
// The prior network maps [H, D] to (mu_p, log sigma_p^2); the posterior
// network maps phoneme-pooled reference mel frames to (mu, log sigma^2).
// Sampling is hierarchical:
//
//   z_p = mu_p + sigma_p * eps
//   z   = mu   + sigma   * z_p  =  mu + sigma*mu_p + sigma*sigma_p*eps
//
// so z given the prior draw is Gaussian N(mu + sigma*mu_p, (sigma*sigma_p)^2).
// The posterior-to-prior KL compares that marginal with N(mu_p, sigma_p^2).

#ifndef CUCTTS_CUC_VAE_HPP_
#define CUCTTS_CUC_VAE_HPP_

#include <cmath>
#include <concepts>
#include <random>
#include <span>
#include <stdexcept>
#include <string>
#include <vector>

#include "cuctts/config.hpp"
#include "cuctts/nn.hpp"

namespace cuctts {

/// Diagonal Gaussian parameters per phoneme, stored as mean and log-variance.
template <typename S>
struct LatentParams {
  Matrix<S> mu;      ///< [T x d_z]
  Matrix<S> logvar;  ///< [T x d_z]

  static LatentParams from_sigma(Matrix<S> mu, const Matrix<S>& sigma) {
    if (mu.rows() != sigma.rows() || mu.cols() != sigma.cols()) throw ShapeError("mu/sigma shape mismatch");
    if (!((sigma.array() > S(0)).all()) || !sigma.allFinite())
      throw std::invalid_argument("standard deviations must be finite and positive");
    return {std::move(mu), Matrix<S>(sigma.array().square().log())};
  }
  static LatentParams standard(Eigen::Index T, Eigen::Index d_z) {
    return {Matrix<S>::Zero(T, d_z), Matrix<S>::Zero(T, d_z)};
  }

  Matrix<S> sigma() const { return (logvar.array() * S(0.5)).exp().matrix(); }
  Eigen::Index rows() const { return mu.rows(); }
  Eigen::Index cols() const { return mu.cols(); }
};

template <typename S>
struct LatentSample {
  Matrix<S> z;
  Matrix<S> epsilon;
};

/// Graph-connected counterpart of LatentParams used during training.
template <typename S>
struct LatentTensors {
  ag::Tensor<S> mu;
  ag::Tensor<S> logvar;

  LatentParams<S> values() const { return {mu.value(), logvar.value()}; }
};

/// Stack of width-1 convolutions (position-wise layers) with ReLU between,
/// ending in 2*d_z channels split into mean and clamped log-variance.
template <typename S>
class GaussianHead {
 public:
  GaussianHead() = default;
  GaussianHead(nn::ParamStore<S>& ps, const std::string& name, Eigen::Index in, const ModelConfig& c)
      : d_z_(c.d_z), clamp_(static_cast<S>(c.logvar_clamp)) {
    if (c.vae_layers < 1) throw std::invalid_argument("vae_layers must be >= 1");
    Eigen::Index width = in;
    for (int i = 0; i < c.vae_layers; ++i) {
      const Eigen::Index out = i + 1 == c.vae_layers ? 2 * c.d_z : c.vae_hidden;
      layers_.emplace_back(ps, name + ".conv" + std::to_string(i), width, out, 1);
      width = out;
    }
    last_name_ = name + ".conv" + std::to_string(c.vae_layers - 1);
  }

  LatentTensors<S> operator()(const ag::Tensor<S>& x) const {
    auto h = x;
    for (std::size_t i = 0; i < layers_.size(); ++i) {
      h = layers_[i](h);
      if (i + 1 < layers_.size()) h = ag::relu(h);
    }
    return {ag::slice_cols(h, 0, d_z_), ag::clamp(ag::slice_cols(h, d_z_, d_z_), -clamp_, clamp_)};
  }

  /// Parameter names of the output layer (for zero initialization).
  std::string output_layer() const { return last_name_; }

 private:
  Eigen::Index d_z_ = 2;
  S clamp_ = S(14);
  std::vector<nn::Conv1d<S>> layers_;
  std::string last_name_;
};

/// Averages mel frames over each phoneme's duration span. Zero-duration
/// phonemes get a zero row.
template <typename S>
Matrix<S> segment_means(const Matrix<S>& frames, std::span<const int> durations) {
  long total = 0;
  for (int d : durations) {
    if (d < 0) throw std::invalid_argument("negative duration");
    total += d;
  }
  if (total != frames.rows())
    throw std::invalid_argument("durations sum to " + std::to_string(total) + " but the mel has " +
                                std::to_string(frames.rows()) + " frames");
  Matrix<S> out = Matrix<S>::Zero(static_cast<Eigen::Index>(durations.size()), frames.cols());
  Eigen::Index f = 0;
  for (std::size_t t = 0; t < durations.size(); ++t) {
    const int d = durations[t];
    if (d > 0) out.row(static_cast<Eigen::Index>(t)) = frames.middleRows(f, d).colwise().mean();
    f += d;
  }
  return out;
}

template <typename S>
class PriorNetwork {
 public:
  PriorNetwork() = default;
  PriorNetwork(nn::ParamStore<S>& ps, const ModelConfig& c) : head_(ps, "prior", c.d_model + 1, c) {}

  /// H [T x d_model], log-durations [T x 1].
  LatentTensors<S> operator()(const ag::Tensor<S>& H, const ag::Tensor<S>& log_durations) const {
    if (log_durations.rows() != H.rows() || log_durations.cols() != 1)
      throw ShapeError("prior: durations must be [T x 1] matching H");
    return head_(ag::concat_cols<S>({H, log_durations}));
  }
  const GaussianHead<S>& head() const { return head_; }

 private:
  GaussianHead<S> head_;
};

template <typename S>
class PosteriorNetwork {
 public:
  PosteriorNetwork() = default;
  PosteriorNetwork(nn::ParamStore<S>& ps, const ModelConfig& c) : head_(ps, "posterior", c.n_mels, c) {}

  LatentTensors<S> operator()(const Matrix<S>& mel, std::span<const int> durations) const {
    return head_(ag::Tensor<S>::constant(segment_means<S>(mel, durations)));
  }
  const GaussianHead<S>& head() const { return head_; }

 private:
  GaussianHead<S> head_;
};

// ---------------------------------------------------------------------------
// Sampling

template <typename S, typename Rng>
Matrix<S> standard_normal(Eigen::Index rows, Eigen::Index cols, Rng& rng) {
  std::normal_distribution<double> nd;
  Matrix<S> m(rows, cols);
  for (Eigen::Index i = 0; i < m.size(); ++i) m.data()[i] = static_cast<S>(nd(rng));
  return m;
}

/// z_p = mu_p + sigma_p * eps.
template <typename S>
LatentSample<S> sample_prior(const LatentParams<S>& prior, const Matrix<S>& epsilon) {
  if (epsilon.rows() != prior.rows() || epsilon.cols() != prior.cols()) throw ShapeError("epsilon shape mismatch");
  return {(prior.mu.array() + prior.sigma().array() * epsilon.array()).matrix(), epsilon};
}

template <typename S, std::uniform_random_bit_generator Rng>
LatentSample<S> sample_prior(const LatentParams<S>& prior, Rng& rng) {
  return sample_prior(prior, standard_normal<S>(prior.rows(), prior.cols(), rng));
}

/// z = mu + sigma * z_p.
template <typename S>
LatentSample<S> sample_posterior(const LatentParams<S>& posterior, const LatentSample<S>& z_p) {
  if (z_p.z.rows() != posterior.rows() || z_p.z.cols() != posterior.cols()) throw ShapeError("z_p shape mismatch");
  return {(posterior.mu.array() + posterior.sigma().array() * z_p.z.array()).matrix(), z_p.epsilon};
}

/// Single-expression form of the composed draw.
template <typename S>
Matrix<S> compose_sample(const LatentParams<S>& posterior, const LatentParams<S>& prior, const Matrix<S>& epsilon) {
  const Matrix<S> sigma = posterior.sigma();
  const auto s = sigma.array();
  return (posterior.mu.array() + s * prior.mu.array() + s * prior.sigma().array() * epsilon.array()).matrix();
}

enum class SampleMode { kSample, kMean };

inline SampleMode parse_sample_mode(const std::string& s) {
  if (s == "sample") return SampleMode::kSample;
  if (s == "mean") return SampleMode::kMean;
  throw std::invalid_argument("unknown sampling mode '" + s + "' (expected sample or mean)");
}

/// Inference-time latent draw. With `standard_gaussian` the learned prior is
/// ignored and z ~ N(0, tau^2).
template <typename S, typename Rng>
LatentSample<S> inference_sample(const LatentParams<S>& prior, SampleMode mode, double tau, bool standard_gaussian,
                                 Rng& rng) {
  if (!(tau >= 0.0)) throw std::invalid_argument("temperature must be >= 0");
  LatentSample<S> out;
  out.epsilon = mode == SampleMode::kSample ? standard_normal<S>(prior.rows(), prior.cols(), rng)
                                            : Matrix<S>::Zero(prior.rows(), prior.cols());
  const S t = static_cast<S>(tau);
  if (standard_gaussian) {
    out.z = t * out.epsilon;
  } else {
    out.z = (prior.mu.array() + t * prior.sigma().array() * out.epsilon.array()).matrix();
  }
  return out;
}

// ---------------------------------------------------------------------------
// KL divergences (closed form, summed over phonemes and dimensions)

namespace detail {
template <typename S>
void check_params(const LatentParams<S>& p, const char* what) {
  if (!p.mu.allFinite() || !p.logvar.allFinite())
    throw std::invalid_argument(std::string(what) + ": parameters must be finite with positive variance");
}
}  // namespace detail

/// KL( N(mu + sigma*mu_p, (sigma*sigma_p)^2) || N(mu_p, sigma_p^2) ).
template <typename S>
S kl_posterior_prior(const LatentParams<S>& post, const LatentParams<S>& prior) {
  detail::check_params(post, "kl_posterior_prior");
  detail::check_params(prior, "kl_posterior_prior");
  if (post.rows() != prior.rows() || post.cols() != prior.cols()) throw ShapeError("posterior/prior shape mismatch");
  const auto lv = post.logvar.array();
  const auto sigma = (lv * S(0.5)).exp();
  const auto shift = post.mu.array() + (sigma - S(1)) * prior.mu.array();
  return (S(0.5) * (lv.exp() - S(1) - lv) + S(0.5) * shift.square() * (-prior.logvar.array()).exp()).sum();
}

/// KL( N(mu_p, sigma_p^2) || N(0, 1) ).
template <typename S>
S kl_prior_standard(const LatentParams<S>& prior) {
  detail::check_params(prior, "kl_prior_standard");
  const auto lv = prior.logvar.array();
  return (S(0.5) * (prior.mu.array().square() + lv.exp() - S(1) - lv)).sum();
}

template <typename S>
ag::Tensor<S> kl_posterior_prior(const LatentTensors<S>& post, const LatentTensors<S>& prior) {
  auto sigma = ag::exp(ag::scale(post.logvar, S(0.5)));
  auto shift = ag::add(post.mu, ag::mul(ag::add_scalar(sigma, S(-1)), prior.mu));
  auto var_term = ag::sub(ag::add_scalar(ag::exp(post.logvar), S(-1)), post.logvar);
  auto mean_term = ag::mul(ag::square(shift), ag::exp(ag::scale(prior.logvar, S(-1))));
  return ag::scale(ag::sum(ag::add(var_term, mean_term)), S(0.5));
}

template <typename S>
ag::Tensor<S> kl_prior_standard(const LatentTensors<S>& prior) {
  auto t = ag::sub(ag::add_scalar(ag::add(ag::square(prior.mu), ag::exp(prior.logvar)), S(-1)), prior.logvar);
  return ag::scale(ag::sum(t), S(0.5));
}

/// Tensor form of the hierarchical reparameterized draw used in training.
template <typename S>
ag::Tensor<S> reparameterize(const LatentTensors<S>& post, const LatentTensors<S>& prior, const Matrix<S>& epsilon) {
  auto z_p = ag::add(prior.mu, ag::mul(ag::exp(ag::scale(prior.logvar, S(0.5))), ag::Tensor<S>::constant(epsilon)));
  return ag::add(post.mu, ag::mul(ag::exp(ag::scale(post.logvar, S(0.5))), z_p));
}

/// z = mu + sigma * eps against a fixed standard-normal prior.
template <typename S>
ag::Tensor<S> reparameterize(const LatentTensors<S>& post, const Matrix<S>& epsilon) {
  return ag::add(post.mu, ag::mul(ag::exp(ag::scale(post.logvar, S(0.5))), ag::Tensor<S>::constant(epsilon)));
}

}  // namespace cuctts

#endif  // CUCTTS_CUC_VAE_HPP_
