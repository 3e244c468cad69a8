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

// Signal processing: WAV I/O, resampling, STFT and log-mel analysis, an
// autocorrelation pitch tracker, MFCCs and Griffin-Lim phase reconstruction.

#ifndef CUCTTS_AUDIO_HPP_
#define CUCTTS_AUDIO_HPP_

#include <unsupported/Eigen/FFT>

#include <algorithm>
#include <cmath>
#include <complex>
#include <cstdint>
#include <cstring>
#include <filesystem>
#include <fstream>
#include <numbers>
#include <span>
#include <stdexcept>
#include <string>
#include <vector>

#include "cuctts/autograd.hpp"

namespace cuctts::audio {

struct AudioConfig {
  int sample_rate = 22050;
  int n_fft = 1024;
  int hop = 256;
  int win = 1024;
  int n_mels = 80;
  double fmin = 0.0;
  double fmax = 8000.0;
  double f0_min = 70.0;
  double f0_max = 400.0;
  double voicing_threshold = 0.3;
  double log_floor = 1e-5;
  int griffin_lim_iters = 32;
};

struct Waveform {
  int sample_rate = 22050;
  std::vector<float> samples;
};

// ---------------------------------------------------------------------------
// WAV files (RIFF, PCM16 or IEEE float32, mono or multi-channel)

namespace detail {
template <typename T>
void put(std::ostream& os, T v) {
  os.write(reinterpret_cast<const char*>(&v), sizeof(T));
}
template <typename T>
T get(const std::vector<char>& buf, std::size_t off) {
  if (off + sizeof(T) > buf.size()) throw std::runtime_error("truncated WAV file");
  T v;
  std::memcpy(&v, buf.data() + off, sizeof(T));
  return v;
}
}  // namespace detail

inline void write_wav(const std::filesystem::path& path, const Waveform& w) {
  std::ofstream os(path, std::ios::binary);
  if (!os) throw std::runtime_error("cannot open " + path.string() + " for writing");
  const auto n = static_cast<std::uint32_t>(w.samples.size());
  os.write("RIFF", 4);
  detail::put<std::uint32_t>(os, 36 + n * 2);
  os.write("WAVEfmt ", 8);
  detail::put<std::uint32_t>(os, 16);
  detail::put<std::uint16_t>(os, 1);
  detail::put<std::uint16_t>(os, 1);
  detail::put<std::uint32_t>(os, static_cast<std::uint32_t>(w.sample_rate));
  detail::put<std::uint32_t>(os, static_cast<std::uint32_t>(w.sample_rate) * 2);
  detail::put<std::uint16_t>(os, 2);
  detail::put<std::uint16_t>(os, 16);
  os.write("data", 4);
  detail::put<std::uint32_t>(os, n * 2);
  for (float s : w.samples) {
    const float c = std::clamp(s, -1.0f, 1.0f);
    detail::put<std::int16_t>(os, static_cast<std::int16_t>(std::lrint(c * 32767.0f)));
  }
}

/// Reads PCM16 or float32 WAV; multi-channel input is averaged to mono.
inline Waveform read_wav(const std::filesystem::path& path) {
  std::ifstream is(path, std::ios::binary);
  if (!is) throw std::runtime_error("cannot open " + path.string());
  std::vector<char> buf((std::istreambuf_iterator<char>(is)), std::istreambuf_iterator<char>());
  if (buf.size() < 12 || std::memcmp(buf.data(), "RIFF", 4) != 0 ||
      std::memcmp(buf.data() + 8, "WAVE", 4) != 0)
    throw std::runtime_error(path.string() + ": not a RIFF/WAVE file");
  std::size_t off = 12;
  std::uint16_t format = 0, channels = 0, bits = 0;
  std::uint32_t rate = 0;
  Waveform out;
  bool have_fmt = false;
  while (off + 8 <= buf.size()) {
    const std::string id(buf.data() + off, 4);
    const auto size = detail::get<std::uint32_t>(buf, off + 4);
    const std::size_t body = off + 8;
    if (id == "fmt ") {
      format = detail::get<std::uint16_t>(buf, body);
      channels = detail::get<std::uint16_t>(buf, body + 2);
      rate = detail::get<std::uint32_t>(buf, body + 4);
      bits = detail::get<std::uint16_t>(buf, body + 14);
      if (format == 0xFFFE && size >= 26) format = detail::get<std::uint16_t>(buf, body + 24);
      have_fmt = true;
    } else if (id == "data") {
      if (!have_fmt || channels == 0) throw std::runtime_error(path.string() + ": data before fmt");
      const std::size_t width = bits / 8;
      const std::size_t avail = std::min<std::size_t>(size, buf.size() - body);
      const std::size_t frames = avail / (width * channels);
      out.sample_rate = static_cast<int>(rate);
      out.samples.resize(frames);
      for (std::size_t f = 0; f < frames; ++f) {
        double acc = 0.0;
        for (std::size_t c = 0; c < channels; ++c) {
          const std::size_t p = body + (f * channels + c) * width;
          if (format == 1 && bits == 16) {
            acc += detail::get<std::int16_t>(buf, p) / 32768.0;
          } else if (format == 3 && bits == 32) {
            acc += detail::get<float>(buf, p);
          } else {
            throw std::runtime_error(path.string() + ": unsupported sample format");
          }
        }
        out.samples[f] = static_cast<float>(acc / channels);
      }
      return out;
    }
    off = body + size + (size & 1u);
  }
  throw std::runtime_error(path.string() + ": no data chunk");
}

/// Band-limited resampling with a Hann-windowed sinc kernel.
inline Waveform resample(const Waveform& in, int target_rate, int half_width = 16) {
  if (in.sample_rate == target_rate || in.samples.empty()) {
    Waveform out = in;
    out.sample_rate = target_rate;
    return out;
  }
  const double ratio = static_cast<double>(target_rate) / in.sample_rate;
  const double cutoff = std::min(1.0, ratio);
  const auto n_out = static_cast<std::size_t>(std::llround(in.samples.size() * ratio));
  Waveform out{target_rate, std::vector<float>(n_out)};
  const double span = half_width / cutoff;
  for (std::size_t i = 0; i < n_out; ++i) {
    const double t = i / ratio;
    const auto lo = static_cast<long>(std::ceil(t - span));
    const auto hi = static_cast<long>(std::floor(t + span));
    double acc = 0.0;
    for (long j = std::max(lo, 0L); j <= hi && j < static_cast<long>(in.samples.size()); ++j) {
      const double x = (t - j) * cutoff;
      const double sinc = x == 0.0 ? 1.0 : std::sin(std::numbers::pi * x) / (std::numbers::pi * x);
      const double w = 0.5 + 0.5 * std::cos(std::numbers::pi * (t - j) / span);
      acc += in.samples[static_cast<std::size_t>(j)] * cutoff * sinc * w;
    }
    out.samples[i] = static_cast<float>(acc);
  }
  return out;
}

// ---------------------------------------------------------------------------
// STFT

/// Frame count with centered frames: 1 + floor(n / hop).
inline int num_frames(std::size_t num_samples, int hop) {
  return 1 + static_cast<int>(num_samples / static_cast<std::size_t>(hop));
}

inline std::vector<double> hann_window(int n) {
  std::vector<double> w(static_cast<std::size_t>(n));
  for (int i = 0; i < n; ++i) w[static_cast<std::size_t>(i)] = 0.5 - 0.5 * std::cos(2.0 * std::numbers::pi * i / n);
  return w;
}

namespace detail {
inline double reflect_at(std::span<const float> x, long i) {
  const long n = static_cast<long>(x.size());
  if (n == 1) return x[0];
  while (i < 0 || i >= n) {
    if (i < 0) i = -i;
    if (i >= n) i = 2 * (n - 1) - i;
  }
  return x[static_cast<std::size_t>(i)];
}
}  // namespace detail

/// Complex spectrogram [frames x (n_fft/2+1)] with reflect-padded centered frames.
inline std::vector<std::vector<std::complex<double>>> stft(std::span<const float> x,
                                                           const AudioConfig& cfg) {
  if (x.empty()) throw std::invalid_argument("stft of empty signal");
  const int frames = num_frames(x.size(), cfg.hop);
  const auto window = hann_window(cfg.win);
  const int pad = cfg.n_fft / 2;
  const int woff = (cfg.n_fft - cfg.win) / 2;
  Eigen::FFT<double> fft;
  std::vector<double> buf(static_cast<std::size_t>(cfg.n_fft));
  std::vector<std::complex<double>> spec;
  std::vector<std::vector<std::complex<double>>> out(static_cast<std::size_t>(frames));
  for (int f = 0; f < frames; ++f) {
    std::fill(buf.begin(), buf.end(), 0.0);
    const long start = static_cast<long>(f) * cfg.hop - pad;
    for (int i = 0; i < cfg.win; ++i)
      buf[static_cast<std::size_t>(woff + i)] =
          detail::reflect_at(x, start + woff + i) * window[static_cast<std::size_t>(i)];
    fft.fwd(spec, buf);
    out[static_cast<std::size_t>(f)].assign(spec.begin(), spec.begin() + cfg.n_fft / 2 + 1);
  }
  return out;
}

/// Overlap-add inverse of stft() with window-square normalization; output
/// length is frames * hop.
inline std::vector<float> istft(const std::vector<std::vector<std::complex<double>>>& spec,
                                const AudioConfig& cfg) {
  const int frames = static_cast<int>(spec.size());
  const auto window = hann_window(cfg.win);
  const int pad = cfg.n_fft / 2;
  const int woff = (cfg.n_fft - cfg.win) / 2;
  const std::size_t total = static_cast<std::size_t>(cfg.n_fft + cfg.hop * (frames - 1));
  std::vector<double> acc(total, 0.0), wsum(total, 0.0);
  Eigen::FFT<double> fft;
  std::vector<std::complex<double>> full(static_cast<std::size_t>(cfg.n_fft));
  std::vector<double> frame;
  for (int f = 0; f < frames; ++f) {
    const auto& half = spec[static_cast<std::size_t>(f)];
    for (int k = 0; k <= cfg.n_fft / 2; ++k) full[static_cast<std::size_t>(k)] = half[static_cast<std::size_t>(k)];
    for (int k = cfg.n_fft / 2 + 1; k < cfg.n_fft; ++k)
      full[static_cast<std::size_t>(k)] = std::conj(half[static_cast<std::size_t>(cfg.n_fft - k)]);
    fft.inv(frame, full);
    for (int i = 0; i < cfg.win; ++i) {
      const std::size_t p = static_cast<std::size_t>(f * cfg.hop + woff + i);
      const double w = window[static_cast<std::size_t>(i)];
      acc[p] += frame[static_cast<std::size_t>(woff + i)] * w;
      wsum[p] += w * w;
    }
  }
  std::vector<float> y(static_cast<std::size_t>(frames) * static_cast<std::size_t>(cfg.hop));
  for (std::size_t i = 0; i < y.size(); ++i) {
    const std::size_t p = i + static_cast<std::size_t>(pad);
    y[i] = p < total && wsum[p] > 1e-8 ? static_cast<float>(acc[p] / wsum[p]) : 0.0f;
  }
  return y;
}

// ---------------------------------------------------------------------------
// Mel analysis

inline double hz_to_mel(double hz) {
  // Slaney scale: linear below 1 kHz, logarithmic above.
  const double f_sp = 200.0 / 3.0;
  const double min_log_hz = 1000.0, min_log_mel = min_log_hz / f_sp;
  const double logstep = std::log(6.4) / 27.0;
  return hz < min_log_hz ? hz / f_sp : min_log_mel + std::log(hz / min_log_hz) / logstep;
}

inline double mel_to_hz(double mel) {
  const double f_sp = 200.0 / 3.0;
  const double min_log_hz = 1000.0, min_log_mel = min_log_hz / f_sp;
  const double logstep = std::log(6.4) / 27.0;
  return mel < min_log_mel ? mel * f_sp : min_log_hz * std::exp(logstep * (mel - min_log_mel));
}

/// Slaney-normalized triangular filterbank [n_mels x (n_fft/2+1)].
inline Matrix<double> mel_filterbank(const AudioConfig& cfg) {
  const int bins = cfg.n_fft / 2 + 1;
  Matrix<double> fb = Matrix<double>::Zero(cfg.n_mels, bins);
  const double mlo = hz_to_mel(cfg.fmin), mhi = hz_to_mel(cfg.fmax);
  std::vector<double> pts(static_cast<std::size_t>(cfg.n_mels + 2));
  for (int i = 0; i < cfg.n_mels + 2; ++i)
    pts[static_cast<std::size_t>(i)] = mel_to_hz(mlo + (mhi - mlo) * i / (cfg.n_mels + 1));
  for (int m = 0; m < cfg.n_mels; ++m) {
    const double lo = pts[static_cast<std::size_t>(m)], c = pts[static_cast<std::size_t>(m + 1)],
                 hi = pts[static_cast<std::size_t>(m + 2)];
    const double enorm = 2.0 / (hi - lo);
    for (int k = 0; k < bins; ++k) {
      const double f = static_cast<double>(k) * cfg.sample_rate / cfg.n_fft;
      const double up = (f - lo) / (c - lo), down = (hi - f) / (hi - c);
      fb(m, k) = std::max(0.0, std::min(up, down)) * enorm;
    }
  }
  return fb;
}

/// Linear magnitude spectrogram [frames x bins].
inline Matrix<double> magnitude(const std::vector<std::vector<std::complex<double>>>& spec) {
  const auto frames = static_cast<Eigen::Index>(spec.size());
  const auto bins = frames ? static_cast<Eigen::Index>(spec.front().size()) : 0;
  Matrix<double> mag(frames, bins);
  for (Eigen::Index f = 0; f < frames; ++f)
    for (Eigen::Index k = 0; k < bins; ++k) mag(f, k) = std::abs(spec[static_cast<std::size_t>(f)][static_cast<std::size_t>(k)]);
  return mag;
}

/// Natural-log mel magnitudes [frames x n_mels], floored at cfg.log_floor.
inline Matrix<double> log_mel(std::span<const float> x, const AudioConfig& cfg) {
  const Matrix<double> mag = magnitude(stft(x, cfg));
  const Matrix<double> mel = mag * mel_filterbank(cfg).transpose();
  return mel.cwiseMax(cfg.log_floor).array().log().matrix();
}

/// Per-frame L2 norm of the magnitude spectrum.
inline std::vector<float> frame_energy(std::span<const float> x, const AudioConfig& cfg) {
  const Matrix<double> mag = magnitude(stft(x, cfg));
  std::vector<float> e(static_cast<std::size_t>(mag.rows()));
  for (Eigen::Index f = 0; f < mag.rows(); ++f) e[static_cast<std::size_t>(f)] = static_cast<float>(mag.row(f).norm());
  return e;
}

// ---------------------------------------------------------------------------
// Pitch

/// Frame-synchronous F0 (Hz, 0 = unvoiced) from the normalized
/// cross-correlation of each centered analysis frame. The smallest lag whose
/// correlation is within 5% of the best is chosen, which suppresses
/// sub-octave picks; parabolic interpolation refines the lag.
inline std::vector<float> track_f0(std::span<const float> x, const AudioConfig& cfg) {
  if (x.empty()) throw std::invalid_argument("track_f0 of empty signal");
  const int frames = num_frames(x.size(), cfg.hop);
  const int min_lag = std::max(2, static_cast<int>(std::floor(cfg.sample_rate / cfg.f0_max)));
  const int max_lag = static_cast<int>(std::ceil(cfg.sample_rate / cfg.f0_min));
  const int len = cfg.win;
  const int n = len - max_lag - 1;
  if (n <= 16) throw std::invalid_argument("analysis window too short for f0_min");
  std::vector<float> f0(static_cast<std::size_t>(frames), 0.0f);
  std::vector<double> frame(static_cast<std::size_t>(len));
  std::vector<double> r(static_cast<std::size_t>(max_lag + 2), 0.0);
  for (int f = 0; f < frames; ++f) {
    const long start = static_cast<long>(f) * cfg.hop - len / 2;
    double mean = 0.0;
    for (int i = 0; i < len; ++i) {
      const long p = start + i;
      frame[static_cast<std::size_t>(i)] = p >= 0 && p < static_cast<long>(x.size()) ? x[static_cast<std::size_t>(p)] : 0.0;
      mean += frame[static_cast<std::size_t>(i)];
    }
    mean /= len;
    double power = 0.0;
    for (auto& v : frame) {
      v -= mean;
      power += v * v;
    }
    if (power / len < 1e-8) continue;
    double e0 = 0.0;
    for (int i = 0; i < n; ++i) e0 += frame[static_cast<std::size_t>(i)] * frame[static_cast<std::size_t>(i)];
    std::fill(r.begin(), r.end(), 0.0);
    double best = -1.0;
    for (int lag = min_lag - 1; lag <= max_lag + 1; ++lag) {
      double c = 0.0, el = 0.0;
      for (int i = 0; i < n; ++i) {
        const double v = frame[static_cast<std::size_t>(i + lag)];
        c += frame[static_cast<std::size_t>(i)] * v;
        el += v * v;
      }
      const double denom = std::sqrt(e0 * el);
      r[static_cast<std::size_t>(lag)] = denom > 0.0 ? c / denom : 0.0;
      if (lag >= min_lag && lag <= max_lag) best = std::max(best, r[static_cast<std::size_t>(lag)]);
    }
    if (best < cfg.voicing_threshold) continue;
    int pick = -1;
    for (int lag = min_lag; lag <= max_lag; ++lag) {
      const double v = r[static_cast<std::size_t>(lag)];
      const bool peak = v >= r[static_cast<std::size_t>(lag - 1)] && v >= r[static_cast<std::size_t>(lag + 1)];
      if (peak && v >= 0.95 * best) {
        pick = lag;
        break;
      }
    }
    if (pick < 0) continue;
    const double a = r[static_cast<std::size_t>(pick - 1)], b = r[static_cast<std::size_t>(pick)],
                 c = r[static_cast<std::size_t>(pick + 1)];
    const double den = a - 2.0 * b + c;
    const double shift = std::abs(den) > 1e-12 ? std::clamp(0.5 * (a - c) / den, -0.5, 0.5) : 0.0;
    const double hz = cfg.sample_rate / (pick + shift);
    if (hz >= cfg.f0_min && hz <= cfg.f0_max) f0[static_cast<std::size_t>(f)] = static_cast<float>(hz);
  }
  return f0;
}

// ---------------------------------------------------------------------------
// Cepstra

/// Orthonormal DCT-II of each row of `log_mel`, keeping `count` coefficients.
inline Matrix<double> mfcc_from_log_mel(const Matrix<double>& log_mel, int count) {
  const Eigen::Index m = log_mel.cols();
  Matrix<double> basis(m, count);
  for (int k = 0; k < count; ++k) {
    const double s = k == 0 ? std::sqrt(1.0 / m) : std::sqrt(2.0 / m);
    for (Eigen::Index n = 0; n < m; ++n)
      basis(n, k) = s * std::cos(std::numbers::pi * k * (2.0 * n + 1.0) / (2.0 * m));
  }
  return log_mel * basis;
}

inline Matrix<double> mfcc(std::span<const float> x, const AudioConfig& cfg, int count = 14) {
  return mfcc_from_log_mel(log_mel(x, cfg), count);
}

// ---------------------------------------------------------------------------
// Phase reconstruction

/// Deterministic Griffin-Lim vocoder: pseudo-inverse mel to linear magnitude,
/// then iterative phase estimation from a zero-phase start.
inline std::vector<float> griffin_lim(const Matrix<double>& log_mel_frames, const AudioConfig& cfg) {
  if (log_mel_frames.rows() == 0) return {};
  if (log_mel_frames.cols() != cfg.n_mels) throw ShapeError("griffin_lim: mel bin count mismatch");
  const Matrix<double> fb = mel_filterbank(cfg);
  const Matrix<double> pinv = fb.completeOrthogonalDecomposition().pseudoInverse();
  Matrix<double> mag = (log_mel_frames.array().exp().matrix() * pinv.transpose()).cwiseMax(0.0);
  const auto frames = static_cast<std::size_t>(mag.rows());
  const auto bins = static_cast<std::size_t>(mag.cols());
  std::vector<std::vector<std::complex<double>>> spec(frames, std::vector<std::complex<double>>(bins));
  for (std::size_t f = 0; f < frames; ++f)
    for (std::size_t k = 0; k < bins; ++k) spec[f][k] = mag(static_cast<Eigen::Index>(f), static_cast<Eigen::Index>(k));
  std::vector<float> y = istft(spec, cfg);
  for (int it = 0; it < cfg.griffin_lim_iters; ++it) {
    auto est = stft(y, cfg);
    for (std::size_t f = 0; f < frames && f < est.size(); ++f) {
      for (std::size_t k = 0; k < bins; ++k) {
        const double a = std::abs(est[f][k]);
        const std::complex<double> phase = a > 1e-12 ? est[f][k] / a : std::complex<double>(1.0, 0.0);
        spec[f][k] = mag(static_cast<Eigen::Index>(f), static_cast<Eigen::Index>(k)) * phase;
      }
    }
    y = istft(spec, cfg);
  }
  return y;
}

inline double rms_dbfs(std::span<const float> x) {
  if (x.empty()) return -std::numeric_limits<double>::infinity();
  double acc = 0.0;
  for (float v : x) acc += static_cast<double>(v) * v;
  const double rms = std::sqrt(acc / x.size());
  return rms > 0.0 ? 20.0 * std::log10(rms) : -std::numeric_limits<double>::infinity();
}

}  // namespace cuctts::audio

#endif  // CUCTTS_AUDIO_HPP_
