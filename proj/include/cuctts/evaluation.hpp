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

// Objective metrics: F0 frame error, mel-cepstral distortion and prosody
// diversity, plus contour tables for case-study plots.

#ifndef CUCTTS_EVALUATION_HPP_
#define CUCTTS_EVALUATION_HPP_

#include <algorithm>
#include <cmath>
#include <filesystem>
#include <fstream>
#include <future>
#include <iomanip>
#include <numeric>
#include <optional>
#include <ostream>
#include <random>
#include <span>
#include <stdexcept>
#include <string>
#include <thread>
#include <vector>

#include "cuctts/audio.hpp"
#include "cuctts/decoder.hpp"
#include "cuctts/model.hpp"

namespace cuctts::eval {

/// Frame-level F0 with voicing implied by f0 > 0.
struct F0Track {
  std::vector<double> f0;
  std::vector<bool> voicing;

  F0Track() = default;
  template <typename T>
  explicit F0Track(const std::vector<T>& hz) {
    for (T v : hz) {
      if (!(v >= T(0))) throw std::invalid_argument("F0 values must be finite and non-negative");
      f0.push_back(static_cast<double>(v));
      voicing.push_back(v > T(0));
    }
  }
  std::size_t size() const { return f0.size(); }
};

inline constexpr int kTruncationTolerance = 2;
inline constexpr double kGrossPitchThreshold = 0.20;

/// (GPE frames + VDE frames) / frames. Tracks whose lengths differ by at most
/// two frames are truncated to the shorter one; a note is appended to
/// `warnings` when that happens.
inline double ffe(const F0Track& reference, const F0Track& test, std::vector<std::string>* warnings = nullptr) {
  const std::size_t a = reference.size(), b = test.size();
  const std::size_t diff = a > b ? a - b : b - a;
  if (diff > static_cast<std::size_t>(kTruncationTolerance))
    throw std::invalid_argument("ffe: frame counts " + std::to_string(a) + " and " + std::to_string(b) +
                                " differ by more than " + std::to_string(kTruncationTolerance));
  const std::size_t n = std::min(a, b);
  if (n == 0) throw std::invalid_argument("ffe: empty track");
  if (diff && warnings) warnings->push_back("ffe: truncated tracks to " + std::to_string(n) + " frames");
  std::size_t errors = 0;
  for (std::size_t t = 0; t < n; ++t) {
    const bool vr = reference.voicing[t], vt = test.voicing[t];
    if (vr != vt) {
      ++errors;
    } else if (vr && std::abs(test.f0[t] - reference.f0[t]) / reference.f0[t] > kGrossPitchThreshold) {
      ++errors;
    }
  }
  return static_cast<double>(errors) / static_cast<double>(n);
}

/// 10 sqrt(2) / ln 10.
inline double mcd_constant() { return 10.0 * std::sqrt(2.0) / std::log(10.0); }

/// Mean over frames of K * ||c_ref[1..13] - c_test[1..13]||, c0 excluded.
/// Inputs are [frames x >=14] cepstra; frame counts are truncated to the
/// shorter one.
inline double mcd_from_mfcc(const Matrix<double>& reference, const Matrix<double>& test) {
  if (reference.cols() < 14 || test.cols() < 14) throw std::invalid_argument("mcd: need at least 14 cepstral coefficients");
  const Eigen::Index n = std::min(reference.rows(), test.rows());
  if (n == 0) throw std::invalid_argument("mcd: no overlapping frames");
  double acc = 0.0;
  for (Eigen::Index t = 0; t < n; ++t)
    acc += (reference.row(t).segment(1, 13) - test.row(t).segment(1, 13)).norm();
  return mcd_constant() * acc / static_cast<double>(n);
}

inline double mcd(const audio::Waveform& reference, const audio::Waveform& test, const audio::AudioConfig& cfg) {
  if (reference.sample_rate != test.sample_rate)
    throw std::invalid_argument("mcd: sample rates differ (" + std::to_string(reference.sample_rate) + " vs " +
                                std::to_string(test.sample_rate) + ")");
  if (reference.samples.empty() || test.samples.empty()) throw std::invalid_argument("mcd: no overlapping frames");
  auto c = cfg;
  c.sample_rate = reference.sample_rate;
  return mcd_from_mfcc(audio::mfcc(reference.samples, c, 14), audio::mfcc(test.samples, c, 14));
}

// ---------------------------------------------------------------------------
// Prosody diversity

struct PhonemeProsody {
  double energy = 0.0;  ///< relative amplitude E
  double f0 = 0.0;      ///< mean voiced F0 in the span, Hz
  bool voiced = false;
};

struct ProsodyStats {
  double energy_std = 0.0;  ///< averaged over the selected phonemes
  double f0_std = 0.0;      ///< averaged over phonemes voiced in every sample
  std::size_t num_samples = 0;
  std::size_t phonemes = 0;
  std::size_t f0_excluded = 0;  ///< phonemes unvoiced in at least one sample
};

/// Indices of the `count` longest non-silence phonemes, ties broken by
/// position, returned in ascending order.
inline std::vector<std::size_t> select_phonemes(const std::vector<int>& durations, const std::vector<bool>& silence,
                                                std::size_t count = 3) {
  std::vector<std::size_t> idx;
  for (std::size_t i = 0; i < durations.size(); ++i)
    if (!(i < silence.size() && silence[i]) && durations[i] > 0) idx.push_back(i);
  std::stable_sort(idx.begin(), idx.end(), [&](auto a, auto b) { return durations[a] > durations[b]; });
  if (idx.size() > count) idx.resize(count);
  std::sort(idx.begin(), idx.end());
  return idx;
}

/// E and mean F0 for each selected phoneme of one waveform. Spans are
/// [start * hop, end * hop) in samples.
inline std::vector<PhonemeProsody> measure_phonemes(std::span<const float> wave, const std::vector<int>& durations,
                                                    const std::vector<std::size_t>& selection,
                                                    const audio::AudioConfig& cfg) {
  if (wave.empty()) throw std::invalid_argument("measure_phonemes: empty waveform");
  double global = 0.0;
  for (float s : wave) global += std::abs(s);
  global /= static_cast<double>(wave.size());
  const auto f0 = audio::track_f0(wave, cfg);
  std::vector<long> start(durations.size() + 1, 0);
  for (std::size_t i = 0; i < durations.size(); ++i) start[i + 1] = start[i] + durations[i];
  std::vector<PhonemeProsody> out;
  for (auto p : selection) {
    PhonemeProsody m;
    const long s0 = std::min<long>(start[p] * cfg.hop, static_cast<long>(wave.size()));
    const long s1 = std::min<long>(start[p + 1] * cfg.hop, static_cast<long>(wave.size()));
    double amp = 0.0;
    for (long s = s0; s < s1; ++s) amp += std::abs(wave[static_cast<std::size_t>(s)]);
    m.energy = (s1 > s0 && global > 0.0) ? amp / static_cast<double>(s1 - s0) / global : 0.0;
    double sum = 0.0;
    int voiced = 0;
    for (long t = start[p]; t < start[p + 1] && t < static_cast<long>(f0.size()); ++t)
      if (f0[static_cast<std::size_t>(t)] > 0.0f) {
        sum += f0[static_cast<std::size_t>(t)];
        ++voiced;
      }
    m.voiced = voiced > 0;
    m.f0 = voiced ? sum / voiced : 0.0;
    out.push_back(m);
  }
  return out;
}

/// Sample standard deviation.
inline double stddev(const std::vector<double>& v) {
  if (v.size() < 2) throw std::invalid_argument("stddev needs at least two values");
  const double mean = std::accumulate(v.begin(), v.end(), 0.0) / static_cast<double>(v.size());
  double sq = 0.0;
  for (double x : v) sq += (x - mean) * (x - mean);
  return std::sqrt(sq / static_cast<double>(v.size() - 1));
}

/// Accumulates per-utterance measurements: samples[n][k] is phoneme k of
/// sample n of one utterance.
class ProsodyAccumulator {
 public:
  void add_utterance(const std::vector<std::vector<PhonemeProsody>>& samples) {
    if (samples.size() < 2) throw std::invalid_argument("prosody_std needs N >= 2 samples");
    num_samples_ = samples.size();
    const std::size_t k = samples.front().size();
    for (std::size_t p = 0; p < k; ++p) {
      std::vector<double> e, f;
      bool all_voiced = true;
      for (const auto& s : samples) {
        e.push_back(s.at(p).energy);
        f.push_back(s.at(p).f0);
        all_voiced = all_voiced && s.at(p).voiced;
      }
      energy_.push_back(stddev(e));
      if (all_voiced) {
        f0_.push_back(stddev(f));
      } else {
        ++excluded_;
      }
    }
  }

  ProsodyStats stats() const {
    ProsodyStats s;
    s.num_samples = num_samples_;
    s.phonemes = energy_.size();
    s.f0_excluded = excluded_;
    auto mean = [](const std::vector<double>& v) {
      return v.empty() ? std::nan("") : std::accumulate(v.begin(), v.end(), 0.0) / static_cast<double>(v.size());
    };
    s.energy_std = mean(energy_);
    s.f0_std = mean(f0_);
    return s;
  }

 private:
  std::vector<double> energy_, f0_;
  std::size_t excluded_ = 0;
  std::size_t num_samples_ = 0;
};

struct ProsodyOptions {
  int num_samples = 20;
  double tau = 1.0;
  SampleMode mode = SampleMode::kSample;
  bool standard_gaussian = false;
  std::size_t phonemes_per_utterance = 3;
  std::uint64_t seed = 1;
  /// Optional post-vocoder amplitude factor (for invariance checks).
  double amplitude_scale = 1.0;
};

/// Synthesizes each utterance N times and reports the averaged per-phoneme
/// standard deviations of E and F0.
template <typename S>
ProsodyStats prosody_std(const TTSModel<S>& model, const Vocoder& vocoder, const std::vector<UtteranceInput<S>>& inputs,
                         const ProsodyOptions& opt, const audio::AudioConfig& cfg) {
  if (opt.num_samples < 2) throw std::invalid_argument("prosody_std needs N >= 2 samples");
  ProsodyAccumulator acc;
  std::mt19937_64 rng(opt.seed);
  for (const auto& in : inputs) {
    std::vector<std::vector<PhonemeProsody>> samples;
    std::vector<std::size_t> selection;
    for (int n = 0; n < opt.num_samples; ++n) {
      const auto out = model.synthesize(in, {opt.mode, opt.tau, opt.standard_gaussian}, rng);
      if (n == 0) selection = select_phonemes(out.durations, in.silence, opt.phonemes_per_utterance);
      auto wave = vocoder.vocode(out.mel.template cast<float>());
      if (opt.amplitude_scale != 1.0)
        for (auto& s : wave.samples) s = static_cast<float>(s * opt.amplitude_scale);
      samples.push_back(measure_phonemes(wave.samples, out.durations, selection, cfg));
    }
    acc.add_utterance(samples);
  }
  return acc.stats();
}

// ---------------------------------------------------------------------------
// Case study and reports

/// Frame-aligned (time, energy, f0) table for contour plots.
inline void write_contour_table(const std::filesystem::path& path, std::span<const float> wave,
                                const audio::AudioConfig& cfg) {
  const auto energy = audio::frame_energy(wave, cfg);
  const auto f0 = audio::track_f0(wave, cfg);
  std::ofstream os(path);
  if (!os) throw std::runtime_error("cannot write " + path.string());
  os << "time\tenergy\tf0\n" << std::setprecision(6);
  for (std::size_t t = 0; t < energy.size(); ++t)
    os << static_cast<double>(t) * cfg.hop / cfg.sample_rate << '\t' << energy[t] << '\t'
       << (t < f0.size() ? f0[t] : 0.0f) << '\n';
}

/// Synthesizes the same utterance under each context set (deterministic
/// mean latents) and writes `<out_dir>/context_<k>.tsv` per context.
template <typename S>
std::vector<std::filesystem::path> emit_case_study(const TTSModel<S>& model, const Vocoder& vocoder,
                                                   UtteranceInput<S> input, const std::vector<Matrix<S>>& contexts,
                                                   const std::filesystem::path& out_dir,
                                                   const audio::AudioConfig& cfg) {
  std::filesystem::create_directories(out_dir);
  std::vector<std::filesystem::path> written;
  std::mt19937_64 rng(0);
  for (std::size_t k = 0; k < std::max<std::size_t>(contexts.size(), 1); ++k) {
    if (!contexts.empty()) input.context = contexts[k];
    const auto out = model.synthesize(input, {SampleMode::kMean, 1.0, false}, rng);
    const auto wave = vocoder.vocode(out.mel.template cast<float>());
    written.push_back(out_dir / ("context_" + std::to_string(k) + ".tsv"));
    write_contour_table(written.back(), wave.samples, cfg);
  }
  return written;
}

struct MetricRow {
  std::string id;
  double ffe = 0.0;
  double mcd = 0.0;
};

/// FFE and MCD for aligned reference/test waveform pairs, spread across
/// hardware threads.
inline std::vector<MetricRow> evaluate_pairs(const std::vector<std::string>& ids,
                                             const std::vector<audio::Waveform>& references,
                                             const std::vector<audio::Waveform>& tests, const audio::AudioConfig& cfg,
                                             std::vector<std::string>* warnings = nullptr) {
  if (ids.size() != references.size() || ids.size() != tests.size())
    throw std::invalid_argument("evaluate_pairs: reference and test sets differ in size");
  std::vector<MetricRow> rows(ids.size());
  std::vector<std::vector<std::string>> notes(ids.size());
  auto work = [&](std::size_t i) {
    auto c = cfg;
    c.sample_rate = references[i].sample_rate;
    const auto test = audio::resample(tests[i], references[i].sample_rate);
    F0Track r(audio::track_f0(references[i].samples, c)), t(audio::track_f0(test.samples, c));
    // A pair outside the truncation tolerance gets a NaN FFE and a note
    // rather than aborting the whole report.
    double f = std::nan("");
    try {
      f = ffe(r, t, &notes[i]);
    } catch (const std::invalid_argument& e) {
      notes[i].push_back(ids[i] + ": " + e.what());
    }
    rows[i] = {ids[i], f, mcd(references[i], test, c)};
  };
  const std::size_t workers = std::max(1u, std::thread::hardware_concurrency());
  std::vector<std::future<void>> jobs;
  for (std::size_t w = 0; w < workers; ++w)
    jobs.push_back(std::async(std::launch::async, [&, w] {
      for (std::size_t i = w; i < ids.size(); i += workers) work(i);
    }));
  for (auto& j : jobs) j.get();
  if (warnings)
    for (auto& n : notes) warnings->insert(warnings->end(), n.begin(), n.end());
  return rows;
}

/// Tab-separated report with one row per utterance and a final mean row.
/// The mean skips NaN entries (pairs whose FFE could not be computed).
inline void write_report(std::ostream& os, const std::vector<MetricRow>& rows,
                         const std::optional<ProsodyStats>& prosody = std::nullopt) {
  os << "id\tffe\tmcd_db\tf0_std_hz\te_std\n" << std::fixed << std::setprecision(6);
  double f = 0.0, m = 0.0;
  std::size_t nf = 0, nm = 0;
  for (const auto& r : rows) {
    os << r.id << '\t' << r.ffe << '\t' << r.mcd << "\t-\t-\n";
    if (std::isfinite(r.ffe)) f += r.ffe, ++nf;
    if (std::isfinite(r.mcd)) m += r.mcd, ++nm;
  }
  auto cell = [&](double sum, std::size_t n) {
    if (n == 0) {
      os << '-';
    } else {
      os << sum / static_cast<double>(n);
    }
  };
  os << "mean\t";
  cell(f, nf);
  os << '\t';
  cell(m, nm);
  if (prosody) {
    os << '\t' << prosody->f0_std << '\t' << prosody->energy_std << '\n';
  } else {
    os << "\t-\t-\n";
  }
}

}  // namespace cuctts::eval

#endif  // CUCTTS_EVALUATION_HPP_
