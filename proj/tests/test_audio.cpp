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

#include <gtest/gtest.h>

#include <numbers>

#include "cuctts/audio.hpp"
#include "test_util.hpp"

namespace cuctts::audio {
namespace {

std::vector<float> sine(double hz, double seconds, int sr = 22050, double amp = 0.5) {
  std::vector<float> x(static_cast<std::size_t>(seconds * sr));
  for (std::size_t i = 0; i < x.size(); ++i) x[i] = static_cast<float>(amp * std::sin(2 * std::numbers::pi * hz * i / sr));
  return x;
}

TEST(AudioTest, OneSecondAtHop256Has87Frames) {
  AudioConfig cfg;
  EXPECT_EQ(num_frames(22050, cfg.hop), 87);
  const std::vector<float> x(22050, 0.0f);
  EXPECT_EQ(log_mel(x, cfg).rows(), 87);
  EXPECT_EQ(log_mel(x, cfg).cols(), 80);
}

TEST(AudioTest, SilenceIsUnvoicedWithZeroEnergy) {
  AudioConfig cfg;
  const std::vector<float> x(22050, 0.0f);
  for (float f : track_f0(x, cfg)) EXPECT_EQ(f, 0.0f);
  for (float e : frame_energy(x, cfg)) EXPECT_EQ(e, 0.0f);
  const auto mel = log_mel(x, cfg);
  EXPECT_NEAR(mel.maxCoeff(), std::log(cfg.log_floor), 1e-12);
}

TEST(AudioTest, PitchOfPureToneIsRecovered) {
  AudioConfig cfg;
  const auto f0 = track_f0(sine(220.0, 1.0), cfg);
  int voiced = 0, close = 0;
  for (float f : f0) {
    if (f <= 0.0f) continue;
    ++voiced;
    if (std::abs(f - 220.0f) < 220.0f * 0.02f) ++close;
    EXPECT_GE(f, cfg.f0_min);
    EXPECT_LE(f, cfg.f0_max);
  }
  EXPECT_GT(voiced, 80);
  EXPECT_GE(close, static_cast<int>(0.9 * voiced));
}

TEST(AudioTest, PitchAcrossRange) {
  AudioConfig cfg;
  for (double hz : {80.0, 130.0, 310.0, 390.0}) {
    const auto f0 = track_f0(sine(hz, 0.5), cfg);
    std::vector<float> v;
    for (float f : f0)
      if (f > 0) v.push_back(f);
    ASSERT_FALSE(v.empty()) << hz;
    std::nth_element(v.begin(), v.begin() + v.size() / 2, v.end());
    EXPECT_NEAR(v[v.size() / 2], hz, hz * 0.02) << hz;
  }
}

TEST(AudioTest, EnergyIsSpectralNormAndScalesLinearly) {
  AudioConfig cfg;
  const auto a = frame_energy(sine(440.0, 0.3, 22050, 0.2), cfg);
  const auto b = frame_energy(sine(440.0, 0.3, 22050, 0.4), cfg);
  ASSERT_EQ(a.size(), b.size());
  for (std::size_t i = 0; i < a.size(); ++i) EXPECT_NEAR(b[i], 2.0f * a[i], 1e-3f * (1 + a[i]));
}

TEST(AudioTest, WavRoundTripWithinQuantization) {
  const auto dir = testing::scratch_dir("wav");
  Waveform w{16000, sine(300.0, 0.1, 16000)};
  write_wav(dir / "a.wav", w);
  const auto r = read_wav(dir / "a.wav");
  EXPECT_EQ(r.sample_rate, 16000);
  ASSERT_EQ(r.samples.size(), w.samples.size());
  for (std::size_t i = 0; i < w.samples.size(); ++i) EXPECT_NEAR(r.samples[i], w.samples[i], 1.0 / 32767);
  std::filesystem::remove_all(dir);
}

TEST(AudioTest, ReadWavRejectsGarbage) {
  const auto dir = testing::scratch_dir("badwav");
  std::ofstream(dir / "x.wav") << "not a wav file at all";
  EXPECT_THROW(read_wav(dir / "x.wav"), std::runtime_error);
  EXPECT_THROW(read_wav(dir / "missing.wav"), std::runtime_error);
  std::filesystem::remove_all(dir);
}

TEST(AudioTest, ResamplingPreservesPitch) {
  AudioConfig cfg;
  const Waveform w{44100, sine(200.0, 0.5, 44100)};
  const auto r = resample(w, 22050);
  EXPECT_EQ(r.sample_rate, 22050);
  EXPECT_NEAR(static_cast<double>(r.samples.size()), 11025.0, 1.0);
  int close = 0, voiced = 0;
  for (float f : track_f0(r.samples, cfg))
    if (f > 0) {
      ++voiced;
      close += std::abs(f - 200.0f) < 4.0f;
    }
  EXPECT_GE(close, static_cast<int>(0.9 * voiced));
}

TEST(AudioTest, MelScaleRoundTrip) {
  for (double hz : {0.0, 100.0, 999.0, 1000.0, 4000.0, 8000.0}) EXPECT_NEAR(mel_to_hz(hz_to_mel(hz)), hz, 1e-9);
  EXPECT_NEAR(hz_to_mel(1000.0), 15.0, 1e-12);
}

TEST(AudioTest, FilterbankIsNonNegativeWithEveryBandPopulated) {
  AudioConfig cfg;
  const auto fb = mel_filterbank(cfg);
  EXPECT_EQ(fb.rows(), 80);
  EXPECT_EQ(fb.cols(), cfg.n_fft / 2 + 1);
  EXPECT_GE(fb.minCoeff(), 0.0);
  for (Eigen::Index m = 0; m < fb.rows(); ++m) EXPECT_GT(fb.row(m).sum(), 0.0) << m;
}

TEST(AudioTest, StftInverseReconstructsInterior) {
  AudioConfig cfg;
  std::mt19937_64 rng(3);
  std::normal_distribution<float> nd(0.0f, 0.1f);
  std::vector<float> x(8000);
  for (auto& v : x) v = nd(rng);
  const auto y = istft(stft(x, cfg), cfg);
  for (std::size_t i = 1024; i < 6000; ++i) ASSERT_NEAR(y[i], x[i], 1e-5) << i;
}

TEST(AudioTest, GriffinLimLengthSilenceAndDeterminism) {
  AudioConfig cfg;
  cfg.griffin_lim_iters = 8;
  const Matrix<double> floor_mel = Matrix<double>::Constant(87, 80, std::log(cfg.log_floor));
  const auto y = griffin_lim(floor_mel, cfg);
  EXPECT_NEAR(static_cast<double>(y.size()), 87.0 * 256.0, 256.0);
  EXPECT_LT(rms_dbfs(y), -40.0);
  const auto mel = log_mel(sine(220.0, 0.5), cfg);
  EXPECT_EQ(griffin_lim(mel, cfg), griffin_lim(mel, cfg));
}

TEST(AudioTest, MfccShapeAndOrthonormalDct) {
  Matrix<double> lm = Matrix<double>::Constant(3, 80, 2.0);
  const auto c = mfcc_from_log_mel(lm, 14);
  EXPECT_EQ(c.cols(), 14);
  EXPECT_NEAR(c(0, 0), 2.0 * std::sqrt(80.0), 1e-9);
  for (int k = 1; k < 14; ++k) EXPECT_NEAR(c(1, k), 0.0, 1e-9);
}

}  // namespace
}  // namespace cuctts::audio
