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

#include <cmath>
#include <fstream>
#include <limits>
#include <numbers>
#include <random>
#include <sstream>

#include "cuctts/evaluation.hpp"
#include "cuctts/toy_corpus.hpp"
#include "cuctts/training.hpp"
#include "test_util.hpp"

namespace cuctts::eval {
namespace {

audio::Waveform tone(double f0, double seconds, double amp = 0.3, int sr = 22050) {
  audio::Waveform w;
  w.sample_rate = sr;
  const auto n = static_cast<std::size_t>(seconds * sr);
  for (std::size_t i = 0; i < n; ++i)
    w.samples.push_back(static_cast<float>(amp * std::sin(2.0 * std::numbers::pi * f0 * i / sr)));
  return w;
}

// ---------------------------------------------------------------------------
// F0 frame error

TEST(FfeTest, IdenticalTracksGiveZero) {
  F0Track a(std::vector<double>{0, 120, 130, 0, 140});
  EXPECT_DOUBLE_EQ(ffe(a, a), 0.0);
}

TEST(FfeTest, AllVoicedAgainstAllUnvoicedGivesOne) {
  F0Track a(std::vector<double>(10, 150.0)), b(std::vector<double>(10, 0.0));
  EXPECT_DOUBLE_EQ(ffe(a, b), 1.0);
}

TEST(FfeTest, TwoVoicingFlipsAndOneGrossErrorInTenFrames) {
  std::vector<double> r(10, 100.0), t(10, 100.0);
  t[0] = 0.0;
  r[1] = 0.0;
  t[1] = 110.0;
  t[5] = 130.0;  // 30% deviation
  t[6] = 115.0;  // 15%, below the gross threshold
  EXPECT_NEAR(ffe(F0Track(r), F0Track(t)), 0.3, 1e-12);
}

TEST(FfeTest, FlippingVoicingNeverLowersTheError) {
  std::mt19937_64 rng(4);
  std::uniform_real_distribution<double> hz(80.0, 300.0);
  std::bernoulli_distribution voiced(0.7);
  for (int trial = 0; trial < 50; ++trial) {
    std::vector<double> r(30), t(30);
    for (std::size_t i = 0; i < r.size(); ++i) {
      r[i] = voiced(rng) ? hz(rng) : 0.0;
      t[i] = voiced(rng) ? hz(rng) : 0.0;
    }
    double prev = ffe(F0Track(r), F0Track(t));
    for (std::size_t i = 0; i < t.size(); ++i) {
      const bool agree = (r[i] > 0) == (t[i] > 0);
      if (!agree) continue;
      t[i] = t[i] > 0 ? 0.0 : hz(rng);
      const double next = ffe(F0Track(r), F0Track(t));
      ASSERT_GE(next, prev - 1e-12) << "trial " << trial << " frame " << i;
      prev = next;
    }
  }
}

TEST(FfeTest, SmallLengthMismatchTruncatesWithWarning) {
  F0Track a(std::vector<double>{100, 100, 100, 100, 100});
  F0Track b(std::vector<double>{100, 100, 100});
  std::vector<std::string> warnings;
  EXPECT_DOUBLE_EQ(ffe(a, b, &warnings), 0.0);
  ASSERT_EQ(warnings.size(), 1u);
}

TEST(FfeTest, LargeLengthMismatchThrows) {
  F0Track a(std::vector<double>(10, 100.0)), b(std::vector<double>(7, 100.0));
  EXPECT_THROW(ffe(a, b), std::invalid_argument);
  EXPECT_THROW(ffe(F0Track{}, F0Track{}), std::invalid_argument);
}

TEST(FfeTest, NegativeOrNanF0IsRejected) {
  EXPECT_THROW(F0Track(std::vector<double>{100, -1}), std::invalid_argument);
  EXPECT_THROW(F0Track(std::vector<double>{std::nan("")}), std::invalid_argument);
}

TEST(FfeTest, SameToneTrackedTwiceGivesZero) {
  const auto w = tone(150.0, 0.5);
  const audio::AudioConfig cfg;
  F0Track a(audio::track_f0(w.samples, cfg));
  EXPECT_DOUBLE_EQ(ffe(a, a), 0.0);
}

// ---------------------------------------------------------------------------
// Mel cepstral distortion

TEST(McdTest, IdenticalInputsGiveZero) {
  std::mt19937_64 rng(1);
  const Matrix<double> c = testing::random_matrix<double>(20, 14, rng);
  EXPECT_DOUBLE_EQ(mcd_from_mfcc(c, c), 0.0);
  const auto w = tone(200.0, 0.3);
  EXPECT_NEAR(mcd(w, w, {}), 0.0, 1e-9);
}

TEST(McdTest, UniformShiftMatchesClosedForm) {
  std::mt19937_64 rng(2);
  const Matrix<double> c = testing::random_matrix<double>(15, 14, rng);
  for (double delta : {0.01, 0.3, -1.5}) {
    const Matrix<double> shifted = c.array() + delta;
    EXPECT_NEAR(mcd_from_mfcc(c, shifted), mcd_constant() * std::abs(delta) * std::sqrt(13.0), 1e-9);
  }
}

TEST(McdTest, ScalesWithDifferenceMagnitude) {
  std::mt19937_64 rng(3);
  const Matrix<double> a = testing::random_matrix<double>(12, 14, rng);
  const Matrix<double> b = testing::random_matrix<double>(12, 14, rng);
  const double base = mcd_from_mfcc(a, b);
  for (double k : {0.5, 2.0, -3.0}) {
    const Matrix<double> scaled = a + k * (b - a);
    EXPECT_NEAR(mcd_from_mfcc(a, scaled), std::abs(k) * base, 1e-9 * base);
  }
}

TEST(McdTest, IgnoresEnergyCoefficient) {
  std::mt19937_64 rng(5);
  const Matrix<double> a = testing::random_matrix<double>(8, 14, rng);
  Matrix<double> b = a;
  b.col(0).array() += 7.0;
  EXPECT_DOUBLE_EQ(mcd_from_mfcc(a, b), 0.0);
}

TEST(McdTest, DifferentSignalsArePositive) {
  const auto a = tone(150.0, 0.4), b = tone(320.0, 0.4, 0.1);
  EXPECT_GT(mcd(a, b, {}), 0.0);
}

TEST(McdTest, RejectsBadInput) {
  EXPECT_THROW(mcd_from_mfcc(Matrix<double>::Zero(4, 10), Matrix<double>::Zero(4, 10)), std::invalid_argument);
  EXPECT_THROW(mcd(tone(100, 0.1), tone(100, 0.1, 0.3, 16000), {}), std::invalid_argument);
}

// ---------------------------------------------------------------------------
// Prosody measurements

TEST(ProsodyTest, SelectsLongestNonSilencePhonemesInOrder) {
  const std::vector<int> d{9, 3, 7, 2, 7, 5, 12};
  const std::vector<bool> sil{true, false, false, false, false, false, true};
  EXPECT_EQ(select_phonemes(d, sil), (std::vector<std::size_t>{2, 4, 5}));
  EXPECT_EQ(select_phonemes(d, sil, 10).size(), 5u);
}

TEST(ProsodyTest, ConstantAmplitudeGivesUnitEnergy) {
  // Square wave: |x| is constant everywhere.
  std::vector<float> w;
  for (int i = 0; i < 256 * 30; ++i) w.push_back((i / 40) % 2 ? 0.25f : -0.25f);
  const std::vector<int> d{10, 8, 12};
  const auto m = measure_phonemes(w, d, {0, 1, 2}, {});
  for (const auto& p : m) EXPECT_NEAR(p.energy, 1.0, 1e-9);
  std::vector<double> e;
  for (const auto& p : m) e.push_back(p.energy);
  EXPECT_NEAR(stddev(e), 0.0, 1e-9);
}

TEST(ProsodyTest, EnergyAndPitchAreAmplitudeInvariant) {
  const audio::AudioConfig cfg;
  const auto u = toy::render("a", "Mary asked the time.", 3, cfg);
  auto loud = u.wave.samples;
  for (auto& s : loud) s *= 10.0f;
  const auto sel = select_phonemes(u.durations, std::vector<bool>(u.durations.size(), false));
  const auto a = measure_phonemes(u.wave.samples, u.durations, sel, cfg);
  const auto b = measure_phonemes(loud, u.durations, sel, cfg);
  ASSERT_EQ(a.size(), b.size());
  for (std::size_t i = 0; i < a.size(); ++i) {
    EXPECT_NEAR(a[i].energy, b[i].energy, 1e-5);
    EXPECT_NEAR(a[i].f0, b[i].f0, 1e-3);
    EXPECT_EQ(a[i].voiced, b[i].voiced);
  }
}

TEST(ProsodyTest, ToyTonePitchIsRecovered) {
  const audio::AudioConfig cfg;
  const auto w = tone(180.0, 0.5, 0.3, cfg.sample_rate);
  const std::vector<int> d{20, 20};
  const auto m = measure_phonemes(w.samples, d, {1}, cfg);
  ASSERT_TRUE(m[0].voiced);
  EXPECT_NEAR(m[0].f0, 180.0, 180.0 * 0.05);
}

TEST(ProsodyTest, StddevUsesSampleDenominator) {
  EXPECT_DOUBLE_EQ(stddev({1.0, 3.0}), std::sqrt(2.0));
  EXPECT_THROW(stddev({1.0}), std::invalid_argument);
}

TEST(ProsodyTest, AccumulatorExcludesPartlyUnvoicedPhonemes) {
  ProsodyAccumulator acc;
  acc.add_utterance({{{1.0, 100.0, true}, {1.0, 0.0, false}}, {{3.0, 110.0, true}, {1.0, 200.0, true}}});
  const auto s = acc.stats();
  EXPECT_EQ(s.phonemes, 2u);
  EXPECT_EQ(s.f0_excluded, 1u);
  EXPECT_NEAR(s.energy_std, std::sqrt(2.0) / 2.0, 1e-12);
  EXPECT_NEAR(s.f0_std, std::sqrt(50.0), 1e-12);
  EXPECT_THROW(acc.add_utterance({{{1.0, 1.0, true}}}), std::invalid_argument);
}

ModelConfig toy_model() {
  auto c = testing::tiny_config();
  c.n_mels = 80;
  c.d_ctx = 16;
  return c;
}

class TrainedToyModel : public ::testing::Test {
 protected:
  static void SetUpTestSuite() {
    examples_ = new std::vector<TrainingExample<float>>(toy::make_examples<float>(3, toy_model(), 1));
    model_ = new TTSModel<float>(toy_model(), 5);
    TrainConfig tc;
    tc.steps = 300;
    tc.kl_warmup_steps = 10;
    tc.frame_budget = 150;
    tc.checkpoint_every = 0;
    tc.seed = 3;
    tc.optim.peak_lr = 3e-3;
    tc.optim.warmup_steps = 5;
    Trainer<float> trainer(*model_, tc);
    const auto dir = testing::scratch_dir("eval_train");
    train(trainer, *examples_, tc, dir, nullptr);
    std::filesystem::remove_all(dir);
  }
  static void TearDownTestSuite() {
    delete model_;
    delete examples_;
  }
  static audio::AudioConfig cfg() {
    audio::AudioConfig c;
    c.griffin_lim_iters = 16;
    return c;
  }
  static std::vector<UtteranceInput<float>> inputs() {
    return {examples_->front().input};
  }

  static inline TTSModel<float>* model_ = nullptr;
  static inline std::vector<TrainingExample<float>>* examples_ = nullptr;
};

TEST_F(TrainedToyModel, ZeroTemperatureGivesNoVariation) {
  GriffinLimVocoder voc(cfg());
  ProsodyOptions opt;
  opt.num_samples = 4;
  opt.tau = 0.0;
  const auto s = prosody_std(*model_, voc, inputs(), opt, cfg());
  EXPECT_LT(s.energy_std, 1e-6);
  if (!std::isnan(s.f0_std)) EXPECT_LT(s.f0_std, 1e-6);
}

TEST_F(TrainedToyModel, SamplingProducesPitchVariation) {
  GriffinLimVocoder voc(cfg());
  ProsodyOptions opt;
  opt.num_samples = 20;
  opt.tau = 1.0;
  opt.standard_gaussian = true;
  const auto s = prosody_std(*model_, voc, inputs(), opt, cfg());
  EXPECT_EQ(s.num_samples, 20u);
  ASSERT_FALSE(std::isnan(s.f0_std)) << "no phoneme voiced in every sample";
  EXPECT_GT(s.f0_std, 0.0);
  EXPECT_GT(s.energy_std, 0.0);
}

TEST_F(TrainedToyModel, AmplitudeScaleLeavesStatisticsUnchanged) {
  GriffinLimVocoder voc(cfg());
  ProsodyOptions opt;
  opt.num_samples = 3;
  opt.standard_gaussian = true;
  const auto a = prosody_std(*model_, voc, inputs(), opt, cfg());
  opt.amplitude_scale = 10.0;
  const auto b = prosody_std(*model_, voc, inputs(), opt, cfg());
  EXPECT_NEAR(a.energy_std, b.energy_std, 1e-5);
  EXPECT_EQ(a.f0_excluded, b.f0_excluded);
  if (!std::isnan(a.f0_std)) EXPECT_NEAR(a.f0_std, b.f0_std, 1e-3);
}

TEST_F(TrainedToyModel, CaseStudyWritesOneContourPerContext) {
  GriffinLimVocoder voc(cfg());
  const auto dir = testing::scratch_dir("case_study");
  auto in = examples_->front().input;
  ASSERT_GT(in.context.rows(), 0);
  std::mt19937_64 rng(8);
  std::vector<Matrix<float>> contexts{in.context,
                                      testing::random_matrix<float>(in.context.rows(), in.context.cols(), rng)};
  const auto files = emit_case_study(*model_, voc, in, contexts, dir, cfg());
  ASSERT_EQ(files.size(), 2u);
  for (const auto& f : files) {
    std::ifstream is(f);
    std::string header;
    std::getline(is, header);
    EXPECT_EQ(header, "time\tenergy\tf0");
    int rows = 0;
    for (std::string l; std::getline(is, l);) ++rows;
    EXPECT_GT(rows, 0);
  }
  std::filesystem::remove_all(dir);
}

// ---------------------------------------------------------------------------
// Reports

TEST(ReportTest, PairsAndMeanRow) {
  const auto a = tone(150.0, 0.4), b = tone(160.0, 0.4);
  const auto rows = evaluate_pairs({"u1", "u2"}, {a, a}, {a, b}, {});
  ASSERT_EQ(rows.size(), 2u);
  EXPECT_DOUBLE_EQ(rows[0].ffe, 0.0);
  EXPECT_NEAR(rows[0].mcd, 0.0, 1e-9);
  std::ostringstream os;
  write_report(os, rows, ProsodyStats{0.5, 2.0, 20, 3, 0});
  std::istringstream is(os.str());
  std::string line;
  std::getline(is, line);
  EXPECT_EQ(line, "id\tffe\tmcd_db\tf0_std_hz\te_std");
  std::getline(is, line);
  EXPECT_EQ(line.substr(0, 3), "u1\t");
  std::getline(is, line);
  std::getline(is, line);
  EXPECT_EQ(line.substr(0, 5), "mean\t");
  EXPECT_NE(line.find("2.000000\t0.500000"), std::string::npos) << line;
}

TEST(ReportTest, UnalignablePairGetsNanAndNote) {
  const auto a = tone(150.0, 0.5), b = tone(150.0, 0.2);
  std::vector<std::string> notes;
  const auto rows = evaluate_pairs({"long", "ok"}, {a, a}, {b, a}, {}, &notes);
  EXPECT_TRUE(std::isnan(rows[0].ffe));
  ASSERT_FALSE(notes.empty());
  EXPECT_NE(notes[0].find("long"), std::string::npos);
  std::ostringstream os;
  write_report(os, rows);
  EXPECT_NE(os.str().find("mean\t0.000000"), std::string::npos) << os.str();
}

TEST(ReportTest, MismatchedSetsThrow) {
  const auto a = tone(150.0, 0.1);
  EXPECT_THROW(evaluate_pairs({"x"}, {a, a}, {a}, {}), std::invalid_argument);
}

}  // namespace
}  // namespace cuctts::eval
