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

#include <random>

#include "cuctts/cu_embedding.hpp"
#include "cuctts/model.hpp"
#include "test_util.hpp"

namespace cuctts {
namespace {

using T = ag::Tensor<double>;

UtteranceInput<double> random_input(const ModelConfig& c, int length, std::mt19937_64& rng) {
  UtteranceInput<double> in;
  for (int i = 0; i < length; ++i) in.phoneme_ids.push_back(1 + static_cast<int>(rng() % 40));
  in.silence.assign(static_cast<std::size_t>(length), false);
  in.context = testing::random_matrix(2 * c.context_size, c.d_ctx, rng);
  in.context_sentinel.assign(static_cast<std::size_t>(2 * c.context_size), false);
  return in;
}

TEST(PhonemeEncoderTest, OutputShapeIsLengthByModelWidth) {
  const auto c = testing::tiny_config();
  nn::ParamStore<double> ps(1);
  PhonemeEncoder<double> enc(ps, c);
  std::mt19937_64 rng(1);
  const std::vector<int> ids = {3, 5, 7, 9, 11};
  EXPECT_EQ(enc(ids, 0.0, rng).rows(), 5);
  EXPECT_EQ(enc(ids, 0.0, rng).cols(), c.d_model);
  const std::vector<int> bad = {3, -1};
  EXPECT_THROW(enc(bad, 0.0, rng), std::invalid_argument);
}

TEST(SpeakerTableTest, SpeakerIsAddedToEveryRow) {
  nn::ParamStore<double> ps(2);
  SpeakerTable<double> sp(ps, 3, 4);
  sp.set_names({"alice", "bob", "carol"});
  std::mt19937_64 rng(3);
  const T enc = T::constant(testing::random_matrix(5, 4, rng));
  const auto F = add_speaker(enc, sp.row(sp.lookup("bob"))).value();
  const auto row = sp.row(1).value();
  for (Eigen::Index t = 0; t < 5; ++t) EXPECT_TRUE((F.row(t) - enc.value().row(t)).isApprox(row, 1e-12));
  EXPECT_THROW(sp.lookup("dave"), std::invalid_argument);
  EXPECT_THROW(sp.row(3), std::invalid_argument);
}

TEST(SpeakerTableTest, UnknownSpeakerMessageNamesTheId) {
  nn::ParamStore<double> ps(2);
  SpeakerTable<double> sp(ps, 1, 4);
  sp.set_names({"s0"});
  try {
    sp.lookup("narrator");
    FAIL();
  } catch (const std::invalid_argument& e) {
    EXPECT_NE(std::string(e.what()).find("narrator"), std::string::npos);
  }
}

class ContextFusionTest : public ::testing::Test {
 protected:
  ContextFusionTest() : c(testing::tiny_config()), ps(4), fusion(ps, c), rng(5) {}
  ModelConfig c;
  nn::ParamStore<double> ps;
  ContextFusion<double> fusion;
  std::mt19937_64 rng;
};

TEST_F(ContextFusionTest, OutputIsLengthByAttentionWidth) {
  const auto G = fusion(T::constant(testing::random_matrix(7, c.d_model, rng)),
                        T::constant(testing::random_matrix(2 * c.context_size, c.d_ctx, rng)));
  EXPECT_EQ(G.rows(), 7);
  EXPECT_EQ(G.cols(), c.d_attn);
}

TEST_F(ContextFusionTest, WrongPairCountIsAShapeError) {
  EXPECT_THROW(fusion(T::constant(testing::random_matrix(3, c.d_model, rng)),
                      T::constant(testing::random_matrix(2 * c.context_size + 1, c.d_ctx, rng))),
               ShapeError);
}

TEST_F(ContextFusionTest, IdenticalPairsGiveTheSameRowForEveryPhoneme) {
  Matrix<double> B(2 * c.context_size, c.d_ctx);
  const Matrix<double> row = testing::random_matrix(1, c.d_ctx, rng);
  for (Eigen::Index j = 0; j < B.rows(); ++j) B.row(j) = row;
  const auto G = fusion(T::constant(testing::random_matrix(6, c.d_model, rng)), T::constant(B)).value();
  for (Eigen::Index t = 1; t < G.rows(); ++t) EXPECT_TRUE(G.row(t).isApprox(G.row(0), 1e-12));
}

TEST_F(ContextFusionTest, AttentionWeightsAreDistributions) {
  nn::AttentionTrace<double> trace;
  fusion(T::constant(testing::random_matrix(5, c.d_model, rng)),
         T::constant(testing::random_matrix(2 * c.context_size, c.d_ctx, rng)), {}, &trace);
  ASSERT_EQ(static_cast<int>(trace.weights.size()), c.context_heads);
  for (const auto& w : trace.weights) {
    EXPECT_EQ(w.rows(), 5);
    EXPECT_EQ(w.cols(), 2 * c.context_size);
    EXPECT_GE(w.minCoeff(), 0.0);
    for (Eigen::Index t = 0; t < w.rows(); ++t) EXPECT_NEAR(w.row(t).sum(), 1.0, 1e-12);
  }
}

TEST_F(ContextFusionTest, OutputLiesInConvexHullOfProjectedValues) {
  // With identity output projection, each head's output is a convex
  // combination of that head's value rows.
  ps.at("context_attn.wo.weight").mutable_value() = Matrix<double>::Identity(c.d_attn, c.d_attn);
  for (int trial = 0; trial < 20; ++trial) {
    const Matrix<double> B = testing::random_matrix(2 * c.context_size, c.d_ctx, rng);
    const auto G = fusion(T::constant(testing::random_matrix(4, c.d_model, rng)), T::constant(B)).value();
    const Matrix<double> V = B * ps.at("context_attn.wv.weight").value();
    for (Eigen::Index col = 0; col < G.cols(); ++col) {
      EXPECT_GE(G.col(col).minCoeff(), V.col(col).minCoeff() - 1e-12);
      EXPECT_LE(G.col(col).maxCoeff(), V.col(col).maxCoeff() + 1e-12);
    }
  }
}

TEST_F(ContextFusionTest, MaskingSentinelsRemovesTheirInfluence) {
  const Matrix<double> F = testing::random_matrix(4, c.d_model, rng);
  Matrix<double> B = testing::random_matrix(2 * c.context_size, c.d_ctx, rng);
  const std::vector<bool> mask = {true, false, false, false};
  const auto a = fusion(T::constant(F), T::constant(B), mask).value();
  B.row(0) *= -7.0;
  const auto b = fusion(T::constant(F), T::constant(B), mask).value();
  EXPECT_TRUE(a.isApprox(b, 1e-12));
  // An all-masked set falls back to unmasked attention rather than NaNs.
  const auto all = fusion(T::constant(F), T::constant(B), std::vector<bool>(4, true)).value();
  EXPECT_TRUE(all.allFinite());
  EXPECT_TRUE(all.isApprox(fusion(T::constant(F), T::constant(B)).value(), 1e-12));
}

TEST_F(ContextFusionTest, PhonemeOrderPermutesOutputRows) {
  const Matrix<double> F = testing::random_matrix(5, c.d_model, rng);
  const T B = T::constant(testing::random_matrix(2 * c.context_size, c.d_ctx, rng));
  const auto G = fusion(T::constant(F), B).value();
  const std::vector<int> perm = {3, 0, 4, 1, 2};
  Matrix<double> Fp(5, c.d_model);
  for (int i = 0; i < 5; ++i) Fp.row(i) = F.row(perm[static_cast<std::size_t>(i)]);
  const auto Gp = fusion(T::constant(Fp), B).value();
  for (int i = 0; i < 5; ++i) EXPECT_TRUE(Gp.row(i).isApprox(G.row(perm[static_cast<std::size_t>(i)]), 1e-12));
}

TEST(CuProjectionTest, IsConcatenationTimesWeight) {
  nn::ParamStore<double> ps(6);
  CuProjection<double> proj(ps, 5, 3);
  std::mt19937_64 rng(7);
  const Matrix<double> G = testing::random_matrix(4, 2, rng), F = testing::random_matrix(4, 3, rng);
  Matrix<double> GF(4, 5);
  GF << G, F;
  EXPECT_TRUE(proj(T::constant(G), T::constant(F)).value().isApprox(GF * proj.weight().value(), 1e-12));
  EXPECT_THROW(proj(T::constant(G), T::constant(testing::random_matrix(3, 3, rng))), ShapeError);
}

TEST(CuProjectionTest, IdentityAndZeroWeights) {
  nn::ParamStore<double> ps(6);
  CuProjection<double> proj(ps, 5, 3);
  std::mt19937_64 rng(8);
  const Matrix<double> G = testing::random_matrix(4, 2, rng), F = testing::random_matrix(4, 3, rng);
  // Selecting the F block returns F unchanged.
  Matrix<double> W = Matrix<double>::Zero(5, 3);
  W.bottomRows(3) = Matrix<double>::Identity(3, 3);
  ps.at("cu_proj.weight").mutable_value() = W;
  EXPECT_TRUE(proj(T::constant(G), T::constant(F)).value().isApprox(F, 1e-12));
  ps.at("cu_proj.weight").mutable_value().setZero();
  EXPECT_TRUE(proj(T::constant(G), T::constant(F)).value().isZero());
  EXPECT_FALSE(ps.contains("cu_proj.bias"));
}

TEST(CuProjectionTest, GradientsMatchFiniteDifferences) {
  nn::ParamStore<double> ps(9);
  CuProjection<double> proj(ps, 5, 3);
  std::mt19937_64 rng(10);
  T G(testing::random_matrix(4, 2, rng), true), F(testing::random_matrix(4, 3, rng), true);
  const auto loss = [&] { return ag::sum(ag::square(proj(G, F))); };
  EXPECT_LT(testing::max_grad_error({G, F, ps.at("cu_proj.weight")}, loss), testing::kGradTolerance);
}

TEST(DurationsTest, LogDomainRoundTrip) {
  for (int d : {0, 1, 2, 5, 17, 300}) {
    const auto out = durations_from_log({log_duration_target(d)}, {true});
    EXPECT_EQ(out[0], d);
  }
  EXPECT_EQ(durations_from_log({-3.0, -3.0}, {true, false}), (std::vector<int>{0, 1}));
  EXPECT_EQ(durations_from_log({1e9}, {false})[0], static_cast<int>(std::lround(std::exp(20.0) - 1.0)));
}

TEST(VariancePredictorTest, OneScalarPerPhoneme) {
  const auto c = testing::tiny_config();
  nn::ParamStore<double> ps(11);
  VariancePredictor<double> vp(ps, "duration", c, c.d_model);
  std::mt19937_64 rng(12);
  const auto D = vp(T::constant(testing::random_matrix(9, c.d_model, rng)), 0.0, rng);
  EXPECT_EQ(D.rows(), 9);
  EXPECT_EQ(D.cols(), 1);
}

TEST(MixtureEncodingTest, ShapesForEveryVariant) {
  std::mt19937_64 rng(13);
  for (auto v : {Variant::kBaseline, Variant::kGlobalVae, Variant::kFineGrainedVae, Variant::kCvae,
                 Variant::kCucVae}) {
    const auto c = testing::tiny_config(v);
    TTSModel<double> model(c, 14);
    const auto in = random_input(c, 6, rng);
    const auto e = model.encode(in, 0.0, rng);
    EXPECT_EQ(e.F.rows(), 6);
    EXPECT_EQ(e.H.rows(), 6);
    EXPECT_EQ(e.H.cols(), c.d_model);
    EXPECT_EQ(e.D.rows(), 6);
    if (v == Variant::kBaseline || v == Variant::kGlobalVae || v == Variant::kFineGrainedVae)
      EXPECT_EQ(e.H.value(), e.F.value());
  }
}

TEST(MixtureEncodingTest, ContextChangesOnlyTheContextVariant) {
  std::mt19937_64 rng(15);
  for (auto v : {Variant::kCvae, Variant::kCucVae}) {
    const auto c = testing::tiny_config(v);
    TTSModel<double> model(c, 16);
    auto in = random_input(c, 5, rng);
    const auto a = model.encode(in, 0.0, rng).H.value();
    in.context = testing::random_matrix(2 * c.context_size, c.d_ctx, rng);
    const auto b = model.encode(in, 0.0, rng).H.value();
    if (v == Variant::kCucVae)
      EXPECT_GT((a - b).norm(), 1e-6);
    else
      EXPECT_EQ(a, b);
  }
}

TEST(MixtureEncodingTest, PermutationEquivariantWithoutPositionsOrConvolutionContext) {
  auto c = testing::tiny_config(Variant::kCucVae);
  c.encoder_kernel = 1;
  c.duration_kernel = 1;
  TTSModel<double> model(c, 17);
  model.set_positional(false);
  std::mt19937_64 rng(18);
  const auto in = random_input(c, 6, rng);
  const auto e = model.encode(in, 0.0, rng);
  const std::vector<int> perm = {5, 2, 0, 4, 1, 3};
  auto pin = in;
  for (std::size_t i = 0; i < perm.size(); ++i) pin.phoneme_ids[i] = in.phoneme_ids[static_cast<std::size_t>(perm[i])];
  const auto pe = model.encode(pin, 0.0, rng);
  for (std::size_t i = 0; i < perm.size(); ++i) {
    const auto src = static_cast<Eigen::Index>(perm[i]);
    const auto dst = static_cast<Eigen::Index>(i);
    EXPECT_TRUE(pe.H.value().row(dst).isApprox(e.H.value().row(src), 1e-10));
    EXPECT_NEAR(pe.D.value()(dst, 0), e.D.value()(src, 0), 1e-10);
  }
}

TEST(MixtureEncodingTest, FusionGradientsMatchFiniteDifferences) {
  const auto c = testing::tiny_config(Variant::kCucVae);
  TTSModel<double> model(c, 19);
  std::mt19937_64 rng(20);
  const auto in = random_input(c, 4, rng);
  std::vector<T> leaves;
  for (auto& [name, t] : model.params().params())
    if (name.rfind("context_attn", 0) == 0 || name.rfind("cu_proj", 0) == 0) leaves.push_back(t);
  ASSERT_FALSE(leaves.empty());
  const auto loss = [&] {
    std::mt19937_64 r(0);
    const auto e = model.encode(in, 0.0, r);
    return ag::add(ag::sum(ag::square(e.H)), ag::sum(e.D));
  };
  EXPECT_LT(testing::max_grad_error(leaves, loss), testing::kGradTolerance);
}

}  // namespace
}  // namespace cuctts
