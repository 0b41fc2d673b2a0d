// tsasr/tests/model_test.cpp

// Copyright 2026 The tsasr Authors
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

#include <algorithm>
#include <cmath>
#include <numeric>

#include "model_fixtures.hpp"
#include "tsasr/model.hpp"

namespace tsasr {
namespace {

using testing::random_features;
using testing::random_model;
using testing::random_tokens;
using testing::tensor_hash;
using testing::tiny_config;

constexpr Variant kAll[] = {Variant::kBaseline, Variant::kAttentive, Variant::kRobust};

Tensor rows_of(const Tensor& t, std::vector<std::size_t> order) {
  std::vector<Tensor> parts;
  for (auto r : order) parts.push_back(slice_rows(t, r, r + 1));
  return concat_rows(parts);
}

TEST(ModelConfig, RejectsInvalidFusionIndexAndHeads) {
  ModelConfig c = tiny_config(Variant::kBaseline);
  c.fusion_layer_index = 0;
  EXPECT_THROW(c.validate(), ConfigError);
  c.fusion_layer_index = 3;
  EXPECT_THROW(c.validate(), ConfigError);
  c = tiny_config(Variant::kBaseline);
  c.attention_heads = 3;
  EXPECT_THROW(c.validate(), ConfigError);
  c = tiny_config(Variant::kBaseline);
  c.blank_id = 5;
  EXPECT_THROW(c.validate(), ConfigError);
}

TEST(ModelConfig, TextRoundTripPreservesHash) {
  ModelConfig c = tiny_config(Variant::kRobust);
  c.causal_context = 7;
  const ModelConfig back = ModelConfig::from(KeyValues::parse(c.text(), "cfg"), "");
  EXPECT_EQ(back.hash(), c.hash());
  EXPECT_EQ(back.causal_context, 7);
}

TEST(EnrollEncode, SingleFrameGivesOneRow) {
  Rng rng(1);
  const Model m = random_model(tiny_config(Variant::kBaseline), 1);
  const Tensor h = enroll_encode(m, random_features(rng, 1, 6));
  EXPECT_EQ(h.shape(), (Shape{1, 8}));
}

TEST(EnrollEncode, EmptyInputIsContractError) {
  const Model m = random_model(tiny_config(Variant::kBaseline), 1);
  EXPECT_THROW(enroll_encode(m, Tensor::zeros({0, 6})), ContractError);
}

TEST(EnrollEncode, RepeatedFramesWithZeroProjectionGiveIdenticalRows) {
  Model m = random_model(tiny_config(Variant::kBaseline), 2);
  for (auto& v : m.params.at("enroll.out.W").mutable_data()) v = 0.0;
  Rng rng(2);
  const Tensor f = random_features(rng, 1, 6);
  const Tensor h = enroll_encode(m, concat_rows({f, f, f, f}));
  for (std::size_t r = 1; r < 4; ++r)
    for (std::size_t c = 0; c < 8; ++c) EXPECT_EQ(h(r, c), h(0, c));
}

TEST(EnrollEncode, GoldenHashIsStable) {
  const Model m = init_model(tiny_config(Variant::kBaseline), 42);
  Rng rng(42);
  const Tensor h = enroll_encode(m, random_features(rng, 5, 6));
  Rng again(42);
  EXPECT_EQ(tensor_hash(h), tensor_hash(enroll_encode(m, random_features(again, 5, 6))));
  EXPECT_EQ(tensor_hash(h), 0xcabd9dabe92289c8ULL) << std::hex << tensor_hash(h);
}

TEST(TextDecode, SingleTokenShape) {
  const Model m = random_model(tiny_config(Variant::kRobust), 3);
  EXPECT_EQ(text_decode(m, {2}).shape(), (Shape{1, 8}));
}

TEST(TextDecode, DeterministicAndDistinct) {
  const Model m = random_model(tiny_config(Variant::kRobust), 3);
  EXPECT_TRUE(bit_equal(text_decode(m, {1, 3}), text_decode(m, {1, 3})));
  EXPECT_GT(max_abs_diff(text_decode(m, {1, 3}), text_decode(m, {2, 4})), 0.0);
}

TEST(TextDecode, OutOfVocabularyIsContractError) {
  const Model m = random_model(tiny_config(Variant::kRobust), 3);
  EXPECT_THROW(text_decode(m, {7}), ContractError);
  EXPECT_THROW(text_decode(m, {}), ContractError);
}

TEST(TextGuidedAttention, SingleTokenGivesProjectedValueEverywhere) {
  ModelConfig c = tiny_config(Variant::kRobust);
  c.text_null_key = false;
  const Model m = random_model(c, 4);
  Rng rng(4);
  const Tensor h_aco = random_features(rng, 5, 8);
  const Tensor h_ling = random_features(rng, 1, 8);
  const Tensor out = text_guided_attention(m, h_aco, h_ling);
  const Tensor expect = linear(m, "txt_att.o", linear(m, "txt_att.v", h_ling));
  for (std::size_t r = 0; r < 5; ++r)
    for (std::size_t k = 0; k < 8; ++k) EXPECT_EQ(out(r, k), expect(0, k));
}

TEST(TextGuidedAttention, NoTokensIsContractError) {
  const Model m = random_model(tiny_config(Variant::kRobust), 4);
  EXPECT_THROW(text_guided_attention(m, Tensor::zeros({2, 8}), Tensor::zeros({0, 8})),
               ContractError);
}

// Identity projections, one head: the hand-evaluated case.
Model identity_attention_model(const std::string& prefix, std::size_t d) {
  Model m;
  std::vector<double> eye(d * d, 0.0);
  for (std::size_t i = 0; i < d; ++i) eye[i * d + i] = 1.0;
  for (const char* p : {".q", ".k", ".v", ".o"}) {
    m.params.emplace(prefix + p + ".W", Tensor::param({d, d}, eye));
    m.params.emplace(prefix + p + ".b", Tensor::param({1, d}, std::vector<double>(d, 0.0)));
  }
  return m;
}

TEST(TextGuidedAttention, HandEvaluatedSingleHead) {
  const Model m = identity_attention_model("txt_att", 2);
  const Tensor out = multi_head_attention(m, "txt_att", Tensor::matrix(1, 2, {10, 0}),
                                          Tensor::matrix(2, 2, {1, 0, 0, 1}), 1);
  const double a = 10.0 / std::sqrt(2.0);
  const double w0 = 1.0 / (1.0 + std::exp(-a));
  EXPECT_NEAR(out(0, 0), w0, 1e-15);
  EXPECT_NEAR(out(0, 1), 1.0 - w0, 1e-15);
  EXPECT_NEAR(out(0, 0), 0.99915, 1e-5);
  EXPECT_NEAR(out(0, 1), 0.00085, 1e-5);
}

TEST(ContextualBias, SingleKeyGivesSameSummandForAllRows) {
  const Model m = random_model(tiny_config(Variant::kAttentive), 5);
  Rng rng(5);
  const Tensor z1 = random_features(rng, 6, 8);
  const Tensor a = contextual_bias_attention(m, z1, random_features(rng, 1, 8));
  const Tensor d = a - z1;
  for (std::size_t r = 1; r < 6; ++r)
    for (std::size_t k = 0; k < 8; ++k) EXPECT_NEAR(d(r, k), d(0, k), 1e-15);
}

TEST(ContextualBias, ZeroOutputProjectionIsIdentity) {
  const Model m = init_model(tiny_config(Variant::kAttentive), 6);
  Rng rng(6);
  const Tensor z1 = random_features(rng, 4, 8);
  EXPECT_TRUE(bit_equal(contextual_bias_attention(m, z1, random_features(rng, 3, 8)), z1));
}

TEST(ContextualBias, EmptyBiasIsContractError) {
  const Model m = init_model(tiny_config(Variant::kAttentive), 6);
  EXPECT_THROW(contextual_bias_attention(m, Tensor::zeros({2, 8}), Tensor::zeros({0, 8})),
               ContractError);
}

TEST(BaselineFuse, HadamardExamples) {
  const Tensor z1 = Tensor::matrix(1, 2, {1, 2});
  EXPECT_TRUE(bit_equal(hadamard_fuse(z1, Tensor::matrix(1, 2, {1, 1})), z1));
  EXPECT_TRUE(bit_equal(hadamard_fuse(z1, Tensor::matrix(1, 2, {0, 0})), Tensor::zeros({1, 2})));
  EXPECT_TRUE(bit_equal(hadamard_fuse(z1, Tensor::matrix(1, 2, {3, 0.5})),
                        Tensor::matrix(1, 2, {3, 1})));
}

TEST(BaselineFuse, PoolsLinearOverTime) {
  const Model m = random_model(tiny_config(Variant::kBaseline), 7);
  Rng rng(7);
  const Tensor z1 = random_features(rng, 3, 8);
  const Tensor h = random_features(rng, 4, 8);
  const Tensor proj = linear(m, "asr.fuse.proj", h);
  const Tensor out = baseline_fuse(m, z1, h);
  for (std::size_t r = 0; r < 3; ++r)
    for (std::size_t k = 0; k < 8; ++k) {
      double mu = 0;
      for (std::size_t t = 0; t < 4; ++t) mu += proj(t, k);
      EXPECT_NEAR(out(r, k), z1(r, k) * mu / 4.0, 1e-15);
    }
}

TEST(AsrEncode, AllOnesBiasMatchesBiasFreeForward) {
  const Model m = random_model(tiny_config(Variant::kBaseline), 8);
  Rng rng(8);
  const Tensor x = random_features(rng, 7, 6);
  const auto ones = SpeakerBias::pooled_vector(Tensor::filled({1, 8}, 1.0));
  EXPECT_TRUE(bit_equal(asr_encode(m, x, ones), asr_encode_unbiased(m, x)));
}

TEST(AsrEncode, RobustAndAttentiveDiffer) {
  Rng rng(9);
  const Tensor x = random_features(rng, 6, 6);
  const Tensor enr = random_features(rng, 4, 6);
  const Model att = random_model(tiny_config(Variant::kAttentive), 9);
  const Model rob = random_model(tiny_config(Variant::kRobust), 9);
  const Tensor za = asr_encode(att, x, make_speaker_bias(att, enr));
  const Tensor zr = asr_encode(rob, x, make_speaker_bias(rob, enr, {1, 2}));
  EXPECT_GT(max_abs_diff(za, zr), 0.0);
}

TEST(AsrEncode, ProvenanceMismatchIsContractError) {
  Rng rng(10);
  const Tensor x = random_features(rng, 3, 6);
  const Model base = random_model(tiny_config(Variant::kBaseline), 10);
  const Model att = random_model(tiny_config(Variant::kAttentive), 10);
  const Model rob = random_model(tiny_config(Variant::kRobust), 10);
  const SpeakerBias seq{random_features(rng, 2, 8), false, Provenance::kAcousticOnly};
  const SpeakerBias text{random_features(rng, 2, 8), false, Provenance::kTextGuided};
  EXPECT_THROW(asr_encode(base, x, seq), ContractError);
  EXPECT_THROW(asr_encode(att, x, text), ContractError);
  EXPECT_THROW(asr_encode(rob, x, seq), ContractError);
  EXPECT_THROW(make_speaker_bias(rob, random_features(rng, 2, 6)), ContractError);
}

TEST(AsrEncode, WrongFeatureWidthIsDimensionError) {
  const Model m = random_model(tiny_config(Variant::kBaseline), 11);
  EXPECT_THROW(asr_encode_unbiased(m, Tensor::zeros({3, 5})), DimensionError);
}

TEST(Predict, EmptyPrefixHasOneRow) {
  const Model m = random_model(tiny_config(Variant::kBaseline), 12);
  EXPECT_EQ(predict(m, {}).shape(), (Shape{1, 8}));
}

TEST(Predict, RowsDependOnlyOnEarlierTokens) {
  const Model m = random_model(tiny_config(Variant::kBaseline), 12);
  const Tensor full = predict(m, {1, 2, 3, 4});
  for (std::size_t u = 0; u <= 4; ++u) {
    std::vector<int> prefix{1, 2, 3, 4};
    prefix.resize(u);
    const Tensor part = predict(m, prefix);
    EXPECT_TRUE(bit_equal(part, slice_rows(full, 0, u + 1))) << u;
  }
  EXPECT_THROW(predict(m, {9}), ContractError);
}

TEST(Predict, GoldenHashIsStable) {
  const Model m = init_model(tiny_config(Variant::kBaseline), 43);
  EXPECT_EQ(tensor_hash(predict(m, {1, 4, 2})), 0x52bfbdf73110a94aULL)
      << std::hex << tensor_hash(predict(m, {1, 4, 2}));
}

TEST(Joint, ZeroWeightsGiveUniformPosterior) {
  Model m = random_model(tiny_config(Variant::kBaseline), 13);
  for (const char* p : {"joint.enc.W", "joint.pred.W", "joint.b", "joint.out.W", "joint.out.b"})
    for (auto& v : m.params.at(p).mutable_data()) v = 0.0;
  Rng rng(13);
  const Tensor lp = log_softmax_rows(joint(m, random_features(rng, 2, 8), random_features(rng, 3, 8)));
  for (double v : lp.data()) EXPECT_NEAR(std::exp(v), 1.0 / 5.0, 1e-15);
}

TEST(Joint, IgnoresPredictionWhenItsWeightIsZero) {
  Model m = random_model(tiny_config(Variant::kBaseline), 14);
  for (auto& v : m.params.at("joint.pred.W").mutable_data()) v = 0.0;
  Rng rng(14);
  const Tensor z = random_features(rng, 1, 8);
  EXPECT_TRUE(bit_equal(joint(m, z, random_features(rng, 1, 8)),
                        joint(m, z, random_features(rng, 1, 8))));
}

TEST(Joint, GoldenHashIsStable) {
  const Model m = init_model(tiny_config(Variant::kBaseline), 44);
  Rng rng(44);
  const Tensor out = joint(m, random_features(rng, 2, 8), random_features(rng, 2, 8));
  EXPECT_EQ(tensor_hash(out), 0x87c05562d1d1f3c1ULL) << std::hex << tensor_hash(out);
}

TEST(Checkpoint, ModelRoundTripIsBitExact) {
  for (Variant v : kAll) {
    const Model m = random_model(tiny_config(v), 15);
    const Model back = model_from_checkpoint(parse_checkpoint(serialize_checkpoint(model_checkpoint(m))));
    EXPECT_EQ(back.config.hash(), m.config.hash());
    ASSERT_EQ(back.params.size(), m.params.size());
    for (const auto& [k, t] : m.params) EXPECT_TRUE(bit_equal(t, back.params.at(k))) << k;
  }
}

TEST(Checkpoint, ConfigHashMismatchIsIntegrityError) {
  Checkpoint ck = model_checkpoint(random_model(tiny_config(Variant::kBaseline), 16));
  ck.config_hash ^= 1;
  EXPECT_THROW(model_from_checkpoint(ck), IntegrityError);
}

TEST(Checkpoint, CorruptedBytesAreDetected) {
  std::string bytes = serialize_checkpoint(model_checkpoint(random_model(tiny_config(Variant::kBaseline), 17)));
  bytes[bytes.size() / 2] ^= 0x40;
  EXPECT_THROW(parse_checkpoint(bytes), Error);
}

// Properties.

TEST(ModelProperty, EveryVariantIsPrefixInvariant) {
  Rng rng(20);
  for (Variant v : kAll) {
    for (int trial = 0; trial < 5; ++trial) {
      const Model m = random_model(tiny_config(v), 20 + trial);
      const Tensor x = random_features(rng, 9, 6);
      const SpeakerBias b = make_speaker_bias(m, random_features(rng, 4, 6), {1, 3});
      const Tensor full = asr_encode(m, x, b);
      for (std::size_t t = 1; t <= 9; ++t)
        EXPECT_TRUE(bit_equal(asr_encode(m, slice_rows(x, 0, t), b), slice_rows(full, 0, t)))
            << to_string(v) << " t=" << t;
    }
  }
}

TEST(ModelProperty, StreamingEncoderMatchesBatch) {
  Rng rng(21);
  for (Variant v : kAll) {
    const Model m = random_model(tiny_config(v), 21);
    const Tensor x = random_features(rng, 10, 6);
    const SpeakerBias b = make_speaker_bias(m, random_features(rng, 3, 6), {2});
    const Tensor full = asr_encode(m, x, b);
    StreamingEncoder enc(m, b);
    for (std::size_t t = 0; t < 10; ++t)
      EXPECT_TRUE(bit_equal(enc.push(slice_rows(x, t, t + 1)), slice_rows(full, t, t + 1)))
          << to_string(v) << " t=" << t;
  }
}

TEST(ModelProperty, AttentionIsInvariantToKeyPermutation) {
  Rng rng(22);
  std::vector<std::size_t> order{0, 1, 2};
  for (int trial = 0; trial < 20; ++trial) {
    const Model att = random_model(tiny_config(Variant::kAttentive), 100 + trial);
    const Model rob = random_model(tiny_config(Variant::kRobust), 100 + trial);
    const Tensor z1 = random_features(rng, 4, 8);
    const Tensor keys = random_features(rng, 3, 8);
    std::shuffle(order.begin(), order.end(), rng);
    const Tensor perm = rows_of(keys, order);
    EXPECT_LE(max_abs_diff(contextual_bias_attention(att, z1, keys),
                           contextual_bias_attention(att, z1, perm)), 1e-12);
    EXPECT_LE(max_abs_diff(text_guided_attention(rob, z1, keys),
                           text_guided_attention(rob, z1, perm)), 1e-12);
  }
}

TEST(ModelProperty, SingleKeyAttentionWeightsAreExactlyOne) {
  Rng rng(23);
  for (int trial = 0; trial < 20; ++trial) {
    const Model m = random_model(tiny_config(Variant::kAttentive), 200 + trial);
    const Tensor w = attention_weights(m, "asr.fuse.att", random_features(rng, 5, 8),
                                       random_features(rng, 1, 8), 2, trial % 2);
    for (double v : w.data()) EXPECT_EQ(v, 1.0);
  }
}

TEST(ModelProperty, PooledBiasIsTimeMeanOfSequence) {
  Rng rng(24);
  const Model m = random_model(tiny_config(Variant::kBaseline), 24);
  const Tensor enr = random_features(rng, 5, 6);
  const SpeakerBias b = make_speaker_bias(m, enr);
  EXPECT_TRUE(b.pooled);
  EXPECT_TRUE(bit_equal(b.value, mean(linear(m, "asr.fuse.proj", enroll_encode(m, enr)), 0)));
}

}  // namespace
}  // namespace tsasr
