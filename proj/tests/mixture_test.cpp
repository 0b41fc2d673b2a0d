// tsasr/tests/mixture_test.cpp

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

#include <cmath>

#include "tsasr/mixture.hpp"
#include "tsasr/toy_corpus.hpp"
#include "wave_fixtures.hpp"

namespace tsasr {
namespace {

Waveform wave(std::vector<double> s) {
  Waveform w;
  w.samples = std::move(s);
  return w;
}

Rir taps(std::vector<double> t) {
  Rir r;
  r.taps = std::move(t);
  return r;
}

TEST(GainForSir, EqualPowerAtZeroDbIsUnity) {
  const auto a = wave({1, -1, 1, -1});
  const auto b = wave({-1, 1, 1, -1});
  EXPECT_DOUBLE_EQ(gain_for_sir(a, b, 0.0), 1.0);
}

TEST(GainForSir, EqualPowerAtTwentyDbIsOneTenth) {
  const auto a = wave({0.5, -0.5, 0.5});
  EXPECT_NEAR(gain_for_sir(a, a, 20.0), 0.1, 1e-15);
}

TEST(GainForSir, SilentInterfererIsDegenerate) {
  EXPECT_THROW(gain_for_sir(wave({1, 1}), wave({0, 0}), 0.0), DegenerateInputError);
}

TEST(GainForSir, UsesOverlapRegionOnly) {
  // Power of the interferer beyond the target's length is ignored.
  const double g = gain_for_sir(wave({1, 1}), wave({1, 1, 100, 100}), 0.0);
  EXPECT_DOUBLE_EQ(g, 1.0);
}

TEST(MeasureSir, IdenticalComponentsAreZeroDb) {
  const auto a = wave({0.3, -0.2, 0.1});
  EXPECT_EQ(measure_sir(a, a), 0.0);
}

TEST(MeasureSir, HalfAmplitudeInterfererIsSixDb) {
  const auto a = wave({0.3, -0.2, 0.1});
  const auto b = wave({0.15, -0.1, 0.05});
  EXPECT_NEAR(measure_sir(a, b), 20.0 * std::log10(2.0), 1e-12);
  EXPECT_NEAR(measure_sir(a, b), 6.0206, 1e-4);
}

TEST(MeasureSir, ZeroInterfererIsDegenerate) {
  EXPECT_THROW(measure_sir(wave({1.0}), wave({0.0})), DegenerateInputError);
}

TEST(ApplyRir, UnitImpulseIsIdentity) {
  const auto w = wave({0.1, -0.7, 0.3});
  EXPECT_EQ(apply_rir(w, taps({1.0})).samples, w.samples);
}

TEST(ApplyRir, DelayKernelShiftsInput) {
  const auto out = apply_rir(wave({1, 2, 3}), taps({0, 0, 1}));
  EXPECT_EQ(out.samples, (std::vector<double>{0, 0, 1, 2, 3}));
}

TEST(ApplyRir, ScalarKernelScales) {
  EXPECT_EQ(apply_rir(wave({1, 1}), taps({0.5})).samples, (std::vector<double>{0.5, 0.5}));
}

TEST(ApplyRir, LongResponseMatchesDirectSum) {
  Rng rng(3);
  std::normal_distribution<double> nd(0.0, 1.0);
  std::vector<double> x(3000), h(700);
  for (auto& v : x) v = nd(rng);
  for (auto& v : h) v = nd(rng);
  const auto out = apply_rir(wave(x), taps(h)).samples;
  ASSERT_EQ(out.size(), x.size() + h.size() - 1);
  for (std::size_t n = 0; n < out.size(); n += 37) {
    double want = 0.0;
    for (std::size_t k = 0; k < h.size(); ++k)
      if (n >= k && n - k < x.size()) want += x[n - k] * h[k];
    EXPECT_NEAR(out[n], want, 1e-9);
  }
}

TEST(ApplyRir, SampleRateMismatchIsConfigError) {
  Rir r = taps({1.0});
  r.sample_rate = 8000;
  EXPECT_THROW(apply_rir(wave({1.0}), r), ConfigError);
}

TEST(SyntheticRir, HasDirectPathAndDecays) {
  Rng rng(4);
  const Rir r = make_synthetic_rir(rng, 0.3);
  EXPECT_EQ(r.taps[0], 1.0);
  EXPECT_EQ(r.taps.size(), 4800u);
  double head = 0, tail = 0;
  for (std::size_t i = 1; i < 500; ++i) head += r.taps[i] * r.taps[i];
  for (std::size_t i = r.taps.size() - 499; i < r.taps.size(); ++i) tail += r.taps[i] * r.taps[i];
  EXPECT_GT(head, 1e4 * tail);
}

Waveform seconds(double s) { return wave(std::vector<double>(static_cast<std::size_t>(s * 16000), 0.1)); }

TEST(SplitEnrollment, CutsAtLastBoundaryBeforeLimit) {
  const auto r = split_enrollment(seconds(2.2), {{0, 0.6, 1}, {0.7, 1.3, 2}, {1.4, 2.2, 3}});
  EXPECT_DOUBLE_EQ(r.cut_seconds, 1.3);
  EXPECT_EQ(r.enrollment_words, 2u);
  EXPECT_EQ(r.enrollment.size(), 20800u);
  EXPECT_EQ(r.command.size(), 35200u - 20800u);
}

TEST(SplitEnrollment, BoundaryExactlyAtLimitIsKept) {
  const auto r = split_enrollment(seconds(2.0), {{0, 1.5, 1}, {1.6, 2.0, 2}});
  EXPECT_DOUBLE_EQ(r.cut_seconds, 1.5);
  EXPECT_EQ(r.enrollment.size(), 24000u);
}

TEST(SplitEnrollment, LongFirstWordIsUnsplittable) {
  try {
    split_enrollment(seconds(2.0), {{0, 1.8, 1}});
    FAIL();
  } catch (const DegenerateInputError& e) {
    EXPECT_NE(std::string(e.what()).find("unsplittable"), std::string::npos);
  }
}

TEST(SplitEnrollment, UnsortedBoundariesAreRejected) {
  EXPECT_THROW(split_enrollment(seconds(2.0), {{0.5, 0.9, 1}, {0.2, 0.4, 2}}), ContractError);
}

TEST(LoopNoise, RepeatsWithCrossfade) {
  const std::vector<double> n{1, 1, 1, 1};
  const auto out = loop_noise(n, 10, 2);
  ASSERT_EQ(out.size(), 10u);
  for (double v : out) EXPECT_DOUBLE_EQ(v, 1.0);
  EXPECT_THROW(loop_noise(std::vector<double>{}, 3, 0), DegenerateInputError);
}

TEST(MixtureSpec, RangesAreEnforced) {
  MixtureSpec s;
  s.sir_db = 6;
  EXPECT_THROW(s.validate(), ConfigError);
  s.sir_db = 0;
  s.snr_db = -1;
  EXPECT_THROW(s.validate(), ConfigError);
  s.snr_db = 5;
  s.enrollment_cut = 1.6;
  EXPECT_THROW(s.validate(), ConfigError);
}

TEST(Synthesize, ZeroDbEqualPowerWithoutNoise) {
  WaveCorpus c;
  Utterance a, b;
  a.audio = seconds(2.0);
  a.words = {{0, 1.0, 1}, {1.1, 1.9, 2}};
  b = a;
  for (auto& v : b.audio.samples) v = -v;
  c.utterances = {{"a", a}, {"b", b}};
  MixtureSpec s;
  s.target_utterance_id = "a";
  s.interferer_utterance_id = "b";
  s.sir_db = 0;
  s.noise_enabled = false;
  s.reverb_enabled = false;
  const MixedSample m = synthesize(s, c);
  EXPECT_NEAR(m.achieved_sir_db, 0.0, 1e-6);
  EXPECT_NEAR(measure_sir(m.target_stem, m.interferer_stem), 0.0, 1e-6);
  EXPECT_EQ(m.wake_text, (std::vector<int>{1}));
  EXPECT_EQ(m.transcript, (std::vector<int>{2}));
}

TEST(Synthesize, CleanEnrollmentContainsTargetAndNoiseOnly) {
  const WaveCorpus c = testing::random_corpus(21);
  MixtureSpec s;
  s.target_utterance_id = "u0";
  s.interferer_utterance_id = "u1";
  s.noise_id = "long";
  s.sir_db = -3;
  s.snr_db = 5;
  s.overlapping_enrollment = false;
  const MixedSample m = synthesize(s, c);
  ASSERT_EQ(m.enrollment_mix.size(), m.enrollment_samples);
  for (std::size_t i = 0; i < m.enrollment_samples; ++i) {
    EXPECT_EQ(m.interferer_stem[i], 0.0);
    EXPECT_DOUBLE_EQ(m.enrollment_mix.samples[i],
                     (m.target_stem[i] + m.noise_stem[i]) * m.normalization);
  }
  EXPECT_EQ(m.enrollment_clean.samples,
            std::vector<double>(m.target_stem.begin(),
                                m.target_stem.begin() + static_cast<long>(m.enrollment_samples)));
}

TEST(Synthesize, PeakIsNormalizedJointly) {
  const WaveCorpus c = testing::random_corpus(22);
  Rng rng(1);
  const MixedSample m = synthesize(testing::random_spec(rng), c);
  double peak = 0;
  for (double v : m.enrollment_mix.samples) peak = std::max(peak, std::abs(v));
  for (double v : m.command_mix.samples) peak = std::max(peak, std::abs(v));
  EXPECT_NEAR(peak, 0.9, 1e-12);
}

TEST(Synthesize, UnknownIdsAreConfigErrors) {
  const WaveCorpus c = testing::random_corpus(23);
  MixtureSpec s;
  s.target_utterance_id = "nope";
  s.interferer_utterance_id = "u1";
  EXPECT_THROW(synthesize(s, c), ConfigError);
  s.target_utterance_id = "u0";
  s.noise_id = "nope";
  EXPECT_THROW(synthesize(s, c), ConfigError);
}

// Properties.

TEST(MixtureProperty, AchievedRatiosMatchSpec) {
  const WaveCorpus c = testing::random_corpus(31);
  Rng rng(32);
  for (int i = 0; i < 200; ++i) {
    const MixtureSpec s = testing::random_spec(rng);
    const MixedSample m = synthesize(s, c);
    EXPECT_NEAR(m.achieved_sir_db, s.sir_db, 1e-6);
    EXPECT_NEAR(m.achieved_snr_db, s.snr_db, 1e-6);
    // Independent check from the retained stems.
    const std::size_t off = s.overlapping_enrollment ? 0 : m.enrollment_samples;
    const std::span<const double> t(m.target_stem), it(m.interferer_stem);
    EXPECT_NEAR(measure_sir(t.subspan(off), it.subspan(off)), s.sir_db, 1e-6);
    std::vector<double> speech(t.size());
    for (std::size_t k = 0; k < speech.size(); ++k) speech[k] = t[k] + it[k];
    EXPECT_NEAR(measure_snr(speech, m.noise_stem), s.snr_db, 1e-6);
  }
}

TEST(MixtureProperty, EnrollmentAndCommandShareInterfererGain) {
  const WaveCorpus c = testing::random_corpus(33);
  Rng rng(34);
  for (int i = 0; i < 50; ++i) {
    MixtureSpec s = testing::random_spec(rng);
    s.overlapping_enrollment = true;
    s.reverb_enabled = false;
    const MixedSample m = synthesize(s, c);
    // With reverb off the stem is the raw interferer split and scaled once.
    const auto& raw = c.utterance(s.interferer_utterance_id);
    const auto split = split_enrollment(raw.audio, raw.words);
    for (std::size_t k = 0; k < std::min(split.enrollment.size(), m.enrollment_samples); ++k)
      ASSERT_EQ(m.interferer_stem[k], split.enrollment.samples[k] * m.interferer_gain);
    for (std::size_t k = 0; k < std::min(split.command.size(), m.command_mix.size()); ++k)
      ASSERT_EQ(m.interferer_stem[m.enrollment_samples + k],
                split.command.samples[k] * m.interferer_gain);
  }
}

TEST(MixtureProperty, UnitImpulseRirIsExactIdentity) {
  Rng rng(35);
  std::normal_distribution<double> nd;
  for (int i = 0; i < 20; ++i) {
    Waveform w;
    w.samples.resize(1000);
    for (auto& v : w.samples) v = nd(rng);
    EXPECT_EQ(apply_rir(w, taps({1.0})).samples, w.samples);
  }
}

TEST(MixtureProperty, SynthesisIsPure) {
  const WaveCorpus c = testing::random_corpus(36);
  Rng rng(37);
  for (int i = 0; i < 10; ++i) {
    const MixtureSpec s = testing::random_spec(rng);
    const MixedSample a = synthesize(s, c), b = synthesize(s, c);
    EXPECT_EQ(a.enrollment_mix.samples, b.enrollment_mix.samples);
    EXPECT_EQ(a.command_mix.samples, b.command_mix.samples);
    EXPECT_EQ(a.normalization, b.normalization);
  }
}

// Toy corpus.

TEST(ToyCorpus, SameSeedGivesIdenticalSets) {
  const ToyWorld w(ToyConfig{});
  ToySetSpec spec;
  spec.count = 20;
  spec.seed = 77;
  const auto a = generate_toy_set(w, spec), b = generate_toy_set(w, spec);
  for (std::size_t i = 0; i < a.size(); ++i) {
    EXPECT_EQ(a[i].transcript, b[i].transcript);
    EXPECT_TRUE(bit_equal(a[i].enrollment, b[i].enrollment));
    EXPECT_TRUE(bit_equal(a[i].command, b[i].command));
  }
}

TEST(ToyCorpus, SingleSpeakerIsConfigError) {
  ToyConfig c;
  c.speakers = 1;
  EXPECT_THROW(ToyWorld{c}, ConfigError);
  c.speakers = 8;
  c.vocab_size = 1;
  EXPECT_THROW(ToyWorld{c}, ConfigError);
}

TEST(ToyCorpus, CheatingDecoderRecoversCleanTarget) {
  const ToyWorld w(ToyConfig{});
  ToySetSpec spec;
  spec.count = 200;
  const auto set = generate_toy_set(w, spec);
  for (const auto& s : set) {
    EXPECT_EQ(w.cheat_decode(s.clean_command.data(), s.target_speaker), s.transcript) << s.id;
    EXPECT_EQ(w.cheat_decode(s.clean_enrollment.data(), s.target_speaker), s.wake) << s.id;
  }
}

TEST(ToyCorpus, MixingHitsRequestedRatios) {
  const ToyWorld w(ToyConfig{});
  ToySetSpec spec;
  spec.count = 100;
  for (bool overlap : {false, true}) {
    spec.overlapping_enrollment = overlap;
    for (const auto& s : generate_toy_set(w, spec)) {
      EXPECT_NEAR(s.achieved_sir_db, s.spec.sir_db, 1e-6);
      EXPECT_NEAR(s.achieved_snr_db, s.spec.snr_db, 1e-6);
    }
  }
}

TEST(ToyCorpus, CleanConditionLeavesEnrollmentFreeOfInterferer) {
  const ToyWorld w(ToyConfig{});
  ToySpec spec;
  spec.overlapping_enrollment = false;
  spec.noise_enabled = false;
  const ToySample s = make_toy_sample(w, spec, "x");
  EXPECT_TRUE(bit_equal(s.enrollment, s.clean_enrollment));
  EXPECT_FALSE(bit_equal(s.command, s.clean_command));
}

}  // namespace
}  // namespace tsasr
