// tsasr/tests/signal_test.cpp

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
#include <filesystem>
#include <fstream>
#include <numbers>
#include <random>

#include "tsasr/random.hpp"
#include "tsasr/signal.hpp"

namespace tsasr {
namespace {

std::string tmp_path(const std::string& name) {
  return (std::filesystem::temp_directory_path() / ("tsasr_signal_" + name)).string();
}

Waveform tone(double freq, std::size_t n, double amp = 0.5) {
  Waveform w;
  w.samples.resize(n);
  for (std::size_t i = 0; i < n; ++i)
    w.samples[i] = amp * std::sin(2.0 * std::numbers::pi * freq * i / w.sample_rate);
  return w;
}

// Hand-built RIFF header for the error cases.
std::string wav_bytes(std::uint16_t format, std::uint16_t channels, std::uint16_t bits,
                      std::uint32_t data_bytes, std::size_t actual_data) {
  auto u32 = [](std::uint32_t v) {
    return std::string{char(v & 0xff), char((v >> 8) & 0xff), char((v >> 16) & 0xff),
                       char((v >> 24) & 0xff)};
  };
  auto u16 = [](std::uint16_t v) { return std::string{char(v & 0xff), char(v >> 8)}; };
  std::string s = "RIFF" + u32(36 + data_bytes) + "WAVE" + "fmt " + u32(16) + u16(format) +
                  u16(channels) + u32(16000) + u32(16000 * channels * bits / 8) +
                  u16(static_cast<std::uint16_t>(channels * bits / 8)) + u16(bits) + "data" +
                  u32(data_bytes);
  return s + std::string(actual_data, '\0');
}

TEST(Wav, RoundTripsSixteenThousandSamples) {
  Rng rng(1);
  std::uniform_real_distribution<double> u(-1.0, 1.0);
  Waveform w;
  w.samples.resize(16000);
  for (auto& v : w.samples) v = std::round(u(rng) * 32767.0) / 32768.0;
  const auto path = tmp_path("roundtrip.wav");
  write_wav(w, path);
  const Waveform r = read_wav(path);
  EXPECT_EQ(r.size(), 16000u);
  EXPECT_EQ(r.sample_rate, 16000);
  EXPECT_EQ(r.samples, w.samples);
  std::filesystem::remove(path);
}

TEST(Wav, AllZeroPcmGivesZeroSamples) {
  const Waveform w = parse_wav(wav_bytes(1, 1, 16, 200, 200), "zeros");
  EXPECT_EQ(w.size(), 100u);
  EXPECT_TRUE(std::all_of(w.samples.begin(), w.samples.end(), [](double v) { return v == 0.0; }));
}

TEST(Wav, ScalesByInverse32768) {
  std::string b = wav_bytes(1, 1, 16, 4, 0);
  b += std::string{char(0x00), char(0x80), char(0xff), char(0x7f)};
  const Waveform w = parse_wav(b, "scale");
  EXPECT_EQ(w.samples, (std::vector<double>{-1.0, 32767.0 / 32768.0}));
}

TEST(Wav, StereoIsFormatError) {
  try {
    parse_wav(wav_bytes(1, 2, 16, 400, 400), "stereo");
    FAIL();
  } catch (const FormatError& e) {
    EXPECT_NE(std::string(e.what()).find("channel"), std::string::npos) << e.what();
  }
}

TEST(Wav, NonPcmIsFormatError) {
  EXPECT_THROW(parse_wav(wav_bytes(3, 1, 16, 400, 400), "float"), FormatError);
}

TEST(Wav, TruncatedDataIsFormatError) {
  try {
    parse_wav(wav_bytes(1, 1, 16, 400, 100), "short");
    FAIL();
  } catch (const FormatError& e) {
    EXPECT_NE(std::string(e.what()).find("truncated"), std::string::npos) << e.what();
  }
}

TEST(Wav, MissingFileIsReported) {
  EXPECT_THROW(read_wav(tmp_path("does_not_exist.wav")), Error);
}

TEST(Stft, SineAtBinCenterPeaksAtThatBin) {
  const std::size_t k = 32;
  const Spectrogram s = stft(tone(k * 16000.0 / 512, 4000));
  ASSERT_GT(s.frames, 0u);
  for (std::size_t t = 0; t < s.frames; ++t) {
    std::size_t best = 0;
    for (std::size_t b = 1; b < s.bins; ++b)
      if (std::abs(s.at(t, b)) > std::abs(s.at(t, best))) best = b;
    EXPECT_EQ(best, k) << "frame " << t;
  }
}

TEST(Stft, ZeroSignalGivesZeroSpectrogram) {
  Waveform w;
  w.samples.assign(1600, 0.0);
  const Spectrogram s = stft(w);
  for (const auto& v : s.values) EXPECT_EQ(std::abs(v), 0.0);
}

TEST(Stft, DcSignalConcentratesInBinZero) {
  Waveform w;
  w.samples.assign(1600, 0.25);
  const Spectrogram s = stft(w);
  for (std::size_t t = 0; t < s.frames; ++t) {
    double total = 0.0;
    for (std::size_t b = 0; b < s.bins; ++b) total += std::norm(s.at(t, b));
    // The Hann main lobe spills into bin 1; everything else is negligible.
    EXPECT_GT(std::norm(s.at(t, 0)) / total, 0.5);
    for (std::size_t b = 0; b < s.bins; ++b)
      EXPECT_LE(std::norm(s.at(t, b)), std::norm(s.at(t, 0)) + 1e-12);
  }
}

TEST(Stft, FftSizeMustBePowerOfTwo) {
  StftConfig c;
  c.fft_size = 500;
  EXPECT_THROW(stft(tone(440, 1600), c), ConfigError);
}

TEST(Stft, FftShorterThanFrameIsConfigError) {
  StftConfig c;
  c.fft_size = 256;
  EXPECT_THROW(stft(tone(440, 1600), c), ConfigError);
}

TEST(Stft, FrameCountFollowsShiftFormula) {
  for (std::size_t n : {400u, 401u, 559u, 560u, 16000u}) {
    const Spectrogram s = stft(tone(300, n));
    EXPECT_EQ(s.frames, (n - 400) / 160 + 1) << n;
  }
  EXPECT_EQ(stft(tone(300, 399)).frames, 0u);
}

TEST(LogMel, ZeroSpectrogramHitsFloor) {
  Waveform w;
  w.samples.assign(1600, 0.0);
  const FeatureMatrix f = log_mel(stft(w), 40);
  for (double v : f.frames.data()) EXPECT_EQ(v, std::log(1e-10));
}

TEST(LogMel, WhiteNoiseIsFlatAcrossChannels) {
  Rng rng(3);
  std::normal_distribution<double> nd(0.0, 0.1);
  Waveform w;
  w.samples.resize(400 + 99 * 160);
  for (auto& v : w.samples) v = nd(rng);
  const FeatureMatrix f = log_mel(stft(w), 40);
  ASSERT_EQ(f.num_frames(), 100u);
  std::vector<double> avg_db(40, 0.0);
  for (std::size_t t = 0; t < 100; ++t)
    for (std::size_t m = 0; m < 40; ++m)
      avg_db[m] += 10.0 * std::log10(std::exp(f.frames(t, m))) / 100.0;
  const auto [lo, hi] = std::minmax_element(avg_db.begin(), avg_db.end());
  EXPECT_LE(*hi - *lo, 6.0);
}

TEST(LogMel, ToneSelectsChannelWithNearestCenter) {
  const auto fb = make_mel_filterbank(40, 512, 16000);
  for (double freq : {250.0, 1000.0, 2500.0, 6000.0}) {
    const FeatureMatrix f = log_mel(stft(tone(freq, 3200)), 40);
    std::size_t nearest = 0;
    for (std::size_t m = 1; m < 40; ++m)
      if (std::abs(fb.centers_hz[m] - freq) < std::abs(fb.centers_hz[nearest] - freq))
        nearest = m;
    const auto row = f.frames.row(5);
    const auto arg = static_cast<std::size_t>(std::max_element(row.begin(), row.end()) - row.begin());
    EXPECT_EQ(arg, nearest) << freq << " Hz";
  }
}

TEST(LogMel, FilterRowsSumToOne) {
  const auto fb = make_mel_filterbank(80, 512, 16000);
  for (std::size_t m = 0; m < 80; ++m) {
    double s = 0.0;
    for (std::size_t k = 0; k < fb.bins; ++k) s += fb.weights[m * fb.bins + k];
    EXPECT_NEAR(s, 1.0, 1e-12);
  }
}

TEST(Features, RejectsOtherSampleRates) {
  Waveform w = tone(440, 1600);
  w.sample_rate = 8000;
  EXPECT_THROW(compute_features(w), ConfigError);
}

// Properties.

TEST(SignalProperty, ParsevalHoldsPerFrame) {
  Rng rng(9);
  std::uniform_real_distribution<double> u(-1.0, 1.0);
  Waveform w;
  w.samples.resize(4000);
  for (auto& v : w.samples) v = u(rng);
  const Spectrogram s = stft(w);
  const auto win = hann_window(400);
  for (std::size_t t = 0; t < s.frames; ++t) {
    double e = 0.0;
    for (std::size_t n = 0; n < 400; ++n) {
      const double x = w.samples[t * 160 + n] * win[n];
      e += x * x;
    }
    EXPECT_NEAR(parseval_energy(s, t) / e, 1.0, 1e-6) << t;
  }
}

TEST(SignalProperty, FeaturesAreDeterministicAndShiftConsistent) {
  Rng rng(13);
  std::normal_distribution<double> nd(0.0, 0.3);
  Waveform w;
  w.samples.resize(8000);
  for (auto& v : w.samples) v = nd(rng);
  const FeatureMatrix a = compute_features(w);
  EXPECT_TRUE(bit_equal(a.frames, compute_features(w).frames));
  Waveform shifted = w;
  shifted.samples.erase(shifted.samples.begin(), shifted.samples.begin() + 160);
  const FeatureMatrix b = compute_features(shifted);
  ASSERT_EQ(b.num_frames() + 1, a.num_frames());
  EXPECT_TRUE(bit_equal(b.frames, slice_rows(a.frames, 1, a.num_frames())));
}

}  // namespace
}  // namespace tsasr
