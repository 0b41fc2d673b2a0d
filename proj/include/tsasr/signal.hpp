// tsasr/signal.hpp

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

// Waveform I/O and the log-mel front-end.

#pragma once

#include <algorithm>
#include <cmath>
#include <complex>
#include <cstdint>
#include <cstring>
#include <fstream>
#include <iterator>
#include <mutex>
#include <numbers>
#include <string>
#include <vector>

#include <fftw3.h>

#include "tsasr/error.hpp"
#include "tsasr/tensor.hpp"

namespace tsasr {

inline constexpr int kCanonicalSampleRate = 16000;

struct Waveform {
  std::vector<double> samples;
  int sample_rate = kCanonicalSampleRate;

  std::size_t size() const { return samples.size(); }
  double duration() const {
    return static_cast<double>(samples.size()) / sample_rate;
  }
};

struct FeatureMatrix {
  Tensor frames;  // [T x d]
  double frame_shift = 0.01;
  double frame_length = 0.025;

  std::size_t num_frames() const { return frames.defined() ? frames.rows() : 0; }
  std::size_t dim() const { return frames.defined() ? frames.cols() : 0; }
};

// ---------------------------------------------------------------------------
// WAV (RIFF, PCM 16-bit, mono).

namespace detail {

inline std::uint32_t le32(const unsigned char* p) {
  return p[0] | (p[1] << 8) | (p[2] << 16) | (static_cast<std::uint32_t>(p[3]) << 24);
}
inline std::uint16_t le16(const unsigned char* p) {
  return static_cast<std::uint16_t>(p[0] | (p[1] << 8));
}

}  // namespace detail

inline Waveform parse_wav(const std::string& bytes, const std::string& what) {
  const auto* p = reinterpret_cast<const unsigned char*>(bytes.data());
  const std::size_t n = bytes.size();
  if (n < 12 || std::memcmp(p, "RIFF", 4) != 0 || std::memcmp(p + 8, "WAVE", 4) != 0)
    throw FormatError(what + ": not a RIFF/WAVE file");
  std::size_t pos = 12;
  bool have_fmt = false;
  std::uint16_t channels = 0, bits = 0, format = 0;
  std::uint32_t rate = 0;
  while (pos + 8 <= n) {
    const std::uint32_t size = detail::le32(p + pos + 4);
    const bool is_fmt = std::memcmp(p + pos, "fmt ", 4) == 0;
    const bool is_data = std::memcmp(p + pos, "data", 4) == 0;
    pos += 8;
    if (is_fmt) {
      if (size < 16 || pos + 16 > n)
        throw FormatError(what + ": truncated fmt chunk");
      format = detail::le16(p + pos);
      channels = detail::le16(p + pos + 2);
      rate = detail::le32(p + pos + 4);
      bits = detail::le16(p + pos + 14);
      have_fmt = true;
      if (format != 1)
        throw FormatError(what + ": not PCM (format tag " + std::to_string(format) + ")");
      if (channels != 1)
        throw FormatError(what + ": expected mono, found " +
                          std::to_string(channels) + " channels");
      if (bits != 16)
        throw FormatError(what + ": expected 16-bit samples, found " +
                          std::to_string(bits) + "-bit");
    } else if (is_data) {
      if (!have_fmt) throw FormatError(what + ": data chunk before fmt chunk");
      if (pos + size > n)
        throw FormatError(what + ": truncated data chunk (header says " +
                          std::to_string(size) + " bytes, " +
                          std::to_string(n - pos) + " present)");
      if (size % 2 != 0) throw FormatError(what + ": odd data chunk size");
      Waveform w;
      w.sample_rate = static_cast<int>(rate);
      w.samples.resize(size / 2);
      for (std::size_t i = 0; i < w.samples.size(); ++i) {
        const auto s = static_cast<std::int16_t>(detail::le16(p + pos + 2 * i));
        w.samples[i] = s / 32768.0;
      }
      return w;
    }
    pos += size + (size & 1);
  }
  throw FormatError(what + (have_fmt ? ": missing data chunk" : ": missing fmt chunk"));
}

inline Waveform read_wav(const std::string& path) {
  std::ifstream is(path, std::ios::binary);
  if (!is) throw FormatError("cannot open WAV file '" + path + "'");
  std::string bytes((std::istreambuf_iterator<char>(is)),
                    std::istreambuf_iterator<char>());
  return parse_wav(bytes, path);
}

inline std::string encode_wav(const Waveform& w) {
  std::string out;
  auto put32 = [&out](std::uint32_t v) {
    for (int i = 0; i < 4; ++i) out.push_back(static_cast<char>((v >> (8 * i)) & 0xff));
  };
  auto put16 = [&out](std::uint16_t v) {
    out.push_back(static_cast<char>(v & 0xff));
    out.push_back(static_cast<char>(v >> 8));
  };
  const auto data_bytes = static_cast<std::uint32_t>(w.samples.size() * 2);
  out += "RIFF";
  put32(36 + data_bytes);
  out += "WAVEfmt ";
  put32(16);
  put16(1);
  put16(1);
  put32(static_cast<std::uint32_t>(w.sample_rate));
  put32(static_cast<std::uint32_t>(w.sample_rate) * 2);
  put16(2);
  put16(16);
  out += "data";
  put32(data_bytes);
  for (double s : w.samples) {
    const double c = std::clamp(s, -1.0, 32767.0 / 32768.0);
    put16(static_cast<std::uint16_t>(static_cast<std::int16_t>(std::lround(c * 32768.0))));
  }
  return out;
}

inline void write_wav(const Waveform& w, const std::string& path) {
  std::ofstream os(path, std::ios::binary | std::ios::trunc);
  if (!os) throw Error("cannot open '" + path + "' for writing");
  const std::string bytes = encode_wav(w);
  os.write(bytes.data(), static_cast<std::streamsize>(bytes.size()));
}

// ---------------------------------------------------------------------------
// FFT / STFT.

inline bool is_power_of_two(std::size_t n) { return n >= 1 && (n & (n - 1)) == 0; }

namespace detail {

inline std::mutex& fftw_planner_mutex() {
  static std::mutex m;
  return m;
}

/// Real-input FFT of fixed size. Planning is serialized; execution is not.
class RealFft {
 public:
  explicit RealFft(std::size_t n) : n_(n) {
    in_ = fftw_alloc_real(n);
    out_ = fftw_alloc_complex(n / 2 + 1);
    std::lock_guard lock(fftw_planner_mutex());
    plan_ = fftw_plan_dft_r2c_1d(static_cast<int>(n), in_, out_, FFTW_ESTIMATE);
  }
  RealFft(const RealFft&) = delete;
  RealFft& operator=(const RealFft&) = delete;
  ~RealFft() {
    {
      std::lock_guard lock(fftw_planner_mutex());
      fftw_destroy_plan(plan_);
    }
    fftw_free(in_);
    fftw_free(out_);
  }

  double* input() { return in_; }
  void execute() { fftw_execute(plan_); }
  std::complex<double> output(std::size_t k) const { return {out_[k][0], out_[k][1]}; }

 private:
  std::size_t n_;
  double* in_ = nullptr;
  fftw_complex* out_ = nullptr;
  fftw_plan plan_ = nullptr;
};

}  // namespace detail

struct StftConfig {
  double frame_length = 0.025;
  double frame_shift = 0.010;
  std::size_t fft_size = 512;
};

struct Spectrogram {
  std::size_t frames = 0;
  std::size_t bins = 0;  // fft_size / 2 + 1
  std::size_t fft_size = 0;
  int sample_rate = kCanonicalSampleRate;
  double frame_length = 0.0;
  double frame_shift = 0.0;
  std::vector<std::complex<double>> values;  // frames x bins

  std::complex<double> at(std::size_t t, std::size_t k) const {
    return values[t * bins + k];
  }
};

inline std::vector<double> hann_window(std::size_t length) {
  std::vector<double> w(length, 1.0);
  if (length < 2) return w;
  for (std::size_t n = 0; n < length; ++n)
    w[n] = 0.5 - 0.5 * std::cos(2.0 * std::numbers::pi * n / (length - 1));
  return w;
}

inline std::size_t frame_samples(double seconds, int sample_rate) {
  return static_cast<std::size_t>(std::lround(seconds * sample_rate));
}

/// Frame t covers samples [t*shift, t*shift + length), Hann windowed and
/// zero-padded to fft_size.
inline Spectrogram stft(const Waveform& w, const StftConfig& cfg = {}) {
  if (!is_power_of_two(cfg.fft_size))
    throw ConfigError("stft: fft_size " + std::to_string(cfg.fft_size) +
                      " is not a power of two");
  const std::size_t len = frame_samples(cfg.frame_length, w.sample_rate);
  const std::size_t shift = frame_samples(cfg.frame_shift, w.sample_rate);
  if (len == 0 || shift == 0) throw ConfigError("stft: empty frame or shift");
  if (cfg.fft_size < len)
    throw ConfigError("stft: fft_size " + std::to_string(cfg.fft_size) +
                      " shorter than frame of " + std::to_string(len) + " samples");
  Spectrogram s;
  s.fft_size = cfg.fft_size;
  s.bins = cfg.fft_size / 2 + 1;
  s.sample_rate = w.sample_rate;
  s.frame_length = cfg.frame_length;
  s.frame_shift = cfg.frame_shift;
  s.frames = w.size() >= len ? (w.size() - len) / shift + 1 : 0;
  s.values.resize(s.frames * s.bins);
  const auto window = hann_window(len);
  detail::RealFft fft(cfg.fft_size);
  double* buf = fft.input();
  for (std::size_t t = 0; t < s.frames; ++t) {
    std::fill(buf, buf + cfg.fft_size, 0.0);
    for (std::size_t n = 0; n < len; ++n)
      buf[n] = w.samples[t * shift + n] * window[n];
    fft.execute();
    for (std::size_t k = 0; k < s.bins; ++k) s.values[t * s.bins + k] = fft.output(k);
  }
  return s;
}

/// Energy of the zero-padded time-domain frame recovered from its one-sided
/// spectrum via Parseval's relation.
inline double parseval_energy(const Spectrogram& s, std::size_t t) {
  const std::size_t n = s.fft_size;
  double e = 0.0;
  for (std::size_t k = 0; k < s.bins; ++k) {
    const double p = std::norm(s.at(t, k));
    e += (k == 0 || k == n / 2) ? p : 2.0 * p;
  }
  return e / static_cast<double>(n);
}

// ---------------------------------------------------------------------------
// Mel filterbank.

inline double hz_to_mel(double hz) { return 2595.0 * std::log10(1.0 + hz / 700.0); }
inline double mel_to_hz(double mel) { return 700.0 * (std::pow(10.0, mel / 2595.0) - 1.0); }

struct MelFilterbank {
  std::size_t n_mels = 0;
  std::size_t bins = 0;
  std::vector<double> centers_hz;
  std::vector<double> weights;  // n_mels x bins, each row sums to 1
};

/// Triangular filters spaced evenly on the mel scale over [0, sr/2], each
/// normalized to unit sum so a flat spectrum maps to a flat mel vector.
inline MelFilterbank make_mel_filterbank(std::size_t n_mels, std::size_t fft_size,
                                         int sample_rate) {
  if (n_mels < 1) throw ConfigError("mel filterbank needs at least one channel");
  MelFilterbank fb;
  fb.n_mels = n_mels;
  fb.bins = fft_size / 2 + 1;
  const double top = hz_to_mel(sample_rate / 2.0);
  std::vector<double> edges(n_mels + 2);
  for (std::size_t i = 0; i < edges.size(); ++i)
    edges[i] = mel_to_hz(top * static_cast<double>(i) / (n_mels + 1));
  fb.weights.assign(n_mels * fb.bins, 0.0);
  const double bin_hz = static_cast<double>(sample_rate) / fft_size;
  for (std::size_t m = 0; m < n_mels; ++m) {
    const double lo = edges[m], mid = edges[m + 1], hi = edges[m + 2];
    fb.centers_hz.push_back(mid);
    double total = 0.0;
    for (std::size_t k = 0; k < fb.bins; ++k) {
      const double f = k * bin_hz;
      double v = 0.0;
      if (f > lo && f <= mid) v = (f - lo) / (mid - lo);
      else if (f > mid && f < hi) v = (hi - f) / (hi - mid);
      fb.weights[m * fb.bins + k] = v;
      total += v;
    }
    if (total == 0.0) {
      // Narrower than one bin: fall back to the bin nearest the center.
      const auto k = std::min(fb.bins - 1, static_cast<std::size_t>(std::lround(mid / bin_hz)));
      fb.weights[m * fb.bins + k] = 1.0;
      total = 1.0;
    }
    for (std::size_t k = 0; k < fb.bins; ++k) fb.weights[m * fb.bins + k] /= total;
  }
  return fb;
}

inline constexpr double kLogMelFloor = 1e-10;

inline FeatureMatrix log_mel(const Spectrogram& spec, std::size_t n_mels) {
  const auto fb = make_mel_filterbank(n_mels, spec.fft_size, spec.sample_rate);
  std::vector<double> out(spec.frames * n_mels);
  for (std::size_t t = 0; t < spec.frames; ++t)
    for (std::size_t m = 0; m < n_mels; ++m) {
      double e = 0.0;
      for (std::size_t k = 0; k < spec.bins; ++k)
        e += fb.weights[m * spec.bins + k] * std::norm(spec.at(t, k));
      out[t * n_mels + m] = std::log(std::max(e, kLogMelFloor));
    }
  FeatureMatrix fm;
  fm.frames = Tensor::matrix(spec.frames, n_mels, std::move(out));
  fm.frame_shift = spec.frame_shift;
  fm.frame_length = spec.frame_length;
  return fm;
}

struct FrontendConfig {
  StftConfig stft;
  std::size_t n_mels = 40;
};

/// Full front-end for 16 kHz input; other rates are rejected because
/// resampling is not provided.
inline FeatureMatrix compute_features(const Waveform& w, const FrontendConfig& cfg = {}) {
  if (w.sample_rate != kCanonicalSampleRate)
    throw ConfigError("expected " + std::to_string(kCanonicalSampleRate) +
                      " Hz audio, got " + std::to_string(w.sample_rate) +
                      " Hz (resampling is not supported)");
  return log_mel(stft(w, cfg.stft), cfg.n_mels);
}

}  // namespace tsasr
