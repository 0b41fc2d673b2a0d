// tsasr/mixture.hpp

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

// Waveform-domain mixture synthesis: reverberation, enrollment split,
// interferer mixing at a target SIR and noise at a target SNR.

#pragma once

#include <algorithm>
#include <cmath>
#include <limits>
#include <map>
#include <mutex>
#include <optional>
#include <random>
#include <span>
#include <string>
#include <utility>
#include <vector>

#include <fftw3.h>

#include "tsasr/error.hpp"
#include "tsasr/random.hpp"
#include "tsasr/signal.hpp"

namespace tsasr {

inline constexpr double kMaxEnrollmentSeconds = 1.5;
inline constexpr double kPeakTarget = 0.9;
inline constexpr double kCrossfadeSeconds = 0.010;

// ---------------------------------------------------------------------------
// Power and gains.

/// Mean squared sample over the first n samples.
inline double mean_power(std::span<const double> x, std::size_t n) {
  if (n == 0) return 0.0;
  double s = 0.0;
  for (std::size_t i = 0; i < n; ++i) s += x[i] * x[i];
  return s / static_cast<double>(n);
}

inline double mean_power(std::span<const double> x) { return mean_power(x, x.size()); }

/// Interferer gain that places `interferer` at `sir_db` below `target`,
/// with power measured over the region where both are defined.
inline double gain_for_sir(std::span<const double> target,
                           std::span<const double> interferer, double sir_db) {
  const std::size_t n = std::min(target.size(), interferer.size());
  const double pt = mean_power(target, n);
  const double pi = mean_power(interferer, n);
  if (!(pt > 0.0)) throw DegenerateInputError("gain_for_sir: target has zero power");
  if (!(pi > 0.0)) throw DegenerateInputError("gain_for_sir: interferer has zero power");
  return std::sqrt(pt / (pi * std::pow(10.0, sir_db / 10.0)));
}

inline double gain_for_sir(const Waveform& target, const Waveform& interferer,
                           double sir_db) {
  return gain_for_sir(target.samples, interferer.samples, sir_db);
}

inline double power_ratio_db(std::span<const double> num, std::span<const double> den,
                             const char* what) {
  const double pn = mean_power(num);
  const double pd = mean_power(den);
  if (!(pn > 0.0) || !(pd > 0.0))
    throw DegenerateInputError(std::string(what) + ": zero-power component");
  return 10.0 * std::log10(pn / pd);
}

inline double measure_sir(std::span<const double> target, std::span<const double> interferer) {
  return power_ratio_db(target, interferer, "measure_sir");
}

inline double measure_sir(const Waveform& target, const Waveform& interferer) {
  return measure_sir(target.samples, interferer.samples);
}

inline double measure_snr(std::span<const double> speech, std::span<const double> noise) {
  return power_ratio_db(speech, noise, "measure_snr");
}

// ---------------------------------------------------------------------------
// Room impulse responses.

struct Rir {
  std::vector<double> taps;
  double t60 = 0.0;  // 0 for user-supplied responses
  int sample_rate = kCanonicalSampleRate;
};

/// Exponentially decaying Gaussian noise with a unit direct-path tap at 0.
template <class G>
Rir make_synthetic_rir(G& rng, double t60, int sample_rate = kCanonicalSampleRate) {
  if (!(t60 > 0.0)) throw ConfigError("rir t60 must be positive");
  Rir r;
  r.t60 = t60;
  r.sample_rate = sample_rate;
  const auto len = static_cast<std::size_t>(std::ceil(t60 * sample_rate));
  r.taps.resize(std::max<std::size_t>(len, 1));
  std::normal_distribution<double> nd(0.0, 1.0);
  // 60 dB amplitude decay over t60.
  const double k = 3.0 * std::log(10.0) / (t60 * sample_rate);
  r.taps[0] = 1.0;
  for (std::size_t i = 1; i < r.taps.size(); ++i)
    r.taps[i] = 0.3 * nd(rng) * std::exp(-k * static_cast<double>(i));
  return r;
}

inline Rir rir_from_waveform(const Waveform& w) {
  if (w.samples.empty()) throw FormatError("empty RIR");
  Rir r;
  r.taps = w.samples;
  r.sample_rate = w.sample_rate;
  return r;
}

namespace detail {

inline constexpr std::size_t kDirectConvolutionTaps = 64;

/// Linear convolution through zero-padded real FFTs.
inline std::vector<double> fft_convolve(std::span<const double> a, std::span<const double> b) {
  const std::size_t out_len = a.size() + b.size() - 1;
  std::size_t n = 1;
  while (n < out_len) n <<= 1;
  const std::size_t bins = n / 2 + 1;
  double* buf = fftw_alloc_real(n);
  fftw_complex* fa = fftw_alloc_complex(bins);
  fftw_complex* fb = fftw_alloc_complex(bins);
  fftw_plan fwd_a, fwd_b, inv;
  {
    std::lock_guard lock(fftw_planner_mutex());
    fwd_a = fftw_plan_dft_r2c_1d(static_cast<int>(n), buf, fa, FFTW_ESTIMATE);
    fwd_b = fftw_plan_dft_r2c_1d(static_cast<int>(n), buf, fb, FFTW_ESTIMATE);
    inv = fftw_plan_dft_c2r_1d(static_cast<int>(n), fa, buf, FFTW_ESTIMATE);
  }
  std::fill_n(buf, n, 0.0);
  std::copy(a.begin(), a.end(), buf);
  fftw_execute(fwd_a);
  std::fill_n(buf, n, 0.0);
  std::copy(b.begin(), b.end(), buf);
  fftw_execute(fwd_b);
  for (std::size_t k = 0; k < bins; ++k) {
    const double re = fa[k][0] * fb[k][0] - fa[k][1] * fb[k][1];
    const double im = fa[k][0] * fb[k][1] + fa[k][1] * fb[k][0];
    fa[k][0] = re;
    fa[k][1] = im;
  }
  fftw_execute(inv);
  std::vector<double> out(buf, buf + out_len);
  for (double& v : out) v /= static_cast<double>(n);
  {
    std::lock_guard lock(fftw_planner_mutex());
    fftw_destroy_plan(fwd_a);
    fftw_destroy_plan(fwd_b);
    fftw_destroy_plan(inv);
  }
  fftw_free(buf);
  fftw_free(fa);
  fftw_free(fb);
  return out;
}

}  // namespace detail

/// Full linear convolution; output length is |w| + |rir| - 1. Short
/// responses are convolved directly, so a unit impulse is an exact identity.
inline Waveform apply_rir(const Waveform& w, const Rir& rir) {
  if (w.sample_rate != rir.sample_rate)
    throw ConfigError("apply_rir: sample rate mismatch (" + std::to_string(w.sample_rate) +
                      " vs " + std::to_string(rir.sample_rate) + ")");
  if (rir.taps.empty()) throw ContractError("apply_rir: empty rir");
  Waveform out;
  out.sample_rate = w.sample_rate;
  if (w.samples.empty()) return out;
  if (std::min(w.size(), rir.taps.size()) > detail::kDirectConvolutionTaps) {
    out.samples = detail::fft_convolve(w.samples, rir.taps);
    return out;
  }
  out.samples.assign(w.size() + rir.taps.size() - 1, 0.0);
  for (std::size_t i = 0; i < w.size(); ++i) {
    const double x = w.samples[i];
    if (x == 0.0) continue;
    for (std::size_t j = 0; j < rir.taps.size(); ++j) out.samples[i + j] += x * rir.taps[j];
  }
  return out;
}

// ---------------------------------------------------------------------------
// Enrollment split.

struct WordSpan {
  double start = 0.0;
  double end = 0.0;
  int token = 0;
};

struct SplitResult {
  Waveform enrollment;
  Waveform command;
  double cut_seconds = 0.0;
  std::size_t enrollment_words = 0;
};

/// Cuts at the end of the last word finishing at or before `max_cut`.
inline SplitResult split_enrollment(const Waveform& w, const std::vector<WordSpan>& words,
                                    double max_cut = kMaxEnrollmentSeconds) {
  if (words.empty()) throw DegenerateInputError("split_enrollment: no word boundaries");
  double prev_end = 0.0;
  for (const auto& wd : words) {
    if (wd.start < prev_end - 1e-12 || wd.end < wd.start)
      throw ContractError("split_enrollment: word boundaries not sorted");
    if (wd.end > w.duration() + 1e-9)
      throw ContractError("split_enrollment: word ends past the signal");
    prev_end = wd.end;
  }
  SplitResult r;
  for (const auto& wd : words) {
    if (wd.end <= max_cut + 1e-12) {
      r.cut_seconds = wd.end;
      ++r.enrollment_words;
    } else {
      break;
    }
  }
  if (r.enrollment_words == 0)
    throw DegenerateInputError("split_enrollment: first word ends at " +
                               std::to_string(words.front().end) + " s, after the " +
                               std::to_string(max_cut) + " s limit (unsplittable)");
  const auto cut = std::min(w.size(), static_cast<std::size_t>(
                                          std::llround(r.cut_seconds * w.sample_rate)));
  r.enrollment.sample_rate = r.command.sample_rate = w.sample_rate;
  r.enrollment.samples.assign(w.samples.begin(), w.samples.begin() + static_cast<long>(cut));
  r.command.samples.assign(w.samples.begin() + static_cast<long>(cut), w.samples.end());
  return r;
}

// ---------------------------------------------------------------------------
// Noise looping.

/// Repeats `noise` until `length` samples, joining copies with a linear
/// crossfade of `crossfade` samples.
inline std::vector<double> loop_noise(std::span<const double> noise, std::size_t length,
                                      std::size_t crossfade) {
  if (noise.empty()) throw DegenerateInputError("loop_noise: empty noise");
  std::vector<double> out(noise.begin(), noise.end());
  if (crossfade >= noise.size()) crossfade = 0;
  while (out.size() < length) {
    const std::size_t base = out.size() - crossfade;
    for (std::size_t i = 0; i < crossfade; ++i) {
      const double a = static_cast<double>(i + 1) / static_cast<double>(crossfade + 1);
      out[base + i] = (1.0 - a) * out[base + i] + a * noise[i];
    }
    out.insert(out.end(), noise.begin() + static_cast<long>(crossfade), noise.end());
  }
  out.resize(length);
  return out;
}

// ---------------------------------------------------------------------------
// Corpus and synthesis.

struct Utterance {
  std::string id;
  Waveform audio;
  std::vector<WordSpan> words;
};

struct WaveCorpus {
  std::map<std::string, Utterance> utterances;
  std::map<std::string, Waveform> noises;
  std::map<std::string, std::vector<Rir>> rir_sets;  // empty set: synthetic

  const Utterance& utterance(const std::string& id) const {
    auto it = utterances.find(id);
    if (it == utterances.end()) throw ConfigError("unknown utterance '" + id + "'");
    return it->second;
  }
};

struct MixtureSpec {
  std::string target_utterance_id;
  std::string interferer_utterance_id;
  std::string noise_id;
  double sir_db = 0.0;
  double snr_db = 10.0;
  std::string rir_set_id;
  double enrollment_cut = kMaxEnrollmentSeconds;
  std::uint64_t rng_seed = kDefaultSeed;
  bool overlapping_enrollment = true;
  bool noise_enabled = true;
  bool reverb_enabled = true;

  void validate() const {
    if (!(sir_db >= -5.0 && sir_db <= 5.0))
      throw ConfigError("sir_db " + std::to_string(sir_db) + " outside [-5, 5]");
    if (noise_enabled && !(snr_db >= 0.0 && snr_db <= 20.0))
      throw ConfigError("snr_db " + std::to_string(snr_db) + " outside [0, 20]");
    if (!(enrollment_cut > 0.0 && enrollment_cut <= kMaxEnrollmentSeconds))
      throw ConfigError("enrollment_cut must lie in (0, 1.5]");
  }
};

struct MixedSample {
  Waveform enrollment_mix;
  Waveform command_mix;
  Waveform enrollment_clean;
  std::vector<int> transcript;
  std::vector<int> wake_text;
  double achieved_sir_db = 0.0;
  double achieved_snr_db = std::numeric_limits<double>::infinity();
  bool overlapping_enrollment = true;
  double interferer_gain = 0.0;
  double noise_gain = 0.0;
  double normalization = 1.0;

  // Pre-normalization stems, enrollment followed by command.
  std::vector<double> target_stem;
  std::vector<double> interferer_stem;
  std::vector<double> noise_stem;
  std::size_t enrollment_samples = 0;
};

namespace detail {

inline std::vector<double> fit_length(std::span<const double> x, std::size_t n) {
  std::vector<double> out(n, 0.0);
  std::copy_n(x.begin(), std::min(n, x.size()), out.begin());
  return out;
}

inline std::vector<double> concat(std::span<const double> a, std::span<const double> b) {
  std::vector<double> out(a.begin(), a.end());
  out.insert(out.end(), b.begin(), b.end());
  return out;
}

inline Waveform reverberate(const Waveform& w, const Rir& rir) {
  Waveform out = apply_rir(w, rir);
  out.samples.resize(w.size());
  return out;
}

template <class G>
Rir pick_rir(const WaveCorpus& corpus, const std::string& set_id, G& rng, int sample_rate) {
  if (!set_id.empty()) {
    auto it = corpus.rir_sets.find(set_id);
    if (it == corpus.rir_sets.end()) throw ConfigError("unknown rir set '" + set_id + "'");
    if (!it->second.empty()) {
      std::uniform_int_distribution<std::size_t> pick(0, it->second.size() - 1);
      return it->second[pick(rng)];
    }
  }
  std::uniform_real_distribution<double> t60(0.2, 0.6);
  return make_synthetic_rir(rng, t60(rng), sample_rate);
}

}  // namespace detail

/// One sample: reverberate each source with its own response, split both
/// speakers at the enrollment boundary, mix at the requested SIR with one
/// interferer gain for both segments, add noise at the requested SNR with one
/// noise gain, then peak-normalize both mixtures jointly.
inline MixedSample synthesize(const MixtureSpec& spec, const WaveCorpus& corpus) {
  spec.validate();
  const Utterance& tgt = corpus.utterance(spec.target_utterance_id);
  const Utterance& itf = corpus.utterance(spec.interferer_utterance_id);
  const int sr = tgt.audio.sample_rate;
  if (itf.audio.sample_rate != sr) throw ConfigError("synthesize: sample rate mismatch");
  Rng rng(spec.rng_seed);

  Waveform tgt_rev = tgt.audio, itf_rev = itf.audio;
  if (spec.reverb_enabled) {
    tgt_rev = detail::reverberate(tgt.audio, detail::pick_rir(corpus, spec.rir_set_id, rng, sr));
    itf_rev = detail::reverberate(itf.audio, detail::pick_rir(corpus, spec.rir_set_id, rng, sr));
  }

  const SplitResult ts = split_enrollment(tgt_rev, tgt.words, spec.enrollment_cut);
  const SplitResult is = split_enrollment(itf_rev, itf.words, spec.enrollment_cut);
  const std::size_t le = ts.enrollment.size();
  const std::size_t lc = ts.command.size();

  MixedSample out;
  out.overlapping_enrollment = spec.overlapping_enrollment;
  out.enrollment_samples = le;
  for (std::size_t i = 0; i < tgt.words.size(); ++i)
    (i < ts.enrollment_words ? out.wake_text : out.transcript).push_back(tgt.words[i].token);

  const auto i_enr = detail::fit_length(is.enrollment.samples, le);
  const auto i_cmd = detail::fit_length(is.command.samples, lc);
  out.target_stem = detail::concat(ts.enrollment.samples, ts.command.samples);

  // Gain is computed over exactly the samples that will be mixed.
  std::vector<double> i_mixed = spec.overlapping_enrollment
                                    ? detail::concat(i_enr, i_cmd)
                                    : detail::concat(std::vector<double>(le, 0.0), i_cmd);
  const std::span<const double> t_region =
      spec.overlapping_enrollment
          ? std::span<const double>(out.target_stem)
          : std::span<const double>(out.target_stem).subspan(le);
  const std::span<const double> i_region =
      spec.overlapping_enrollment ? std::span<const double>(i_mixed)
                                  : std::span<const double>(i_mixed).subspan(le);
  out.interferer_gain = gain_for_sir(t_region, i_region, spec.sir_db);
  for (double& v : i_mixed) v *= out.interferer_gain;
  out.interferer_stem = i_mixed;
  out.achieved_sir_db =
      measure_sir(t_region, spec.overlapping_enrollment
                                ? std::span<const double>(out.interferer_stem)
                                : std::span<const double>(out.interferer_stem).subspan(le));

  std::vector<double> speech(out.target_stem.size());
  for (std::size_t i = 0; i < speech.size(); ++i)
    speech[i] = out.target_stem[i] + out.interferer_stem[i];

  out.noise_stem.assign(speech.size(), 0.0);
  if (spec.noise_enabled) {
    auto nit = corpus.noises.find(spec.noise_id);
    if (nit == corpus.noises.end()) throw ConfigError("unknown noise '" + spec.noise_id + "'");
    Waveform noise = nit->second;
    if (noise.sample_rate != sr) throw ConfigError("synthesize: noise sample rate mismatch");
    if (spec.reverb_enabled)
      noise = detail::reverberate(noise, detail::pick_rir(corpus, spec.rir_set_id, rng, sr));
    const auto offset = static_cast<std::size_t>(std::llround(kMaxEnrollmentSeconds * sr));
    const auto looped = loop_noise(noise.samples, offset + lc,
                                   frame_samples(kCrossfadeSeconds, sr));
    std::copy_n(looped.begin(), le, out.noise_stem.begin());
    std::copy_n(looped.begin() + static_cast<long>(offset), lc,
                out.noise_stem.begin() + static_cast<long>(le));
    out.noise_gain = gain_for_sir(speech, out.noise_stem, spec.snr_db);
    for (double& v : out.noise_stem) v *= out.noise_gain;
    out.achieved_snr_db = measure_snr(speech, out.noise_stem);
  }

  std::vector<double> mix(speech.size());
  double peak = 0.0;
  for (std::size_t i = 0; i < mix.size(); ++i) {
    mix[i] = speech[i] + out.noise_stem[i];
    peak = std::max(peak, std::abs(mix[i]));
  }
  out.normalization = peak > 0.0 ? kPeakTarget / peak : 1.0;
  for (double& v : mix) v *= out.normalization;

  out.enrollment_mix.sample_rate = out.command_mix.sample_rate = sr;
  out.enrollment_mix.samples.assign(mix.begin(), mix.begin() + static_cast<long>(le));
  out.command_mix.samples.assign(mix.begin() + static_cast<long>(le), mix.end());
  out.enrollment_clean = ts.enrollment;
  return out;
}

}  // namespace tsasr
