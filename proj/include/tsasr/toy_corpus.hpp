// tsasr/toy_corpus.hpp

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

// Synthetic feature-domain corpus. Each speaker owns a band of the feature
// vector; a token is a short pattern repeated across bands and shaped by the
// speaker signature.

#pragma once

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <limits>
#include <random>
#include <string>
#include <vector>

#include "tsasr/config.hpp"
#include "tsasr/error.hpp"
#include "tsasr/mixture.hpp"
#include "tsasr/random.hpp"
#include "tsasr/tensor.hpp"

namespace tsasr {

struct ToyConfig {
  int vocab_size = 16;  // including blank 0
  int speakers = 8;
  int feat_dim = 40;
  int frames_per_token = 4;
  int min_tokens = 4;
  int max_tokens = 7;
  int min_wake = 1;
  int max_wake = 2;
  double leakage = 0.3;
  double render_noise = 0.05;
  std::uint64_t world_seed = kDefaultSeed;

  int band() const { return feat_dim / speakers; }

  void validate() const {
    if (vocab_size < 2) throw ConfigError("toy corpus: vocab_size must be at least 2");
    if (speakers < 2) throw ConfigError("toy corpus: speaker count must be at least 2");
    if (feat_dim < speakers || feat_dim % speakers != 0)
      throw ConfigError("toy corpus: feat_dim must be a positive multiple of speakers");
    if (frames_per_token < 1) throw ConfigError("toy corpus: frames_per_token must be >= 1");
    if (min_wake < 1 || max_wake < min_wake)
      throw ConfigError("toy corpus: bad wake length range");
    if (min_tokens < max_wake + 1 || max_tokens < min_tokens)
      throw ConfigError("toy corpus: utterances must leave at least one command token");
    if (leakage < 0.0 || render_noise < 0.0)
      throw ConfigError("toy corpus: leakage and render_noise must be non-negative");
  }

  static ToyConfig from(const KeyValues& kv) {
    ToyConfig c;
    c.vocab_size = kv.get_as("toy.vocab_size", c.vocab_size);
    c.speakers = kv.get_as("toy.speakers", c.speakers);
    c.feat_dim = kv.get_as("toy.feat_dim", c.feat_dim);
    c.frames_per_token = kv.get_as("toy.frames_per_token", c.frames_per_token);
    c.min_tokens = kv.get_as("toy.min_tokens", c.min_tokens);
    c.max_tokens = kv.get_as("toy.max_tokens", c.max_tokens);
    c.min_wake = kv.get_as("toy.min_wake", c.min_wake);
    c.max_wake = kv.get_as("toy.max_wake", c.max_wake);
    c.leakage = kv.get_as("toy.leakage", c.leakage);
    c.render_noise = kv.get_as("toy.render_noise", c.render_noise);
    c.world_seed = kv.get_as("toy.world_seed", c.world_seed);
    c.validate();
    return c;
  }

  void store(KeyValues& kv) const {
    kv.set("toy.vocab_size", std::to_string(vocab_size));
    kv.set("toy.speakers", std::to_string(speakers));
    kv.set("toy.feat_dim", std::to_string(feat_dim));
    kv.set("toy.frames_per_token", std::to_string(frames_per_token));
    kv.set("toy.min_tokens", std::to_string(min_tokens));
    kv.set("toy.max_tokens", std::to_string(max_tokens));
    kv.set("toy.min_wake", std::to_string(min_wake));
    kv.set("toy.max_wake", std::to_string(max_wake));
    kv.set("toy.leakage", format_double(leakage));
    kv.set("toy.render_noise", format_double(render_noise));
    kv.set("toy.world_seed", std::to_string(world_seed));
  }

  static std::string format_double(double v) {
    char buf[32];
    std::snprintf(buf, sizeof buf, "%.17g", v);
    return buf;
  }
};

/// Speaker signatures and token patterns drawn from the world seed.
class ToyWorld {
 public:
  explicit ToyWorld(const ToyConfig& cfg) : cfg_(cfg) {
    cfg_.validate();
    Rng rng(fork_seed(cfg_.world_seed, 0x70cc));
    const int b = cfg_.band();
    std::normal_distribution<double> nd(0.0, 1.0);
    patterns_.assign(static_cast<std::size_t>(cfg_.vocab_size), std::vector<double>(b, 0.0));
    // Blank has no pattern. Real tokens get non-negative unit-RMS patterns
    // with a minimum pairwise distance so they stay separable under noise.
    const double min_dist = 0.5 * std::sqrt(static_cast<double>(b));
    for (int k = 1; k < cfg_.vocab_size; ++k) {
      for (int attempt = 0;; ++attempt) {
        std::vector<double> p(b);
        double n2 = 0.0;
        for (auto& v : p) {
          v = std::abs(nd(rng));
          n2 += v * v;
        }
        for (auto& v : p) v *= std::sqrt(b / n2);
        bool ok = true;
        for (int j = 1; j < k && ok; ++j) ok = distance(p, patterns_[j]) >= min_dist;
        if (ok || attempt > 10000) {
          patterns_[k] = std::move(p);
          break;
        }
      }
    }
    std::uniform_real_distribution<double> ud(0.0, 1.0);
    signatures_.assign(static_cast<std::size_t>(cfg_.speakers),
                       std::vector<double>(cfg_.feat_dim, 0.0));
    for (int s = 0; s < cfg_.speakers; ++s)
      for (int f = 0; f < cfg_.feat_dim; ++f)
        signatures_[s][f] = (f / b == s) ? 1.0 : cfg_.leakage * ud(rng);
  }

  const ToyConfig& config() const { return cfg_; }
  const std::vector<double>& signature(int s) const { return signatures_.at(s); }
  const std::vector<double>& pattern(int k) const { return patterns_.at(k); }

  /// Noise-free frame for token k spoken by speaker s.
  std::vector<double> frame(int k, int s) const {
    std::vector<double> out(cfg_.feat_dim);
    const int b = cfg_.band();
    for (int f = 0; f < cfg_.feat_dim; ++f)
      out[f] = patterns_[k][f % b] * signatures_[s][f];
    return out;
  }

  /// Renders tokens as frames_per_token frames each, starting `phase`
  /// frames into the first token, truncated or extended to `length` frames
  /// when `length` is nonzero. Extension draws fresh random tokens.
  template <class G>
  std::vector<double> render(const std::vector<int>& tokens, int speaker, G& rng,
                             std::size_t length = 0, int phase = 0) const {
    const auto fpt = static_cast<std::size_t>(cfg_.frames_per_token);
    std::vector<int> seq = tokens;
    const std::size_t want = length == 0 ? seq.size() * fpt : length + phase;
    std::uniform_int_distribution<int> tok(1, cfg_.vocab_size - 1);
    while (seq.size() * fpt < want) seq.push_back(tok(rng));
    std::normal_distribution<double> nd(0.0, cfg_.render_noise);
    const std::size_t frames = length == 0 ? seq.size() * fpt : length;
    std::vector<double> out(frames * cfg_.feat_dim);
    for (std::size_t t = 0; t < frames; ++t) {
      const auto base = frame(seq[(t + phase) / fpt], speaker);
      for (int f = 0; f < cfg_.feat_dim; ++f)
        out[t * cfg_.feat_dim + f] = base[f] + (cfg_.render_noise > 0 ? nd(rng) : 0.0);
    }
    return out;
  }

  /// Reads each token block of a clean single-speaker stream from the
  /// speaker's own band and picks the nearest pattern.
  std::vector<int> cheat_decode(std::span<const double> feats, int speaker) const {
    const int b = cfg_.band();
    const auto fpt = static_cast<std::size_t>(cfg_.frames_per_token);
    const std::size_t frames = feats.size() / cfg_.feat_dim;
    std::vector<int> out;
    for (std::size_t t0 = 0; t0 + fpt <= frames; t0 += fpt) {
      std::vector<double> avg(b, 0.0);
      for (std::size_t t = t0; t < t0 + fpt; ++t)
        for (int d = 0; d < b; ++d) avg[d] += feats[t * cfg_.feat_dim + speaker * b + d] / fpt;
      int best = 1;
      double best_d = std::numeric_limits<double>::infinity();
      for (int k = 1; k < cfg_.vocab_size; ++k) {
        const double dd = distance(avg, patterns_[k]);
        if (dd < best_d) {
          best_d = dd;
          best = k;
        }
      }
      out.push_back(best);
    }
    return out;
  }

 private:
  static double distance(const std::vector<double>& a, const std::vector<double>& b) {
    double s = 0.0;
    for (std::size_t i = 0; i < a.size(); ++i) s += (a[i] - b[i]) * (a[i] - b[i]);
    return std::sqrt(s);
  }

  ToyConfig cfg_;
  std::vector<std::vector<double>> patterns_;
  std::vector<std::vector<double>> signatures_;
};

struct ToySpec {
  double sir_db = 0.0;
  double snr_db = 10.0;
  bool overlapping_enrollment = false;
  bool noise_enabled = true;
  std::uint64_t seed = kDefaultSeed;
};

struct ToySample {
  std::string id;
  int target_speaker = 0;
  int interferer_speaker = 1;
  std::vector<int> wake;        // Y'
  std::vector<int> transcript;  // Y
  ToySpec spec;
  double achieved_sir_db = 0.0;
  double achieved_snr_db = std::numeric_limits<double>::infinity();
  double interferer_gain = 0.0;
  double noise_gain = 0.0;
  Tensor enrollment;        // [Te x F] mixture seen by the enrollment encoder
  Tensor command;           // [Tc x F] mixture seen by the ASR encoder
  Tensor clean_enrollment;  // target only
  Tensor clean_command;     // target only

  std::size_t frames() const { return enrollment.rows() + command.rows(); }
};

/// Builds one sample. Mixing is frame-wise feature addition; the interferer
/// gain is computed over every frame it is added to, and one noise gain
/// covers enrollment and command together.
inline ToySample make_toy_sample(const ToyWorld& world, const ToySpec& spec, std::string id) {
  const ToyConfig& cfg = world.config();
  Rng rng(spec.seed);
  ToySample s;
  s.id = std::move(id);
  s.spec = spec;
  std::uniform_int_distribution<int> spk(0, cfg.speakers - 1);
  s.target_speaker = spk(rng);
  do {
    s.interferer_speaker = spk(rng);
  } while (s.interferer_speaker == s.target_speaker);
  std::uniform_int_distribution<int> len(cfg.min_tokens, cfg.max_tokens);
  std::uniform_int_distribution<int> wake(cfg.min_wake, cfg.max_wake);
  std::uniform_int_distribution<int> tok(1, cfg.vocab_size - 1);
  const int n = len(rng);
  const int nw = wake(rng);
  for (int i = 0; i < n; ++i) (i < nw ? s.wake : s.transcript).push_back(tok(rng));

  const auto F = static_cast<std::size_t>(cfg.feat_dim);
  const auto fpt = static_cast<std::size_t>(cfg.frames_per_token);
  const std::size_t te = s.wake.size() * fpt;
  const std::size_t tc = s.transcript.size() * fpt;
  const auto clean_e = world.render(s.wake, s.target_speaker, rng);
  const auto clean_c = world.render(s.transcript, s.target_speaker, rng);
  std::uniform_int_distribution<int> phase(0, cfg.frames_per_token - 1);
  const auto itf_e = world.render({}, s.interferer_speaker, rng, te, phase(rng));
  const auto itf_c = world.render({}, s.interferer_speaker, rng, tc, phase(rng));

  const auto target = detail::concat(clean_e, clean_c);
  std::vector<double> itf = spec.overlapping_enrollment
                                ? detail::concat(itf_e, itf_c)
                                : detail::concat(std::vector<double>(te * F, 0.0), itf_c);
  const std::size_t off = spec.overlapping_enrollment ? 0 : te * F;
  const auto t_region = std::span<const double>(target).subspan(off);
  s.interferer_gain =
      gain_for_sir(t_region, std::span<const double>(itf).subspan(off), spec.sir_db);
  for (double& v : itf) v *= s.interferer_gain;
  s.achieved_sir_db = measure_sir(t_region, std::span<const double>(itf).subspan(off));

  std::vector<double> mix(target.size());
  for (std::size_t i = 0; i < mix.size(); ++i) mix[i] = target[i] + itf[i];
  if (spec.noise_enabled) {
    std::normal_distribution<double> nd(0.0, 1.0);
    std::vector<double> noise(mix.size());
    for (double& v : noise) v = nd(rng);
    s.noise_gain = gain_for_sir(mix, noise, spec.snr_db);
    for (double& v : noise) v *= s.noise_gain;
    s.achieved_snr_db = measure_snr(mix, noise);
    for (std::size_t i = 0; i < mix.size(); ++i) mix[i] += noise[i];
  }

  auto rows = [F](const std::vector<double>& v, std::size_t b, std::size_t e) {
    return Tensor::matrix(e - b, F, std::vector<double>(v.begin() + b * F, v.begin() + e * F));
  };
  s.enrollment = rows(mix, 0, te);
  s.command = rows(mix, te, te + tc);
  s.clean_enrollment = Tensor::matrix(te, F, clean_e);
  s.clean_command = Tensor::matrix(tc, F, clean_c);
  return s;
}

struct ToySetSpec {
  std::size_t count = 0;
  double sir_lo = -5.0, sir_hi = 5.0;
  double snr_lo = 0.0, snr_hi = 20.0;
  bool overlapping_enrollment = false;
  bool noise_enabled = true;
  std::uint64_t seed = kDefaultSeed;
  std::string prefix = "toy";
};

/// Sample i draws its SIR, SNR and content from fork_seed(seed, i), so
/// sets are reproducible and order-independent.
inline std::vector<ToySample> generate_toy_set(const ToyWorld& world, const ToySetSpec& set) {
  if (set.sir_lo > set.sir_hi || set.snr_lo > set.snr_hi)
    throw ConfigError("toy set: empty SIR or SNR range");
  std::vector<ToySample> out;
  out.reserve(set.count);
  for (std::size_t i = 0; i < set.count; ++i) {
    const auto seed = fork_seed(set.seed, i);
    Rng rng(fork_seed(seed, 1));
    std::uniform_real_distribution<double> sir(set.sir_lo, set.sir_hi);
    std::uniform_real_distribution<double> snr(set.snr_lo, set.snr_hi);
    ToySpec spec;
    spec.sir_db = set.sir_lo == set.sir_hi ? set.sir_lo : sir(rng);
    spec.snr_db = set.snr_lo == set.snr_hi ? set.snr_lo : snr(rng);
    spec.overlapping_enrollment = set.overlapping_enrollment;
    spec.noise_enabled = set.noise_enabled;
    spec.seed = fork_seed(seed, 2);
    out.push_back(make_toy_sample(world, spec, set.prefix + "-" + std::to_string(i)));
  }
  return out;
}

}  // namespace tsasr
