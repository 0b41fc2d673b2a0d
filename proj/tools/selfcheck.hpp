// tsasr/tools/selfcheck.hpp

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

#pragma once

#include <chrono>
#include <cmath>
#include <functional>
#include <optional>
#include <ostream>
#include <random>
#include <string>
#include <vector>

#include "tsasr/checkpoint.hpp"
#include "tsasr/evaluation.hpp"
#include "tsasr/mixture.hpp"
#include "tsasr/model.hpp"
#include "tsasr/random.hpp"
#include "tsasr/tensor.hpp"
#include "tsasr/training.hpp"
#include "tsasr/transducer.hpp"

namespace tsasr::cli {

namespace check {

inline ModelConfig tiny(Variant v) {
  ModelConfig c;
  c.variant = v;
  c.feat_dim = 6;
  c.d_model = 8;
  c.attention_heads = 2;
  c.encoder_heads = 2;
  c.encoder_layers = 2;
  c.enroll_layers = 1;
  c.vocab_size = 5;
  c.causal_context = 3;
  return c;
}

inline Model randomized(const ModelConfig& c, std::uint64_t seed) {
  Model m = init_model(c, seed);
  Rng rng(fork_seed(seed, 1));
  std::uniform_real_distribution<double> u(-0.3, 0.3);
  for (auto& [name, t] : m.params)
    if (name.find(".o.") != std::string::npos)
      for (auto& v : t.mutable_data()) v = u(rng);
  return m;
}

inline Example example(Rng& rng, int vocab) {
  std::uniform_int_distribution<int> tok(1, vocab - 1);
  Example ex;
  ex.id = "check";
  ex.enrollment = random_uniform({4, 6}, -1.0, 1.0, rng);
  ex.command = random_uniform({5, 6}, -1.0, 1.0, rng);
  ex.wake = {tok(rng)};
  ex.transcript = {tok(rng), tok(rng)};
  return ex;
}

inline std::string tensor_grads() {
  Rng rng(11);
  Tensor x = random_uniform({3, 4}, -1.0, 1.0, rng, true);
  Tensor w = random_uniform({4, 5}, -1.0, 1.0, rng, true);
  Tensor g = random_uniform({5}, 0.5, 1.5, rng, true);
  Tensor b = random_uniform({5}, -0.5, 0.5, rng, true);
  const Tensor probe = random_uniform({3, 5}, -1.0, 1.0, rng);
  std::vector<Tensor> ps{x, w, g, b};
  const double err = grad_check(
      [&] { return sum(log_softmax_rows(layer_norm(tanh(matmul(x, w)), g, b)) * probe); }, ps,
      1e-5);
  return err <= 1e-4 ? "" : "relative error " + std::to_string(err);
}

inline std::string model_grads() {
  for (Variant v : {Variant::kBaseline, Variant::kAttentive, Variant::kRobust}) {
    Rng rng(12);
    Model m = randomized(tiny(v), 3);
    const Example ex = example(rng, 5);
    std::vector<Tensor> ps = m.parameter_list();
    const double err = grad_check([&] { return example_loss(m, ex); }, ps, 1e-5);
    if (!(err <= 1e-4)) return to_string(v) + ": relative error " + std::to_string(err);
  }
  return "";
}

inline std::string loss_oracle() {
  Rng rng(13);
  for (int i = 0; i < 50; ++i) {
    std::uniform_int_distribution<std::size_t> tt(1, 4), uu(0, 3), vv(2, 4);
    const std::size_t t = tt(rng), u = uu(rng), v = vv(rng);
    std::uniform_int_distribution<int> tok(1, static_cast<int>(v) - 1);
    std::vector<int> y(u);
    for (auto& k : y) k = tok(rng);
    const Lattice lat = make_lattice(
        log_softmax_rows(random_uniform({t * (u + 1), v}, -3.0, 3.0, rng)).detach(), t, y, 0);
    const double d = std::abs(rnnt_loss(lat).item() - rnnt_loss_bruteforce(lat).loss);
    if (!(d <= 1e-10)) return "lattice " + std::to_string(i) + " differs by " + std::to_string(d);
  }
  return "";
}

inline Utterance tone_utterance(Rng& rng, const std::string& id) {
  Utterance u;
  u.id = id;
  std::uniform_real_distribution<double> f(200.0, 2000.0);
  double t = 0.0;
  for (int k = 0; k < 6; ++k) {
    const double len = 0.4, freq = f(rng);
    for (int i = 0; i < static_cast<int>(len * kCanonicalSampleRate); ++i)
      u.audio.samples.push_back(0.3 * std::sin(2.0 * std::numbers::pi * freq * i / kCanonicalSampleRate));
    u.words.push_back(WordSpan{t, t + len, k + 1});
    t += len;
  }
  return u;
}

inline std::string mixture_ratios() {
  Rng rng(14);
  WaveCorpus c;
  for (const char* id : {"a-1", "b-1"}) c.utterances.emplace(id, tone_utterance(rng, id));
  Waveform noise;
  std::normal_distribution<double> nd(0.0, 0.1);
  for (int i = 0; i < kCanonicalSampleRate; ++i) noise.samples.push_back(nd(rng));
  c.noises.emplace("n", noise);
  c.rir_sets["synthetic"] = {};
  std::uniform_real_distribution<double> sir(-5.0, 5.0), snr(0.0, 20.0);
  for (int i = 0; i < 20; ++i) {
    MixtureSpec s;
    s.target_utterance_id = "a-1";
    s.interferer_utterance_id = "b-1";
    s.noise_id = "n";
    s.rir_set_id = "synthetic";
    s.sir_db = sir(rng);
    s.snr_db = snr(rng);
    s.overlapping_enrollment = i % 2 == 0;
    s.rng_seed = fork_seed(14, i);
    const MixedSample m = synthesize(s, c);
    if (std::abs(m.achieved_sir_db - s.sir_db) > 1e-6 || std::abs(m.achieved_snr_db - s.snr_db) > 1e-6)
      return "spec " + std::to_string(i) + " missed its SIR or SNR";
  }
  return "";
}

inline std::size_t edit_errors(const std::vector<int>& r, const std::vector<int>& h, std::size_t i,
                               std::size_t j) {
  if (i == r.size()) return h.size() - j;
  if (j == h.size()) return r.size() - i;
  return std::min({edit_errors(r, h, i + 1, j + 1) + (r[i] != h[j]),
                   edit_errors(r, h, i + 1, j) + 1, edit_errors(r, h, i, j + 1) + 1});
}

inline std::string wer_oracle() {
  std::vector<std::vector<int>> seqs{{}};
  for (std::size_t k = 0; k < seqs.size(); ++k)
    if (seqs[k].size() < 4)
      for (int a = 0; a < 3; ++a) {
        auto s = seqs[k];
        s.push_back(a);
        seqs.push_back(std::move(s));
      }
  for (const auto& r : seqs)
    for (const auto& h : seqs)
      if (align(r, h).errors() != edit_errors(r, h, 0, 0)) return "alignment disagrees with brute force";
  return "";
}

inline std::string streaming_equivalence() {
  for (Variant v : {Variant::kBaseline, Variant::kAttentive, Variant::kRobust}) {
    for (std::uint64_t s = 0; s < 5; ++s) {
      Rng rng(fork_seed(15, s));
      const Model m = randomized(tiny(v), s);
      const Example ex = example(rng, 5);
      const SpeakerBias bias = make_speaker_bias(m, ex.enrollment, ex.wake);
      if (!(decode_streaming(m, bias, ex.command) == decode_batch(m, bias, ex.command)))
        return to_string(v) + " model " + std::to_string(s) + " decodes differently";
    }
  }
  return "";
}

inline std::string checkpoint_round_trip() {
  const Model m = randomized(tiny(Variant::kRobust), 16);
  const Model back = model_from_checkpoint(parse_checkpoint(serialize_checkpoint(model_checkpoint(m))));
  for (const auto& [k, t] : m.params)
    if (!bit_equal(t, back.p(k))) return "parameter '" + k + "' changed";
  return "";
}

}  // namespace check

/// Prints one line per check and returns true when all pass.
inline bool selfcheck(std::ostream& os, const std::optional<std::string>& extra_checkpoint) {
  std::vector<std::pair<std::string, std::function<std::string()>>> checks{
      {"tensor gradients", check::tensor_grads},
      {"model gradients through the transducer loss", check::model_grads},
      {"transducer loss matches path enumeration", check::loss_oracle},
      {"mixtures hit requested SIR and SNR", check::mixture_ratios},
      {"WER matches exhaustive alignment", check::wer_oracle},
      {"streaming decode equals batch decode", check::streaming_equivalence},
      {"checkpoint round trip", check::checkpoint_round_trip}};
  if (extra_checkpoint)
    checks.emplace_back("checkpoint " + *extra_checkpoint, [path = *extra_checkpoint] {
      model_from_checkpoint(load_checkpoint(path));
      return std::string();
    });
  std::size_t passed = 0;
  for (const auto& [name, fn] : checks) {
    const auto t0 = std::chrono::steady_clock::now();
    std::string failure;
    try {
      failure = fn();
    } catch (const IntegrityError& e) {
      failure = std::string("integrity failure: ") + e.what();
    } catch (const std::exception& e) {
      failure = e.what();
    }
    const double ms =
        std::chrono::duration<double, std::milli>(std::chrono::steady_clock::now() - t0).count();
    if (failure.empty()) {
      ++passed;
      os << "PASS " << name << " (" << static_cast<long>(ms) << " ms)\n";
    } else {
      os << "FAIL " << name << ": " << failure << "\n";
    }
  }
  os << "selfcheck: " << passed << "/" << checks.size() << " passed\n";
  return passed == checks.size();
}

}  // namespace tsasr::cli
