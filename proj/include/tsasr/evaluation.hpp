// tsasr/evaluation.hpp

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

// Token error rate and the SIR sweep over enrollment conditions.

#pragma once

#include <algorithm>
#include <bit>
#include <cmath>
#include <cstdint>
#include <cstdio>
#include <functional>
#include <map>
#include <memory>
#include <string>
#include <string_view>
#include <thread>
#include <tuple>
#include <vector>

#include "tsasr/checkpoint.hpp"
#include "tsasr/error.hpp"
#include "tsasr/model.hpp"
#include "tsasr/random.hpp"
#include "tsasr/toy_corpus.hpp"
#include "tsasr/transducer.hpp"

namespace tsasr {

enum class EditOp : char { kMatch = 'M', kSub = 'S', kIns = 'I', kDel = 'D' };

struct AlignmentResult {
  std::vector<EditOp> ops;
  std::size_t matches = 0, substitutions = 0, insertions = 0, deletions = 0;

  std::size_t errors() const { return substitutions + insertions + deletions; }
};

/// Minimum edit distance alignment with unit costs. Among minimal
/// alignments the one with most matches wins, then most substitutions.
inline AlignmentResult align(const std::vector<int>& ref, const std::vector<int>& hyp) {
  const std::size_t n = ref.size(), m = hyp.size();
  // Cost (errors, -matches, -substitutions), compared lexicographically.
  using Cost = std::tuple<std::size_t, long, long>;
  std::vector<Cost> dp((n + 1) * (m + 1));
  std::vector<EditOp> from((n + 1) * (m + 1), EditOp::kMatch);
  auto at = [m](std::size_t i, std::size_t j) { return i * (m + 1) + j; };
  dp[at(0, 0)] = {0, 0, 0};
  for (std::size_t i = 1; i <= n; ++i) {
    dp[at(i, 0)] = {i, 0, 0};
    from[at(i, 0)] = EditOp::kDel;
  }
  for (std::size_t j = 1; j <= m; ++j) {
    dp[at(0, j)] = {j, 0, 0};
    from[at(0, j)] = EditOp::kIns;
  }
  for (std::size_t i = 1; i <= n; ++i)
    for (std::size_t j = 1; j <= m; ++j) {
      const auto& [de, dm, ds] = dp[at(i - 1, j - 1)];
      Cost best;
      EditOp op;
      if (ref[i - 1] == hyp[j - 1]) {
        best = {de, dm - 1, ds};
        op = EditOp::kMatch;
      } else {
        best = {de + 1, dm, ds - 1};
        op = EditOp::kSub;
      }
      const auto& [ue, um, us] = dp[at(i - 1, j)];
      if (Cost c{ue + 1, um, us}; c < best) {
        best = c;
        op = EditOp::kDel;
      }
      const auto& [le, lm, ls] = dp[at(i, j - 1)];
      if (Cost c{le + 1, lm, ls}; c < best) {
        best = c;
        op = EditOp::kIns;
      }
      dp[at(i, j)] = best;
      from[at(i, j)] = op;
    }
  AlignmentResult r;
  std::size_t i = n, j = m;
  while (i > 0 || j > 0) {
    const EditOp op = from[at(i, j)];
    r.ops.push_back(op);
    switch (op) {
      case EditOp::kMatch: ++r.matches; --i; --j; break;
      case EditOp::kSub: ++r.substitutions; --i; --j; break;
      case EditOp::kDel: ++r.deletions; --i; break;
      case EditOp::kIns: ++r.insertions; --j; break;
    }
  }
  std::reverse(r.ops.begin(), r.ops.end());
  return r;
}

struct WerResult {
  double rate = 0.0;
  std::size_t substitutions = 0, insertions = 0, deletions = 0;
  std::size_t reference_tokens = 0;
  std::size_t utterances = 0;

  std::size_t errors() const { return substitutions + insertions + deletions; }

  void add(const AlignmentResult& a, std::size_t ref_len) {
    substitutions += a.substitutions;
    insertions += a.insertions;
    deletions += a.deletions;
    reference_tokens += ref_len;
    ++utterances;
    rate = reference_tokens ? static_cast<double>(errors()) / reference_tokens : 0.0;
  }
};

/// Corpus-level error rate: total edits over total reference tokens.
inline WerResult wer(const std::vector<std::vector<int>>& refs,
                     const std::vector<std::vector<int>>& hyps) {
  if (refs.size() != hyps.size())
    throw ContractError("wer: " + std::to_string(refs.size()) + " references vs " +
                        std::to_string(hyps.size()) + " hypotheses");
  WerResult r;
  for (std::size_t i = 0; i < refs.size(); ++i) r.add(align(refs[i], hyps[i]), refs[i].size());
  if (r.reference_tokens == 0) throw DegenerateInputError("wer: all references are empty");
  return r;
}

// ---------------------------------------------------------------------------
// Sweep.

/// Produces a hypothesis for one test sample.
class UtteranceDecoder {
 public:
  virtual ~UtteranceDecoder() = default;
  virtual std::vector<int> decode(const ToySample& sample) const = 0;
  virtual std::string name() const = 0;
  virtual std::uint64_t fingerprint() const { return 0; }
};

/// Streaming greedy decoding with a trained model.
class ModelDecoder : public UtteranceDecoder {
 public:
  ModelDecoder(Model model, std::string name, int max_symbols_per_frame = 4)
      : model_(std::move(model)), name_(std::move(name)), max_symbols_(max_symbols_per_frame) {
    fingerprint_ = fnv1a64(serialize_checkpoint(model_checkpoint(model_)));
  }

  std::vector<int> decode(const ToySample& s) const override {
    const SpeakerBias bias = make_speaker_bias(model_, s.enrollment, s.wake);
    return decode_streaming(model_, bias, s.command, max_symbols_).tokens;
  }
  std::string name() const override { return name_; }
  std::uint64_t fingerprint() const override { return fingerprint_; }
  const Model& model() const { return model_; }

 private:
  Model model_;
  std::string name_;
  int max_symbols_;
  std::uint64_t fingerprint_ = 0;
};

struct SweepConfig {
  std::vector<double> sirs = {5, 4, 3, 2, 1, 0, -1, -2, -3, -4, -5};
  std::vector<bool> overlaps = {false, true};
  std::size_t per_cell = 100;
  double snr_lo = 0.0, snr_hi = 20.0;
  std::uint64_t seed = kDefaultSeed;
  unsigned jobs = 1;
};

inline std::vector<double> parse_grid(const std::string& spec) {
  // lo:hi[:step], listed from high to low
  double lo = 0, hi = 0, step = 1;
  const int n = std::sscanf(spec.c_str(), "%lf:%lf:%lf", &lo, &hi, &step);
  if (n < 2 || !(step > 0) || lo > hi) throw ConfigError("bad grid '" + spec + "', expected lo:hi[:step]");
  std::vector<double> out;
  const auto count = static_cast<long>(std::floor((hi - lo) / step + 1e-9));
  for (long i = 0; i <= count; ++i) out.push_back(hi - static_cast<double>(i) * step);
  return out;
}

struct CellKey {
  std::string variant;
  bool overlap = false;
  double sir_db = 0.0;
  auto operator<=>(const CellKey&) const = default;
};

struct CellResult {
  WerResult wer;
  std::uint64_t set_seed = 0;
};

struct EvalReport {
  std::vector<std::string> variants;
  SweepConfig config;
  std::map<CellKey, CellResult> cells;
  std::map<std::string, std::uint64_t> checkpoint_hash;
  std::uint64_t manifest_hash = 0;

  const CellResult& at(const std::string& v, bool overlap, double sir) const {
    auto it = cells.find(CellKey{v, overlap, sir});
    if (it == cells.end())
      throw ContractError("report has no cell (" + v + ", " + (overlap ? "on" : "off") + ", " +
                          std::to_string(sir) + ")");
    return it->second;
  }

  bool complete() const {
    for (const auto& v : variants)
      for (bool o : config.overlaps)
        for (double s : config.sirs)
          if (!cells.count(CellKey{v, o, s})) return false;
    return true;
  }

  /// Rows are (model, overlapping enrollment), columns SIR in dB.
  std::string table() const {
    std::string out;
    char buf[64];
    std::snprintf(buf, sizeof buf, "%-12s %-8s", "Model", "Overlap");
    out += buf;
    for (double s : config.sirs) {
      std::snprintf(buf, sizeof buf, " %7g", s);
      out += buf;
    }
    out += "\n";
    for (const auto& v : variants)
      for (bool o : config.overlaps) {
        std::snprintf(buf, sizeof buf, "%-12s %-8s", v.c_str(), o ? "Yes" : "No");
        out += buf;
        for (double s : config.sirs) {
          std::snprintf(buf, sizeof buf, " %7.2f", 100.0 * at(v, o, s).wer.rate);
          out += buf;
        }
        out += "\n";
      }
    return out;
  }

  std::string jsonl() const {
    std::string out;
    char buf[512];
    for (const auto& [k, c] : cells) {
      auto hash_it = checkpoint_hash.find(k.variant);
      std::snprintf(buf, sizeof buf,
                    "{\"variant\":\"%s\",\"overlapping_enrollment\":%s,\"sir_db\":%g,"
                    "\"wer\":%.17g,\"substitutions\":%zu,\"insertions\":%zu,\"deletions\":%zu,"
                    "\"reference_tokens\":%zu,\"samples\":%zu,\"set_seed\":%llu,"
                    "\"checkpoint_hash\":\"%016llx\",\"manifest_hash\":\"%016llx\","
                    "\"seed\":%llu}\n",
                    k.variant.c_str(), k.overlap ? "true" : "false", k.sir_db, c.wer.rate,
                    c.wer.substitutions, c.wer.insertions, c.wer.deletions,
                    c.wer.reference_tokens, c.wer.utterances,
                    static_cast<unsigned long long>(c.set_seed),
                    static_cast<unsigned long long>(
                        hash_it == checkpoint_hash.end() ? 0 : hash_it->second),
                    static_cast<unsigned long long>(manifest_hash),
                    static_cast<unsigned long long>(config.seed));
      out += buf;
    }
    return out;
  }
};

/// Seed of the test set for SIR column `index`; both enrollment conditions
/// share it so they differ only in what overlaps the enrollment.
inline std::uint64_t cell_seed(std::uint64_t seed, double sir_db) {
  return fork_seed(seed, std::bit_cast<std::uint64_t>(sir_db));
}

inline std::vector<ToySample> cell_test_set(const ToyWorld& world, const SweepConfig& cfg,
                                            double sir_db, bool overlap) {
  ToySetSpec set;
  set.count = cfg.per_cell;
  set.sir_lo = set.sir_hi = sir_db;
  set.snr_lo = cfg.snr_lo;
  set.snr_hi = cfg.snr_hi;
  set.overlapping_enrollment = overlap;
  set.seed = cell_seed(cfg.seed, sir_db);
  set.prefix = "test";
  return generate_toy_set(world, set);
}

/// Decodes every cell of the grid with every decoder. All decoders see the
/// same samples in a given cell.
inline EvalReport sir_sweep(const std::vector<const UtteranceDecoder*>& decoders,
                            const ToyWorld& world, const SweepConfig& cfg) {
  if (decoders.empty()) throw ConfigError("sir_sweep: no models to evaluate");
  EvalReport rep;
  rep.config = cfg;
  for (const auto* d : decoders) {
    rep.variants.push_back(d->name());
    rep.checkpoint_hash[d->name()] = d->fingerprint();
  }
  struct Job {
    bool overlap;
    double sir;
  };
  std::vector<Job> jobs;
  for (bool o : cfg.overlaps)
    for (double s : cfg.sirs) jobs.push_back({o, s});

  std::vector<std::map<CellKey, CellResult>> partial(jobs.size());
  std::vector<std::uint64_t> set_hashes(jobs.size());
  auto run = [&](std::size_t j) {
    const auto set = cell_test_set(world, cfg, jobs[j].sir, jobs[j].overlap);
    std::uint64_t h = 0xcbf29ce484222325ULL;
    for (const auto& s : set) {
      h = fnv1a64(s.id, h);
      for (double v : s.command.data())
        h = fnv1a64(std::string_view(reinterpret_cast<const char*>(&v), sizeof v), h);
    }
    set_hashes[j] = h;
    for (const auto* d : decoders) {
      CellResult c;
      c.set_seed = cell_seed(cfg.seed, jobs[j].sir);
      for (const auto& s : set) c.wer.add(align(s.transcript, d->decode(s)), s.transcript.size());
      partial[j][CellKey{d->name(), jobs[j].overlap, jobs[j].sir}] = c;
    }
  };
  const unsigned workers = std::max(1u, std::min<unsigned>(cfg.jobs, jobs.size()));
  if (workers == 1) {
    for (std::size_t j = 0; j < jobs.size(); ++j) run(j);
  } else {
    std::vector<std::thread> pool;
    for (unsigned w = 0; w < workers; ++w)
      pool.emplace_back([&, w] {
        for (std::size_t j = w; j < jobs.size(); j += workers) run(j);
      });
    for (auto& t : pool) t.join();
  }
  std::uint64_t mh = 0xcbf29ce484222325ULL;
  for (std::size_t j = 0; j < jobs.size(); ++j) {
    rep.cells.insert(partial[j].begin(), partial[j].end());
    mh = fnv1a64(std::string_view(reinterpret_cast<const char*>(&set_hashes[j]), 8), mh);
  }
  rep.manifest_hash = mh;
  return rep;
}

}  // namespace tsasr
