// tsasr/toy_pipeline.hpp

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

// The staged schedule on the synthetic corpus: two donors, then per
// variant a warm-started main stage and an overlapping-enrollment finetune.

#pragma once

#include <chrono>
#include <functional>
#include <map>
#include <string>
#include <vector>

#include "tsasr/config.hpp"
#include "tsasr/model.hpp"
#include "tsasr/random.hpp"
#include "tsasr/toy_corpus.hpp"
#include "tsasr/training.hpp"

namespace tsasr {

struct ToyPipelineConfig {
  ToyConfig toy;
  ModelConfig model;  // variant is set per run
  std::size_t train_samples = 1500;
  std::uint64_t seed = kDefaultSeed;
  StageConfig pretrain = StageConfig::defaults(Stage::kMain, true);
  StageConfig main = StageConfig::defaults(Stage::kMain, true);
  StageConfig finetune = StageConfig::defaults(Stage::kFinetune, true);
  std::vector<Variant> variants = {Variant::kBaseline, Variant::kAttentive, Variant::kRobust};

  ToyPipelineConfig() {
    model.d_model = 32;
    model.attention_heads = 8;
    model.encoder_heads = 2;
    model.feat_dim = toy.feat_dim;
    model.vocab_size = toy.vocab_size;
    pretrain.stage = Stage::kPretrain;
  }

  static ToyPipelineConfig from(const KeyValues& kv) {
    ToyPipelineConfig c;
    c.toy = ToyConfig::from(kv);
    KeyValues m = c.model.to_keyvalues();
    for (const auto& [k, v] : kv.items())
      if (k.rfind("model.", 0) == 0) m.set(k.substr(6), v);
    m.set("feat_dim", std::to_string(c.toy.feat_dim));
    m.set("vocab_size", std::to_string(c.toy.vocab_size));
    c.model = ModelConfig::from(m, "");
    c.train_samples = kv.get_as<std::size_t>("train.samples", c.train_samples);
    c.seed = kv.get_as("seed", c.seed);
    for (auto* st : {&c.pretrain, &c.main, &c.finetune}) {
      const std::string p = "train." + to_string(st->stage) + ".";
      st->learning_rate = kv.get_as(p + "lr", st->learning_rate);
      st->max_batch_seconds = kv.get_as(p + "max_batch_seconds", st->max_batch_seconds);
      st->epochs = kv.get_as(p + "epochs", st->epochs);
      st->validate();
    }
    return c;
  }
};

struct ToyPipelineResult {
  Model streaming_donor;
  Model offline_donor;
  std::map<Variant, Model> models;
  std::map<std::string, std::vector<EpochRecord>> logs;  // "<run>/<stage>"
  std::map<std::string, double> seconds;
};

/// Training sets for the overlap-off and overlap-on stages.
inline std::vector<Example> toy_training_set(const ToyWorld& world, const ToyPipelineConfig& c,
                                             bool overlap) {
  ToySetSpec s;
  s.count = c.train_samples;
  s.overlapping_enrollment = overlap;
  s.seed = fork_seed(c.seed, overlap ? 2 : 1);
  s.prefix = overlap ? "train-on" : "train-off";
  return to_examples(generate_toy_set(world, s));
}

using ProgressFn = std::function<void(const std::string& run, const EpochRecord&)>;

inline ToyPipelineResult run_toy_pipeline(const ToyPipelineConfig& c,
                                          const ProgressFn& progress = {}) {
  const ToyWorld world(c.toy);
  const auto off = toy_training_set(world, c, false);
  const auto on = toy_training_set(world, c, true);
  ToyPipelineResult r;
  auto timed = [&](const std::string& run, const StageConfig& st, Model init,
                   const std::vector<Example>& data) {
    const auto t0 = std::chrono::steady_clock::now();
    StageResult sr = run_stage(st, std::move(init), data, [&](const EpochRecord& e) {
      if (progress) progress(run, e);
    });
    r.seconds[run] = std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
    r.logs[run] = sr.log;
    return std::move(sr.best);
  };

  ModelConfig donor = c.model;
  donor.variant = Variant::kBaseline;
  donor.causal_encoder = true;
  r.streaming_donor = timed("donor-streaming/pretrain", c.pretrain,
                            init_model(donor, fork_seed(c.seed, 10)), off);
  donor.causal_encoder = false;
  r.offline_donor = timed("donor-offline/pretrain", c.pretrain,
                          init_model(donor, fork_seed(c.seed, 11)), off);

  for (Variant v : c.variants) {
    ModelConfig mc = c.model;
    mc.variant = v;
    mc.causal_encoder = true;
    const std::string name = to_string(v);
    Model init = warm_start(mc, r.streaming_donor, r.offline_donor,
                            fork_seed(c.seed, 20 + static_cast<int>(v))).model;
    StageConfig main = c.main, fine = c.finetune;
    main.seed = fork_seed(c.seed, 30 + static_cast<int>(v));
    fine.seed = fork_seed(c.seed, 40 + static_cast<int>(v));
    Model after_main = timed(name + "/main", main, std::move(init), off);
    r.models[v] = timed(name + "/finetune", fine, std::move(after_main), on);
  }
  return r;
}

}  // namespace tsasr
