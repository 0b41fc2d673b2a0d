// tsasr/training.hpp

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

// Adam with global-norm clipping, duration-bucketed batching, resumable
// training state, donor warm start and the staged schedule.

#pragma once

#include <algorithm>
#include <bit>
#include <cmath>
#include <cstdint>
#include <fstream>
#include <functional>
#include <limits>
#include <map>
#include <numeric>
#include <optional>
#include <sstream>
#include <string>
#include <vector>

#include "tsasr/checkpoint.hpp"
#include "tsasr/error.hpp"
#include "tsasr/model.hpp"
#include "tsasr/random.hpp"
#include "tsasr/toy_corpus.hpp"
#include "tsasr/transducer.hpp"

namespace tsasr {

struct Example {
  std::string id;
  Tensor enrollment;
  std::vector<int> wake;
  Tensor command;
  std::vector<int> transcript;

  std::size_t frames() const { return enrollment.rows() + command.rows(); }
};

inline Example to_example(const ToySample& s) {
  return Example{s.id, s.enrollment, s.wake, s.command, s.transcript};
}

inline std::vector<Example> to_examples(const std::vector<ToySample>& v) {
  std::vector<Example> out;
  out.reserve(v.size());
  for (const auto& s : v) out.push_back(to_example(s));
  return out;
}

/// Negative log-likelihood of one example.
inline Tensor example_loss(const Model& m, const Example& ex) {
  const SpeakerBias bias = make_speaker_bias(m, ex.enrollment, ex.wake);
  const Tensor z = asr_encode(m, ex.command, bias);
  const Tensor lp = lattice_log_probs(m, z, ex.transcript);
  return rnnt_loss(make_lattice(lp, z.rows(), ex.transcript, m.config.blank_id));
}

// ---------------------------------------------------------------------------
// Optimizer.

struct AdamConfig {
  double lr = 0.01;
  double beta1 = 0.9;
  double beta2 = 0.98;
  double eps = 1e-9;
  double clip_norm = 5.0;
};

struct TrainState {
  Model model;
  std::map<std::string, std::vector<double>> m, v;
  std::uint64_t step = 0;
  std::uint64_t epoch = 0;
  std::uint64_t cursor = 0;  // next batch within the epoch
  std::uint64_t epoch_seed = 0;
  Rng rng{kDefaultSeed};
  std::uint64_t skip_count = 0;
  double last_grad_norm = 0.0;
  double loss_sum = 0.0;  // running statistics for the current epoch
  std::uint64_t loss_count = 0;

  static TrainState fresh(Model model, std::uint64_t seed) {
    TrainState s;
    s.model = std::move(model);
    s.rng.seed(seed);
    for (const auto& [k, p] : s.model.params) {
      s.m[k].assign(p.numel(), 0.0);
      s.v[k].assign(p.numel(), 0.0);
    }
    return s;
  }
};

/// Applies one update from the gradients accumulated on the model's
/// parameters. Returns false and counts a skip when any gradient is not
/// finite.
inline bool adam_step(TrainState& st, const AdamConfig& cfg) {
  double sq = 0.0;
  bool finite = true;
  for (auto& [k, p] : st.model.params) {
    if (!p.has_grad()) continue;
    for (double g : p.grad()) {
      if (!std::isfinite(g)) finite = false;
      sq += g * g;
    }
  }
  if (!finite) {
    ++st.skip_count;
    st.last_grad_norm = std::numeric_limits<double>::quiet_NaN();
    return false;
  }
  const double norm = std::sqrt(sq);
  st.last_grad_norm = norm;
  const double clip = norm > cfg.clip_norm ? cfg.clip_norm / norm : 1.0;
  ++st.step;
  const double bc1 = 1.0 - std::pow(cfg.beta1, static_cast<double>(st.step));
  const double bc2 = 1.0 - std::pow(cfg.beta2, static_cast<double>(st.step));
  for (auto& [k, p] : st.model.params) {
    const std::vector<double> g = p.has_grad() ? p.grad() : std::vector<double>(p.numel(), 0.0);
    auto& m = st.m[k];
    auto& v = st.v[k];
    auto w = p.mutable_data();
    for (std::size_t i = 0; i < w.size(); ++i) {
      const double gi = g[i] * clip;
      m[i] = cfg.beta1 * m[i] + (1.0 - cfg.beta1) * gi;
      v[i] = cfg.beta2 * v[i] + (1.0 - cfg.beta2) * gi * gi;
      w[i] -= cfg.lr * (m[i] / bc1) / (std::sqrt(v[i] / bc2) + cfg.eps);
    }
  }
  return true;
}

inline void clear_grads(Model& m) {
  for (auto& [k, p] : m.params) p.zero_grad();
}

// ---------------------------------------------------------------------------
// State persistence.

inline std::string rng_to_text(const Rng& r) {
  std::ostringstream os;
  os << r;
  return os.str();
}

inline Rng rng_from_text(const std::string& s) {
  Rng r;
  std::istringstream is(s);
  is >> r;
  if (!is) throw FormatError("bad generator state in training checkpoint");
  return r;
}

inline std::string double_bits(double x) { return std::to_string(std::bit_cast<std::uint64_t>(x)); }
inline double bits_double(const std::string& s) {
  return std::bit_cast<double>(static_cast<std::uint64_t>(std::stoull(s)));
}

inline Checkpoint state_checkpoint(const TrainState& st) {
  Checkpoint ck = model_checkpoint(st.model);
  for (const auto& [k, p] : st.model.params) {
    ck.put("adam.m/" + k, Tensor(p.shape(), st.m.at(k)));
    ck.put("adam.v/" + k, Tensor(p.shape(), st.v.at(k)));
  }
  ck.meta["train.step"] = std::to_string(st.step);
  ck.meta["train.epoch"] = std::to_string(st.epoch);
  ck.meta["train.cursor"] = std::to_string(st.cursor);
  ck.meta["train.epoch_seed"] = std::to_string(st.epoch_seed);
  ck.meta["train.rng"] = rng_to_text(st.rng);
  ck.meta["train.skip_count"] = std::to_string(st.skip_count);
  ck.meta["train.loss_sum"] = double_bits(st.loss_sum);
  ck.meta["train.loss_count"] = std::to_string(st.loss_count);
  ck.meta["train.last_grad_norm"] = double_bits(st.last_grad_norm);
  return ck;
}

inline TrainState state_from_checkpoint(const Checkpoint& ck) {
  TrainState st;
  st.model = model_from_checkpoint(ck);
  auto meta = [&ck](const std::string& k) {
    auto it = ck.meta.find(k);
    if (it == ck.meta.end()) throw FormatError("training checkpoint lacks '" + k + "'");
    return it->second;
  };
  for (const auto& [k, p] : st.model.params) {
    const Tensor& m = ck.at("adam.m/" + k);
    const Tensor& v = ck.at("adam.v/" + k);
    st.m[k].assign(m.data().begin(), m.data().end());
    st.v[k].assign(v.data().begin(), v.data().end());
  }
  st.step = std::stoull(meta("train.step"));
  st.epoch = std::stoull(meta("train.epoch"));
  st.cursor = std::stoull(meta("train.cursor"));
  st.epoch_seed = std::stoull(meta("train.epoch_seed"));
  st.rng = rng_from_text(meta("train.rng"));
  st.skip_count = std::stoull(meta("train.skip_count"));
  st.loss_sum = bits_double(meta("train.loss_sum"));
  st.loss_count = std::stoull(meta("train.loss_count"));
  st.last_grad_norm = bits_double(meta("train.last_grad_norm"));
  return st;
}

// ---------------------------------------------------------------------------
// Data order.

/// Validation membership by seeded hash of the sample id (about 10%).
inline bool in_validation(const std::string& id, std::uint64_t seed) {
  return splitmix64(fnv1a64(id) ^ seed) % 10 == 0;
}

/// Shuffles, stably sorts by length so equal lengths stay shuffled, packs
/// consecutive examples into batches of at most `max_frames` total frames,
/// then shuffles the batch order.
inline std::vector<std::vector<std::size_t>> make_batches(const std::vector<Example>& data,
                                                          std::size_t max_frames,
                                                          std::uint64_t seed) {
  std::vector<std::size_t> idx(data.size());
  std::iota(idx.begin(), idx.end(), 0);
  Rng rng(seed);
  std::shuffle(idx.begin(), idx.end(), rng);
  std::stable_sort(idx.begin(), idx.end(), [&data](std::size_t a, std::size_t b) {
    return data[a].frames() < data[b].frames();
  });
  std::vector<std::vector<std::size_t>> batches;
  std::vector<std::size_t> cur;
  std::size_t frames = 0;
  for (std::size_t i : idx) {
    const std::size_t f = data[i].frames();
    if (!cur.empty() && frames + f > max_frames) {
      batches.push_back(std::move(cur));
      cur.clear();
      frames = 0;
    }
    cur.push_back(i);
    frames += f;
  }
  if (!cur.empty()) batches.push_back(std::move(cur));
  std::shuffle(batches.begin(), batches.end(), rng);
  return batches;
}

/// Mean example loss over a batch; gradients accumulate on the parameters.
inline double batch_step(TrainState& st, const std::vector<Example>& data,
                         const std::vector<std::size_t>& batch, const AdamConfig& cfg) {
  clear_grads(st.model);
  double loss_value = 0.0;
  {
    Tape tape;
    std::vector<Tensor> losses;
    losses.reserve(batch.size());
    for (std::size_t i : batch) losses.push_back(example_loss(st.model, data[i]));
    Tensor total = losses[0];
    for (std::size_t i = 1; i < losses.size(); ++i) total = total + losses[i];
    Tensor loss = scale(total, 1.0 / static_cast<double>(batch.size()));
    loss_value = loss.item();
    tape.backward(loss);
  }
  if (std::isfinite(loss_value)) {
    if (adam_step(st, cfg)) {
      st.loss_sum += loss_value;
      ++st.loss_count;
    }
  } else {
    ++st.skip_count;
  }
  clear_grads(st.model);
  return loss_value;
}

inline double mean_loss(const Model& m, const std::vector<Example>& data) {
  if (data.empty()) return std::numeric_limits<double>::quiet_NaN();
  double s = 0.0;
  for (const auto& ex : data) s += example_loss(m, ex).item();
  return s / static_cast<double>(data.size());
}

struct EpochRecord {
  std::uint64_t epoch = 0;
  std::uint64_t step = 0;
  double loss = 0.0;
  double val_loss = std::numeric_limits<double>::quiet_NaN();
  double lr = 0.0;
  double grad_norm = 0.0;
  std::uint64_t skip_count = 0;

  std::string to_json() const {
    auto num = [](double x) {
      if (!std::isfinite(x)) return std::string("null");
      char b[40];
      std::snprintf(b, sizeof b, "%.10g", x);
      return std::string(b);
    };
    return "{\"epoch\":" + std::to_string(epoch) + ",\"step\":" + std::to_string(step) +
           ",\"loss\":" + num(loss) + ",\"val_loss\":" + num(val_loss) + ",\"lr\":" + num(lr) +
           ",\"grad_norm\":" + num(grad_norm) + ",\"skip_count\":" + std::to_string(skip_count) +
           "}";
  }
};

/// Steps through epochs of shuffled batches; the whole position lives in
/// TrainState so a saved state continues exactly where it stopped.
class Trainer {
 public:
  Trainer(std::vector<Example> data, std::size_t max_batch_frames, AdamConfig cfg)
      : data_(std::move(data)), max_frames_(max_batch_frames), cfg_(cfg) {
    if (data_.empty()) throw ConfigError("training set is empty");
  }

  /// Runs one optimizer step. Returns true when it finished an epoch.
  bool step(TrainState& st) {
    ensure_batches(st);
    batch_step(st, data_, batches_[st.cursor], cfg_);
    ++st.cursor;
    if (st.cursor == batches_.size()) {
      st.cursor = 0;
      ++st.epoch;
      st.epoch_seed = 0;
      return true;
    }
    return false;
  }

  double run_epoch(TrainState& st) {
    st.loss_sum = 0.0;
    st.loss_count = 0;
    while (!step(st)) {
    }
    return st.loss_count ? st.loss_sum / static_cast<double>(st.loss_count)
                         : std::numeric_limits<double>::quiet_NaN();
  }

  const std::vector<Example>& data() const { return data_; }
  const AdamConfig& config() const { return cfg_; }

 private:
  void ensure_batches(TrainState& st) {
    if (st.epoch_seed == 0) st.epoch_seed = st.rng() | 1;
    if (!started_ || batches_seed_ != st.epoch_seed) {
      batches_ = make_batches(data_, max_frames_, st.epoch_seed);
      batches_seed_ = st.epoch_seed;
      started_ = true;
    }
  }

  std::vector<Example> data_;
  std::size_t max_frames_;
  AdamConfig cfg_;
  std::vector<std::vector<std::size_t>> batches_;
  std::uint64_t batches_seed_ = 0;
  bool started_ = false;
};

// ---------------------------------------------------------------------------
// Warm start.

enum class Origin { kDonorStreaming, kDonorOffline, kFresh };

inline std::string to_string(Origin o) {
  switch (o) {
    case Origin::kDonorStreaming: return "donor-streaming";
    case Origin::kDonorOffline: return "donor-offline";
    case Origin::kFresh: return "fresh";
  }
  return "?";
}

struct WarmStartResult {
  Model model;
  std::map<std::string, Origin> origin;        // every target parameter
  std::map<std::string, std::string> source;   // donor parameter name
};

/// Donor assignment for a target parameter and the donor-side name.
inline std::pair<Origin, std::string> warm_start_rule(const std::string& name) {
  auto starts = [&name](const char* p) { return name.rfind(p, 0) == 0; };
  if (starts("asr.fuse.att.") || starts("txt_att.")) return {Origin::kFresh, ""};
  if (starts("asr.") || starts("pred.") || starts("joint.")) return {Origin::kDonorStreaming, name};
  if (starts("enroll.")) return {Origin::kDonorOffline, name};
  if (starts("txt.")) return {Origin::kDonorOffline, "pred." + name.substr(4)};
  return {Origin::kFresh, ""};
}

/// ASR encoder, prediction and joint networks from the streaming donor;
/// enrollment encoder from the offline donor, whose prediction network also
/// seeds the text decoder; attention units keep their fresh initialization.
inline WarmStartResult warm_start(const ModelConfig& target, const Model& streaming,
                                  const Model& offline, std::uint64_t seed) {
  WarmStartResult r;
  r.model = init_model(target, seed);
  for (auto& [name, p] : r.model.params) {
    auto [origin, src] = warm_start_rule(name);
    r.origin[name] = origin;
    if (origin == Origin::kFresh) continue;
    const Model& donor = origin == Origin::kDonorStreaming ? streaming : offline;
    auto it = donor.params.find(src);
    if (it == donor.params.end())
      throw ConfigError("warm start: " + to_string(origin) + " checkpoint has no parameter '" +
                        src + "' (needed for '" + name + "')");
    if (it->second.shape() != p.shape())
      throw ContractError("warm start: parameter '" + name + "' has shape " +
                          shape_str(p.shape()) + " but donor '" + src + "' has " +
                          shape_str(it->second.shape()));
    std::copy(it->second.data().begin(), it->second.data().end(), p.mutable_data().begin());
    r.source[name] = src;
  }
  return r;
}

// ---------------------------------------------------------------------------
// Stages.

enum class Stage { kPretrain, kMain, kFinetune };

inline std::string to_string(Stage s) {
  switch (s) {
    case Stage::kPretrain: return "pretrain";
    case Stage::kMain: return "main";
    case Stage::kFinetune: return "finetune";
  }
  return "?";
}

inline Stage parse_stage(const std::string& s) {
  if (s == "pretrain") return Stage::kPretrain;
  if (s == "main") return Stage::kMain;
  if (s == "finetune") return Stage::kFinetune;
  throw ConfigError("unknown stage '" + s + "' (expected pretrain, main or finetune)");
}

inline constexpr double kToyEpochScale = 0.2;

struct StageConfig {
  Stage stage = Stage::kMain;
  double learning_rate = 0.01;
  double max_batch_seconds = 900.0;
  int epochs = 150;
  std::uint64_t seed = kDefaultSeed;
  bool toy = false;

  /// Defaults per stage; toy mode scales epochs and reads the batch budget
  /// as a frame count.
  static StageConfig defaults(Stage s, bool toy) {
    StageConfig c;
    c.stage = s;
    c.toy = toy;
    if (s == Stage::kFinetune) {
      c.learning_rate = 0.005;
      c.max_batch_seconds = 1200.0;
      c.epochs = 200;
    }
    if (toy) c.epochs = std::max(1, static_cast<int>(std::lround(c.epochs * kToyEpochScale)));
    return c;
  }

  std::size_t max_batch_frames() const {
    // 10 ms frames outside toy mode.
    return toy ? static_cast<std::size_t>(max_batch_seconds)
               : static_cast<std::size_t>(max_batch_seconds * 100.0);
  }

  void validate() const {
    if (!(learning_rate > 0.0)) throw ConfigError("learning_rate must be positive");
    if (epochs < 1) throw ConfigError("epochs must be at least 1");
    if (!(max_batch_seconds > 0.0)) throw ConfigError("max_batch_seconds must be positive");
  }
};

struct StageResult {
  Model best;
  TrainState final_state;
  std::vector<EpochRecord> log;
  double best_val_loss = std::numeric_limits<double>::infinity();
  double initial_loss = 0.0;
};

/// Trains for `epochs`, keeping the parameters with the lowest validation
/// loss (training loss when the validation split is empty).
inline StageResult run_stage(const StageConfig& cfg, Model init, const std::vector<Example>& all,
                             const std::function<void(const EpochRecord&)>& on_epoch = {}) {
  cfg.validate();
  if (all.empty()) throw ConfigError("run_stage: empty manifest");
  std::vector<Example> train, val;
  for (const auto& ex : all) (in_validation(ex.id, cfg.seed) ? val : train).push_back(ex);
  if (train.empty()) std::swap(train, val);

  AdamConfig adam;
  adam.lr = cfg.learning_rate;
  Trainer trainer(train, cfg.max_batch_frames(), adam);
  StageResult r;
  r.final_state = TrainState::fresh(std::move(init), cfg.seed);
  r.initial_loss = mean_loss(r.final_state.model, train);
  r.best = r.final_state.model;
  r.best.params.clear();
  for (int e = 0; e < cfg.epochs; ++e) {
    EpochRecord rec;
    rec.loss = trainer.run_epoch(r.final_state);
    rec.epoch = r.final_state.epoch;
    rec.step = r.final_state.step;
    rec.lr = cfg.learning_rate;
    rec.grad_norm = r.final_state.last_grad_norm;
    rec.skip_count = r.final_state.skip_count;
    rec.val_loss = val.empty() ? rec.loss : mean_loss(r.final_state.model, val);
    if (rec.val_loss < r.best_val_loss || r.best.params.empty()) {
      r.best_val_loss = rec.val_loss;
      r.best.config = r.final_state.model.config;
      r.best.params.clear();
      for (const auto& [k, p] : r.final_state.model.params) r.best.params.emplace(k, p.clone_param());
    }
    r.log.push_back(rec);
    if (on_epoch) on_epoch(rec);
  }
  return r;
}

}  // namespace tsasr
