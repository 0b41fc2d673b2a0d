// tsasr/tools/tsasr.cpp

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

#include <algorithm>
#include <atomic>
#include <cctype>
#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <optional>
#include <sstream>
#include <string>
#include <thread>
#include <vector>

#include <CLI11.hpp>
#include <nlohmann/json.hpp>

#include "dataset_io.hpp"
#include "selfcheck.hpp"
#include "tsasr/checkpoint.hpp"
#include "tsasr/config.hpp"
#include "tsasr/error.hpp"
#include "tsasr/evaluation.hpp"
#include "tsasr/mixture.hpp"
#include "tsasr/model.hpp"
#include "tsasr/random.hpp"
#include "tsasr/toy_pipeline.hpp"
#include "tsasr/training.hpp"
#include "tsasr/transducer.hpp"

extern char** environ;

namespace tsasr::cli {
namespace {

constexpr const char* kEnvPrefix = "TSASR_";

struct Global {
  std::string config;
  std::optional<std::uint64_t> seed;
  std::optional<unsigned> jobs;
  std::vector<std::string> sets;
  int verbosity = 0;
  bool toy = false;
  bool f64_check = false;
};

/// TSASR_MODEL__D_MODEL=64 sets model.d_model.
std::optional<std::string> env_key(std::string_view name) {
  if (name.rfind(kEnvPrefix, 0) != 0) return std::nullopt;
  std::string rest(name.substr(std::string_view(kEnvPrefix).size()));
  if (rest.empty() || rest.rfind("SELFCHECK_", 0) == 0) return std::nullopt;
  std::string key;
  for (std::size_t i = 0; i < rest.size(); ++i) {
    if (rest[i] == '_' && i + 1 < rest.size() && rest[i + 1] == '_') {
      key += '.';
      ++i;
    } else {
      key += static_cast<char>(std::tolower(static_cast<unsigned char>(rest[i])));
    }
  }
  return key;
}

/// File, then environment, then flags.
KeyValues effective_config(const Global& g) {
  KeyValues kv;
  if (!g.config.empty()) kv.merge(KeyValues::load(g.config));
  for (char** e = environ; e && *e; ++e) {
    const std::string_view entry(*e);
    const auto eq = entry.find('=');
    if (eq == std::string_view::npos) continue;
    if (auto key = env_key(entry.substr(0, eq))) kv.set(*key, std::string(entry.substr(eq + 1)));
  }
  for (const auto& s : g.sets) {
    const auto eq = s.find('=');
    if (eq == std::string::npos || eq == 0) throw UsageError("--set expects key=value, got '" + s + "'");
    kv.set(trim(s.substr(0, eq)), trim(s.substr(eq + 1)));
  }
  if (g.seed) kv.set("seed", std::to_string(*g.seed));
  if (g.jobs) kv.set("jobs", std::to_string(*g.jobs));
  if (g.toy) kv.set("toy", "true");
  return kv;
}

void echo_config(const KeyValues& kv, const std::string& command) {
  std::cerr << "# tsasr " << command << "\n";
  std::istringstream is(kv.to_text());
  for (std::string line; std::getline(is, line);) std::cerr << "#   " << line << "\n";
}

std::pair<double, double> parse_range(const std::string& s, const std::string& what) {
  const auto colon = s.find(':', s.empty() ? 0 : 1);
  if (colon == std::string::npos) throw UsageError(what + " expects lo:hi, got '" + s + "'");
  const double lo = KeyValues::convert<double>(what, s.substr(0, colon));
  const double hi = KeyValues::convert<double>(what, s.substr(colon + 1));
  if (lo > hi) throw UsageError(what + ": lower bound exceeds upper bound");
  return {lo, hi};
}

std::vector<int> parse_tokens(const std::string& s) {
  std::vector<int> out;
  std::string tok;
  std::istringstream is(s);
  while (is >> tok) {
    std::istringstream parts(tok);
    for (std::string piece; std::getline(parts, piece, ',');)
      if (!piece.empty()) out.push_back(KeyValues::convert<int>("token", piece));
  }
  return out;
}

std::vector<std::string> split_list(const std::string& s) {
  std::vector<std::string> out;
  std::istringstream is(s);
  for (std::string p; std::getline(is, p, ',');)
    if (!trim(p).empty()) out.push_back(trim(p));
  return out;
}

std::string join(const std::vector<int>& v) {
  std::string out;
  for (std::size_t i = 0; i < v.size(); ++i) out += (i ? " " : "") + std::to_string(v[i]);
  return out;
}

unsigned jobs_of(const KeyValues& kv) {
  const auto j = kv.get_as<unsigned>("jobs", 1);
  if (j == 0) throw UsageError("jobs must be at least 1");
  return j;
}

template <class F>
void parallel_for(std::size_t n, unsigned jobs, F&& f) {
  const unsigned workers = std::max(1u, std::min<unsigned>(jobs, static_cast<unsigned>(n)));
  if (workers <= 1) {
    for (std::size_t i = 0; i < n; ++i) f(i);
    return;
  }
  std::atomic<std::size_t> next{0};
  std::exception_ptr failure;
  std::mutex mu;
  std::vector<std::thread> pool;
  for (unsigned w = 0; w < workers; ++w)
    pool.emplace_back([&] {
      for (std::size_t i; (i = next++) < n;) {
        try {
          f(i);
        } catch (...) {
          std::lock_guard lock(mu);
          if (!failure) failure = std::current_exception();
        }
      }
    });
  for (auto& t : pool) t.join();
  if (failure) std::rethrow_exception(failure);
}

Model load_model(const std::string& path) { return model_from_checkpoint(load_checkpoint(path)); }

// ---------------------------------------------------------------------------
// synth

struct SynthArgs {
  std::string corpus, out, sir_range = "-5:5", snr_range = "0:20", overlap = "on";
  std::size_t n = 0;
  bool toy = false;
};

int run_synth(const Global& g, const SynthArgs& a) {
  KeyValues kv = effective_config(g);
  if (a.toy) kv.set("toy", "true");
  echo_config(kv, "synth");
  const bool toy = kv.get_as("toy", false);
  if (!toy && a.corpus.empty()) throw UsageError("synth needs --corpus or --toy");
  if (a.overlap != "on" && a.overlap != "off")
    throw UsageError("--overlapping-enrollment expects on or off");
  const bool overlap = a.overlap == "on";
  const auto [sir_lo, sir_hi] = parse_range(a.sir_range, "--sir-range");
  const auto [snr_lo, snr_hi] = parse_range(a.snr_range, "--snr-range");
  if (sir_lo < -5.0 || sir_hi > 5.0) throw UsageError("--sir-range must lie within -5:5");
  if (snr_lo < 0.0 || snr_hi > 20.0) throw UsageError("--snr-range must lie within 0:20");
  const std::uint64_t seed = kv.get_as("seed", kDefaultSeed);
  const fs::path out(a.out);
  fs::create_directories(out);

  std::vector<json> records(a.n);
  if (toy) {
    const ToyConfig tc = ToyConfig::from(kv);
    const ToyWorld world(tc);
    ToySetSpec set;
    set.count = a.n;
    set.sir_lo = sir_lo;
    set.sir_hi = sir_hi;
    set.snr_lo = snr_lo;
    set.snr_hi = snr_hi;
    set.overlapping_enrollment = overlap;
    set.seed = seed;
    const auto samples = generate_toy_set(world, set);
    Checkpoint feats;
    KeyValues world_kv;
    tc.store(world_kv);
    feats.config_text = world_kv.to_text();
    feats.config_hash = fnv1a64(feats.config_text);
    for (std::size_t i = 0; i < samples.size(); ++i) {
      feats.put(samples[i].id + "/enrollment", samples[i].enrollment);
      feats.put(samples[i].id + "/command", samples[i].command);
      records[i] = toy_record(samples[i]);
    }
    save_checkpoint(feats, (out / kToyFeaturesName).string());
  } else {
    const WaveCorpus corpus = load_corpus(a.corpus);
    std::vector<std::string> utts, noises, rirs;
    for (const auto& [k, v] : corpus.utterances) utts.push_back(k);
    for (const auto& [k, v] : corpus.noises) noises.push_back(k);
    for (const auto& [k, v] : corpus.rir_sets) rirs.push_back(k);
    parallel_for(a.n, jobs_of(kv), [&](std::size_t i) {
      const std::uint64_t s = fork_seed(seed, i);
      Rng rng(fork_seed(s, 1));
      MixtureSpec spec;
      std::uniform_int_distribution<std::size_t> pick_u(0, utts.size() - 1);
      spec.target_utterance_id = utts[pick_u(rng)];
      std::vector<std::string> others;
      for (const auto& u : utts)
        if (speaker_of(u) != speaker_of(spec.target_utterance_id)) others.push_back(u);
      if (others.empty())
        for (const auto& u : utts)
          if (u != spec.target_utterance_id) others.push_back(u);
      spec.interferer_utterance_id =
          others[std::uniform_int_distribution<std::size_t>(0, others.size() - 1)(rng)];
      spec.noise_enabled = !noises.empty();
      if (spec.noise_enabled)
        spec.noise_id = noises[std::uniform_int_distribution<std::size_t>(0, noises.size() - 1)(rng)];
      spec.rir_set_id = rirs[std::uniform_int_distribution<std::size_t>(0, rirs.size() - 1)(rng)];
      spec.sir_db = std::uniform_real_distribution<double>(sir_lo, sir_hi)(rng);
      spec.snr_db = std::uniform_real_distribution<double>(snr_lo, snr_hi)(rng);
      spec.overlapping_enrollment = overlap;
      spec.rng_seed = fork_seed(s, 2);
      const MixedSample m = synthesize(spec, corpus);
      const std::string id = "mix-" + std::to_string(i);
      write_wav(m.enrollment_mix, (out / (id + "-enroll.wav")).string());
      write_wav(m.command_mix, (out / (id + "-command.wav")).string());
      records[i] = json{{"id", id},
                        {"kind", "wave"},
                        {"enrollment_wav", id + "-enroll.wav"},
                        {"command_wav", id + "-command.wav"},
                        {"transcript", m.transcript},
                        {"wake", m.wake_text},
                        {"target_utterance", spec.target_utterance_id},
                        {"interferer_utterance", spec.interferer_utterance_id},
                        {"noise", spec.noise_id},
                        {"rir_set", spec.rir_set_id},
                        {"sir_db", spec.sir_db},
                        {"snr_db", spec.snr_db},
                        {"achieved_sir_db", m.achieved_sir_db},
                        {"achieved_snr_db", spec.noise_enabled ? json(m.achieved_snr_db) : json()},
                        {"overlapping_enrollment", overlap},
                        {"interferer_gain", m.interferer_gain},
                        {"noise_gain", m.noise_gain},
                        {"normalization", m.normalization},
                        {"seed", spec.rng_seed}};
    });
  }
  write_manifest(out, records);
  std::cout << "wrote " << a.n << " samples to " << out.string() << "\n";
  return 0;
}

// ---------------------------------------------------------------------------
// train

struct TrainArgs {
  std::string stage = "main", init, out, data;
  bool toy = false;
};

int run_train(const Global& g, const TrainArgs& a) {
  KeyValues kv = effective_config(g);
  if (a.toy) kv.set("toy", "true");
  echo_config(kv, "train");
  const bool toy = kv.get_as("toy", false);
  const Stage stage = parse_stage(a.stage);
  const std::uint64_t seed = kv.get_as("seed", kDefaultSeed);

  ModelConfig mc;
  StageConfig sc = StageConfig::defaults(stage, toy);
  std::vector<Example> data;
  if (toy) {
    const ToyPipelineConfig tp = ToyPipelineConfig::from(kv);
    mc = tp.model;
    sc = stage == Stage::kPretrain ? tp.pretrain : stage == Stage::kMain ? tp.main : tp.finetune;
    if (!kv.has("model.variant") && stage == Stage::kPretrain) mc.variant = Variant::kBaseline;
    if (a.data.empty()) {
      const ToyWorld world(tp.toy);
      data = toy_training_set(world, tp, stage == Stage::kFinetune);
    }
  } else {
    KeyValues m;
    for (const auto& [k, v] : kv.items())
      if (k.rfind("model.", 0) == 0) m.set(k.substr(6), v);
    mc = ModelConfig::from(m, "");
    const std::string p = "train." + to_string(stage) + ".";
    sc.learning_rate = kv.get_as(p + "lr", sc.learning_rate);
    sc.max_batch_seconds = kv.get_as(p + "max_batch_seconds", sc.max_batch_seconds);
    sc.epochs = kv.get_as(p + "epochs", sc.epochs);
    sc.validate();
    if (a.data.empty()) throw UsageError("train needs --data unless --toy is given");
  }
  sc.seed = fork_seed(seed, 30 + static_cast<int>(stage));
  if (!a.data.empty()) data = load_examples(a.data, static_cast<std::size_t>(mc.feat_dim));

  const auto inits = split_list(a.init);
  Model init;
  if (inits.empty()) {
    init = init_model(mc, fork_seed(seed, 10));
  } else if (inits.size() == 1) {
    Model donor = load_model(inits[0]);
    init = donor.config.hash() == mc.hash() ? std::move(donor)
                                            : warm_start(mc, donor, donor, fork_seed(seed, 20)).model;
  } else if (inits.size() == 2) {
    init = warm_start(mc, load_model(inits[0]), load_model(inits[1]), fork_seed(seed, 20)).model;
  } else {
    throw UsageError("--init takes one checkpoint or streaming,offline donors");
  }

  const fs::path out(a.out);
  fs::create_directories(out);
  std::ofstream metrics(out / "metrics.jsonl");
  if (!metrics) throw ConfigError("cannot write metrics in '" + out.string() + "'");
  const StageResult r = run_stage(sc, std::move(init), data, [&](const EpochRecord& e) {
    metrics << e.to_json() << "\n" << std::flush;
    if (g.verbosity > 0) std::cerr << e.to_json() << "\n";
  });
  Checkpoint ck = model_checkpoint(r.best);
  ck.meta["stage"] = to_string(stage);
  ck.meta["seed"] = std::to_string(seed);
  save_checkpoint(ck, (out / "model.ckpt").string());
  save_checkpoint(state_checkpoint(r.final_state), (out / "state.ckpt").string());
  std::cout << to_string(mc.variant) << " " << to_string(stage) << ": initial loss "
            << r.initial_loss << ", best validation loss " << r.best_val_loss << "\n";
  return 0;
}

// ---------------------------------------------------------------------------
// decode

struct DecodeArgs {
  std::string ckpt, enrollment, mixture, wake_text;
  bool streaming = false;
  bool wake_given = false;
};

int run_decode(const Global& g, const DecodeArgs& a) {
  const KeyValues kv = effective_config(g);
  if (g.verbosity > 0) echo_config(kv, "decode");
  const Model m = load_model(a.ckpt);
  const std::vector<int> wake = parse_tokens(a.wake_text);
  if (m.config.variant == Variant::kRobust && wake.empty())
    throw UsageError("the robust variant needs --wake-text");
  const auto dim = static_cast<std::size_t>(m.config.feat_dim);
  const Tensor enr = load_features(a.enrollment, dim);
  const Tensor mix = load_features(a.mixture, dim);
  const SpeakerBias bias = make_speaker_bias(m, enr, wake);
  Hypothesis h;
  if (a.streaming) {
    h = decode_streaming(m, bias, mix, 4, [](int token, std::size_t frame) {
      std::cout << "event token=" << token << " frame=" << frame << "\n" << std::flush;
    });
  } else {
    h = decode_batch(m, bias, mix);
  }
  std::cout << "transcript: " << join(h.tokens) << "\n";
  if (g.f64_check && a.streaming && !(h == decode_batch(m, bias, mix))) {
    std::cerr << "streaming and batch decoding disagree\n";
    return 1;
  }
  return 0;
}

// ---------------------------------------------------------------------------
// eval

struct EvalArgs {
  std::string ckpt, grid = "-5:5:1", overlap = "both", out, snr_range = "0:20";
  std::size_t per_cell = 100;
};

int run_eval(const Global& g, const EvalArgs& a) {
  const KeyValues kv = effective_config(g);
  echo_config(kv, "eval");
  SweepConfig sc;
  sc.sirs = parse_grid(a.grid);
  if (a.overlap == "both") sc.overlaps = {false, true};
  else if (a.overlap == "on") sc.overlaps = {true};
  else if (a.overlap == "off") sc.overlaps = {false};
  else throw UsageError("--overlap expects on, off or both");
  std::tie(sc.snr_lo, sc.snr_hi) = parse_range(a.snr_range, "--snr-range");
  sc.per_cell = a.per_cell;
  sc.seed = kv.get_as("seed", kDefaultSeed);
  sc.jobs = jobs_of(kv);
  const auto paths = split_list(a.ckpt);
  if (paths.empty()) throw UsageError("eval needs at least one --ckpt");
  const ToyWorld world(ToyConfig::from(kv));
  std::vector<std::unique_ptr<ModelDecoder>> decoders;
  std::map<std::string, int> seen;
  for (const auto& p : paths) {
    Model m = load_model(p);
    if (m.config.feat_dim != world.config().feat_dim || m.config.vocab_size != world.config().vocab_size)
      throw ConfigError("checkpoint '" + p + "' does not match the toy corpus feature/vocabulary sizes");
    std::string name = to_string(m.config.variant);
    if (const int n = ++seen[name]; n > 1) name += "#" + std::to_string(n);
    decoders.push_back(std::make_unique<ModelDecoder>(std::move(m), name));
  }
  std::vector<const UtteranceDecoder*> ds;
  for (const auto& d : decoders) ds.push_back(d.get());
  const EvalReport rep = sir_sweep(ds, world, sc);
  std::cout << rep.table();
  if (!a.out.empty()) {
    std::ofstream os(a.out);
    if (!os) throw ConfigError("cannot write report '" + a.out + "'");
    os << rep.table();
    std::ofstream js(fs::path(a.out).replace_extension(".jsonl"));
    js << rep.jsonl();
  }
  return 0;
}

int run_selfcheck(const Global& g) {
  const KeyValues kv = effective_config(g);
  if (g.verbosity > 0) echo_config(kv, "selfcheck");
  const char* ckpt = std::getenv("TSASR_SELFCHECK_CKPT");
  return selfcheck(std::cout, ckpt ? std::optional<std::string>(ckpt) : std::nullopt) ? 0 : 1;
}

}  // namespace
}  // namespace tsasr::cli

int main(int argc, char** argv) {
  using namespace tsasr;
  using namespace tsasr::cli;
  CLI::App app{"Target-speaker transducer ASR toolkit"};
  app.set_version_flag("--version",
                       std::string("tsasr ") + TSASR_VERSION + " (checkpoint format " +
                           std::to_string(kCheckpointVersion) + ")");
  app.require_subcommand(1);
  Global g;
  app.add_option("--config", g.config, "Configuration file (key = value lines)");
  app.add_option("--seed", g.seed, "Root random seed");
  app.add_option("--jobs", g.jobs, "Worker threads")->check(CLI::PositiveNumber);
  app.add_option("--set", g.sets, "Override a configuration key (key=value)");
  app.add_flag("-v,--verbose", g.verbosity, "More output");
  app.add_flag("--f64-check", g.f64_check, "With decode --streaming, verify bit-exact agreement with batch decoding");

  SynthArgs sa;
  auto* synth = app.add_subcommand("synth", "Synthesize a mixture set");
  synth->add_option("--corpus", sa.corpus, "Corpus directory");
  synth->add_option("--out", sa.out, "Output directory")->required();
  synth->add_option("--n", sa.n, "Number of samples")->required();
  synth->add_option("--sir-range", sa.sir_range, "SIR range lo:hi in dB");
  synth->add_option("--snr-range", sa.snr_range, "SNR range lo:hi in dB");
  synth->add_option("--overlapping-enrollment", sa.overlap, "on or off");
  synth->add_flag("--toy", sa.toy, "Generate the synthetic feature corpus");

  TrainArgs ta;
  auto* train = app.add_subcommand("train", "Run one training stage");
  train->add_option("--stage", ta.stage, "pretrain, main or finetune");
  train->add_option("--init", ta.init, "Checkpoint, or streaming,offline donors");
  train->add_option("--out", ta.out, "Output directory")->required();
  train->add_option("--data", ta.data, "Synthesized set directory");
  train->add_flag("--toy", ta.toy, "Use the synthetic corpus and toy stage settings");

  DecodeArgs da;
  auto* decode = app.add_subcommand("decode", "Transcribe one mixture");
  decode->add_option("--ckpt", da.ckpt, "Model checkpoint")->required();
  decode->add_option("--enrollment", da.enrollment, "Enrollment WAV or feature text file")->required();
  decode->add_option("--mixture", da.mixture, "Command WAV or feature text file")->required();
  decode->add_option("--wake-text", da.wake_text, "Wake-word token ids");
  decode->add_flag("--streaming", da.streaming, "Print tokens as they are emitted");

  EvalArgs ea;
  auto* eval = app.add_subcommand("eval", "SIR sweep on the toy test grid");
  eval->add_option("--ckpt", ea.ckpt, "Checkpoints, comma separated")->required();
  eval->add_option("--grid", ea.grid, "SIR grid lo:hi:step");
  eval->add_option("--overlap", ea.overlap, "on, off or both");
  eval->add_option("--per-cell", ea.per_cell, "Utterances per cell")->check(CLI::PositiveNumber);
  eval->add_option("--snr-range", ea.snr_range, "SNR range lo:hi in dB");
  eval->add_option("--out", ea.out, "Report file; records go next to it as .jsonl");

  auto* check = app.add_subcommand("selfcheck", "Run the fast invariant checks");

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int code = app.exit(e);
    return code == 0 ? 0 : 2;
  }
  try {
    if (*synth) return run_synth(g, sa);
    if (*train) return run_train(g, ta);
    if (*decode) return run_decode(g, da);
    if (*eval) return run_eval(g, ea);
    if (*check) return run_selfcheck(g);
  } catch (const UsageError& e) {
    std::cerr << "usage error: " << e.what() << "\n";
    return 2;
  } catch (const ConfigError& e) {
    std::cerr << "config error: " << e.what() << "\n";
    return 2;
  } catch (const IntegrityError& e) {
    std::cerr << "integrity error: " << e.what() << "\n";
    return 1;
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 1;
  }
  return 2;
}
