// tsasr/tools/dataset_io.hpp

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

#include <algorithm>
#include <filesystem>
#include <fstream>
#include <map>
#include <sstream>
#include <string>
#include <vector>

#include <nlohmann/json.hpp>

#include "tsasr/checkpoint.hpp"
#include "tsasr/error.hpp"
#include "tsasr/mixture.hpp"
#include "tsasr/signal.hpp"
#include "tsasr/toy_corpus.hpp"
#include "tsasr/training.hpp"

namespace tsasr::cli {

namespace fs = std::filesystem;
using json = nlohmann::json;

inline constexpr const char* kManifestName = "manifest.jsonl";
inline constexpr const char* kToyFeaturesName = "features.ckpt";

/// Word boundaries, one `start end token` triple per line.
inline std::vector<WordSpan> read_words(const fs::path& p) {
  std::ifstream is(p);
  if (!is) throw ConfigError("missing word boundaries '" + p.string() + "'");
  std::vector<WordSpan> out;
  std::string line;
  std::size_t lineno = 0;
  while (std::getline(is, line)) {
    ++lineno;
    if (trim(line).empty()) continue;
    std::istringstream ls(line);
    WordSpan w;
    if (!(ls >> w.start >> w.end >> w.token))
      throw FormatError(p.string() + ":" + std::to_string(lineno) + ": expected 'start end token'");
    out.push_back(w);
  }
  return out;
}

inline std::vector<fs::path> wavs_in(const fs::path& dir) {
  std::vector<fs::path> out;
  if (!fs::is_directory(dir)) return out;
  for (const auto& e : fs::directory_iterator(dir))
    if (e.is_regular_file() && e.path().extension() == ".wav") out.push_back(e.path());
  std::sort(out.begin(), out.end());
  return out;
}

/// Corpus layout:
///   speech/<speaker>-<name>.wav with speech/<speaker>-<name>.words
///   noise/*.wav
///   rir/<set>/*.wav   (optional; set "synthetic" is always available)
inline WaveCorpus load_corpus(const fs::path& root) {
  if (!fs::is_directory(root)) throw ConfigError("corpus directory '" + root.string() + "' not found");
  WaveCorpus c;
  for (const auto& p : wavs_in(root / "speech")) {
    Utterance u;
    u.id = p.stem().string();
    u.audio = read_wav(p.string());
    u.words = read_words(fs::path(p).replace_extension(".words"));
    c.utterances.emplace(u.id, std::move(u));
  }
  for (const auto& p : wavs_in(root / "noise")) c.noises.emplace(p.stem().string(), read_wav(p.string()));
  c.rir_sets["synthetic"] = {};
  if (fs::is_directory(root / "rir"))
    for (const auto& e : fs::directory_iterator(root / "rir"))
      if (e.is_directory())
        for (const auto& p : wavs_in(e.path()))
          c.rir_sets[e.path().filename().string()].push_back(rir_from_waveform(read_wav(p.string())));
  if (c.utterances.size() < 2) throw ConfigError("corpus needs at least two utterances in speech/");
  return c;
}

inline std::string speaker_of(const std::string& utt) { return utt.substr(0, utt.find('-')); }


inline void write_manifest(const fs::path& dir, const std::vector<json>& records) {
  std::ofstream os(dir / kManifestName);
  if (!os) throw ConfigError("cannot write manifest in '" + dir.string() + "'");
  for (const auto& r : records) os << r.dump() << "\n";
}

inline std::vector<json> read_manifest(const fs::path& dir) {
  std::ifstream is(dir / kManifestName);
  if (!is) throw ConfigError("no " + std::string(kManifestName) + " in '" + dir.string() + "'");
  std::vector<json> out;
  std::string line;
  std::size_t lineno = 0;
  while (std::getline(is, line)) {
    ++lineno;
    if (trim(line).empty()) continue;
    try {
      out.push_back(json::parse(line));
    } catch (const json::exception& e) {
      throw FormatError((dir / kManifestName).string() + ":" + std::to_string(lineno) + ": " +
                        e.what());
    }
  }
  return out;
}

inline json toy_record(const ToySample& s) {
  return json{{"id", s.id},
              {"kind", "toy"},
              {"transcript", s.transcript},
              {"wake", s.wake},
              {"target_speaker", s.target_speaker},
              {"interferer_speaker", s.interferer_speaker},
              {"sir_db", s.spec.sir_db},
              {"snr_db", s.spec.snr_db},
              {"achieved_sir_db", s.achieved_sir_db},
              {"achieved_snr_db", s.achieved_snr_db},
              {"overlapping_enrollment", s.spec.overlapping_enrollment},
              {"interferer_gain", s.interferer_gain},
              {"noise_gain", s.noise_gain},
              {"normalization", 1.0},
              {"features", kToyFeaturesName}};
}

/// Examples of a synthesized set. Wave records go through the front-end.
inline std::vector<Example> load_examples(const fs::path& dir, std::size_t n_mels) {
  const auto records = read_manifest(dir);
  std::map<std::string, Checkpoint> feature_files;
  std::vector<Example> out;
  out.reserve(records.size());
  FrontendConfig fe;
  fe.n_mels = n_mels;
  for (const auto& r : records) {
    Example ex;
    try {
      ex.id = r.at("id").get<std::string>();
      ex.transcript = r.at("transcript").get<std::vector<int>>();
      ex.wake = r.at("wake").get<std::vector<int>>();
      if (r.contains("features")) {
        const auto file = r.at("features").get<std::string>();
        auto it = feature_files.find(file);
        if (it == feature_files.end())
          it = feature_files.emplace(file, load_checkpoint((dir / file).string())).first;
        ex.enrollment = it->second.at(ex.id + "/enrollment");
        ex.command = it->second.at(ex.id + "/command");
      } else {
        ex.enrollment =
            compute_features(read_wav((dir / r.at("enrollment_wav").get<std::string>()).string()), fe)
                .frames;
        ex.command =
            compute_features(read_wav((dir / r.at("command_wav").get<std::string>()).string()), fe)
                .frames;
      }
    } catch (const json::exception& e) {
      throw FormatError("manifest record: " + std::string(e.what()));
    }
    out.push_back(std::move(ex));
  }
  return out;
}

/// Feature matrix from a WAV file or a whitespace-separated text matrix.
inline Tensor load_features(const std::string& path, std::size_t n_mels) {
  if (fs::path(path).extension() == ".wav") {
    FrontendConfig fe;
    fe.n_mels = n_mels;
    return compute_features(read_wav(path), fe).frames;
  }
  std::ifstream is(path);
  if (!is) throw ConfigError("cannot open features '" + path + "'");
  std::vector<double> values;
  std::size_t cols = 0, rows = 0;
  std::string line;
  while (std::getline(is, line)) {
    std::istringstream ls(line);
    std::size_t n = 0;
    double v;
    while (ls >> v) {
      values.push_back(v);
      ++n;
    }
    if (!ls.eof()) throw FormatError(path + ": non-numeric value in row " + std::to_string(rows + 1));
    if (n == 0) continue;
    if (cols != 0 && n != cols) throw FormatError(path + ": ragged feature rows");
    cols = n;
    ++rows;
  }
  if (rows == 0) throw FormatError(path + ": no feature rows");
  return Tensor::matrix(rows, cols, std::move(values));
}

}  // namespace tsasr::cli
