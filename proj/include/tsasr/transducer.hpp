// tsasr/transducer.hpp

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

// RNN-T loss over the output lattice, an exhaustive-path reference and the
// frame-synchronous greedy decoder.

#pragma once

#include <bit>
#include <cmath>
#include <concepts>
#include <functional>
#include <limits>
#include <string>
#include <utility>
#include <vector>

#include "tsasr/error.hpp"
#include "tsasr/model.hpp"
#include "tsasr/tensor.hpp"

namespace tsasr {

struct Lattice {
  Tensor log_probs;  // [(T * (U + 1)) x V], row t * (U + 1) + u
  std::vector<int> target;
  int blank_id = 0;
  std::size_t frames = 0;

  std::size_t T() const { return frames; }
  std::size_t U() const { return target.size(); }
  std::size_t V() const { return log_probs.cols(); }
  std::size_t index(std::size_t t, std::size_t u, std::size_t k) const {
    return (t * (U() + 1) + u) * V() + k;
  }
  double at(std::size_t t, std::size_t u, std::size_t k) const {
    return log_probs.data()[index(t, u, k)];
  }
};

inline constexpr double kLatticeNormTolerance = 1e-9;

/// Checks shape, token range and per-cell normalization.
inline Lattice make_lattice(Tensor log_probs, std::size_t frames, std::vector<int> target,
                            int blank_id) {
  if (frames < 1) throw ContractError("lattice: T must be at least 1");
  if (log_probs.ndim() != 2 || log_probs.rows() != frames * (target.size() + 1))
    throw DimensionError("lattice: expected " + std::to_string(frames * (target.size() + 1)) +
                         " rows for T=" + std::to_string(frames) + ", U=" +
                         std::to_string(target.size()) + ", got " +
                         shape_str(log_probs.shape()));
  const std::size_t v = log_probs.cols();
  if (blank_id < 0 || static_cast<std::size_t>(blank_id) >= v)
    throw ContractError("lattice: blank id outside vocabulary");
  for (int y : target)
    if (y < 0 || static_cast<std::size_t>(y) >= v || y == blank_id)
      throw ContractError("lattice: target token " + std::to_string(y) + " is invalid");
  const auto lp = log_probs.data();
  for (std::size_t r = 0; r < log_probs.rows(); ++r) {
    double m = -std::numeric_limits<double>::infinity();
    for (std::size_t k = 0; k < v; ++k) {
      if (std::isnan(lp[r * v + k])) throw NumericError("lattice: NaN log-probability");
      m = std::max(m, lp[r * v + k]);
    }
    double s = 0.0;
    for (std::size_t k = 0; k < v; ++k) s += std::exp(lp[r * v + k] - m);
    if (std::abs(m + std::log(s)) > kLatticeNormTolerance)
      throw ContractError("lattice: cell " + std::to_string(r) + " is not normalized");
  }
  return Lattice{std::move(log_probs), std::move(target), blank_id, frames};
}

/// -log P(target | lattice), forward recursion evaluated one anti-diagonal
/// at a time so the tape stays short.
inline Tensor rnnt_loss(const Lattice& lat) {
  const std::size_t T = lat.T(), U = lat.U();
  const auto blank = static_cast<std::size_t>(lat.blank_id);
  const double ninf = -std::numeric_limits<double>::infinity();
  Tensor alpha = Tensor(Shape{1}, {0.0});
  std::size_t prev_lo = 0;
  for (std::size_t d = 1; d < T + U; ++d) {
    const std::size_t lo = d >= T ? d - T + 1 : 0;
    const std::size_t hi = std::min(d, U);
    std::vector<std::size_t> from_t, blank_ix, from_u, label_ix;
    for (std::size_t u = lo; u <= hi; ++u) {
      const std::size_t t = d - u;
      if (t >= 1) {
        from_t.push_back(u - prev_lo);
        blank_ix.push_back(lat.index(t - 1, u, blank));
      } else {
        from_t.push_back(kFillIndex);
        blank_ix.push_back(kFillIndex);
      }
      if (u >= 1) {
        from_u.push_back(u - 1 - prev_lo);
        label_ix.push_back(lat.index(t, u - 1, static_cast<std::size_t>(lat.target[u - 1])));
      } else {
        from_u.push_back(kFillIndex);
        label_ix.push_back(kFillIndex);
      }
    }
    Tensor stay = select_fill(alpha, from_t, ninf) + select_fill(lat.log_probs, blank_ix, ninf);
    Tensor emit = select_fill(alpha, from_u, ninf) + select_fill(lat.log_probs, label_ix, ninf);
    alpha = logaddexp(stay, emit);
    prev_lo = lo;
  }
  Tensor final_blank = select(lat.log_probs, {lat.index(T - 1, U, blank)});
  return -sum(alpha + final_blank);
}

struct BruteForceResult {
  double loss = 0.0;
  std::size_t paths = 0;
};

/// Sums the probability of every alignment explicitly.
inline BruteForceResult rnnt_loss_bruteforce(const Lattice& lat) {
  const std::size_t T = lat.T(), U = lat.U();
  if (T > 6 || U > 4)
    throw ContractError("rnnt_loss_bruteforce: instance too large (T <= 6, U <= 4)");
  const auto blank = static_cast<std::size_t>(lat.blank_id);
  BruteForceResult r;
  double total = 0.0;
  std::function<void(std::size_t, std::size_t, double)> walk = [&](std::size_t t, std::size_t u,
                                                                    double logp) {
    if (t == T - 1 && u == U) {
      total += std::exp(logp + lat.at(t, u, blank));
      ++r.paths;
      return;
    }
    if (u < U)
      walk(t, u + 1, logp + lat.at(t, u, static_cast<std::size_t>(lat.target[u])));
    if (t + 1 < T) walk(t + 1, u, logp + lat.at(t, u, blank));
  };
  walk(0, 0, 0.0);
  r.loss = -std::log(total);
  return r;
}

// ---------------------------------------------------------------------------
// Greedy decoding.

struct Hypothesis {
  std::vector<int> tokens;
  std::vector<std::size_t> frames;
  double score = 0.0;

  bool operator==(const Hypothesis& o) const {
    return tokens == o.tokens && frames == o.frames &&
           std::bit_cast<std::uint64_t>(score) == std::bit_cast<std::uint64_t>(o.score);
  }
};

/// Anything that maps (encoder row, emitted history) to joint logits.
template <class S>
concept JointScorer = requires(S s, const Tensor& z, const std::vector<int>& h) {
  { s.logits(z, h) } -> std::convertible_to<std::vector<double>>;
  { s.blank_id() } -> std::convertible_to<int>;
};

/// Lowest index among maximal entries.
inline std::size_t argmax_lowest(const std::vector<double>& v) {
  std::size_t best = 0;
  for (std::size_t i = 1; i < v.size(); ++i)
    if (v[i] > v[best]) best = i;
  return best;
}

inline double log_softmax_at(const std::vector<double>& v, std::size_t k) {
  double m = -std::numeric_limits<double>::infinity();
  for (double x : v) m = std::max(m, x);
  double s = 0.0;
  for (double x : v) s += std::exp(x - m);
  return v[k] - m - std::log(s);
}

/// Consumes encoder rows in order; each row is visited once. At most
/// max_symbols_per_frame labels are emitted per frame.
template <JointScorer S>
class GreedyDecoder {
 public:
  using Listener = std::function<void(int token, std::size_t frame)>;

  explicit GreedyDecoder(S scorer, int max_symbols_per_frame = 4, Listener on_emit = {})
      : scorer_(std::move(scorer)), max_symbols_(max_symbols_per_frame),
        on_emit_(std::move(on_emit)) {
    if (max_symbols_per_frame < 1)
      throw ContractError("max_symbols_per_frame must be at least 1");
  }

  void push(const Tensor& z_row) {
    const int blank = scorer_.blank_id();
    for (int emitted = 0; emitted < max_symbols_; ++emitted) {
      const std::vector<double> logits = scorer_.logits(z_row, hyp_.tokens);
      const std::size_t k = argmax_lowest(logits);
      hyp_.score += log_softmax_at(logits, k);
      if (static_cast<int>(k) == blank) break;
      hyp_.tokens.push_back(static_cast<int>(k));
      hyp_.frames.push_back(frame_);
      if (on_emit_) on_emit_(static_cast<int>(k), frame_);
    }
    ++frame_;
  }

  void push_all(const Tensor& z) {
    for (std::size_t t = 0; t < z.rows(); ++t) push(slice_rows(z, t, t + 1));
  }

  const Hypothesis& hypothesis() const { return hyp_; }
  std::size_t frames() const { return frame_; }

 private:
  S scorer_;
  int max_symbols_;
  Listener on_emit_;
  Hypothesis hyp_;
  std::size_t frame_ = 0;
};

/// Joint network of a trained model; the prediction row depends only on the
/// last two emitted tokens.
class ModelScorer {
 public:
  explicit ModelScorer(const Model& m) : m_(&m) {}

  int blank_id() const { return m_->config.blank_id; }

  std::vector<double> logits(const Tensor& z_row, const std::vector<int>& history) const {
    const int blank = m_->config.blank_id;
    const std::size_t n = history.size();
    const int a = n >= 1 ? history[n - 1] : blank;
    const int b = n >= 2 ? history[n - 2] : blank;
    const Tensor g = detail::token_network(*m_, "pred", {a}, {b});
    const Tensor out = joint(*m_, z_row, g);
    return {out.data().begin(), out.data().end()};
  }

 private:
  const Model* m_;
};

inline Hypothesis greedy_decode(const Model& m, const Tensor& z, int max_symbols_per_frame = 4) {
  GreedyDecoder<ModelScorer> dec(ModelScorer(m), max_symbols_per_frame);
  dec.push_all(z);
  return dec.hypothesis();
}

/// Full pipeline for one utterance with frame-by-frame encoding.
inline Hypothesis decode_streaming(const Model& m, const SpeakerBias& bias, const Tensor& features,
                                   int max_symbols_per_frame = 4,
                                   GreedyDecoder<ModelScorer>::Listener on_emit = {}) {
  StreamingEncoder enc(m, bias);
  GreedyDecoder<ModelScorer> dec(ModelScorer(m), max_symbols_per_frame, std::move(on_emit));
  for (std::size_t t = 0; t < features.rows(); ++t)
    dec.push(enc.push(slice_rows(features, t, t + 1)));
  return dec.hypothesis();
}

inline Hypothesis decode_batch(const Model& m, const SpeakerBias& bias, const Tensor& features,
                               int max_symbols_per_frame = 4) {
  return greedy_decode(m, asr_encode(m, features, bias), max_symbols_per_frame);
}

}  // namespace tsasr
