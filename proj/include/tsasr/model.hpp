// tsasr/model.hpp

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

// Target-speaker transducer: enrollment encoder, streaming ASR encoder with
// speaker fusion, text decoder, prediction network and joint network.

#pragma once

#include <cmath>
#include <cstdint>
#include <deque>
#include <limits>
#include <map>
#include <random>
#include <set>
#include <span>
#include <string>
#include <utility>
#include <vector>

#include "tsasr/checkpoint.hpp"
#include "tsasr/config.hpp"
#include "tsasr/error.hpp"
#include "tsasr/random.hpp"
#include "tsasr/tensor.hpp"

namespace tsasr {

enum class Variant { kBaseline, kAttentive, kRobust };

inline std::string to_string(Variant v) {
  switch (v) {
    case Variant::kBaseline: return "baseline";
    case Variant::kAttentive: return "attentive";
    case Variant::kRobust: return "robust";
  }
  return "?";
}

inline Variant parse_variant(const std::string& s) {
  if (s == "baseline") return Variant::kBaseline;
  if (s == "attentive") return Variant::kAttentive;
  if (s == "robust") return Variant::kRobust;
  throw ConfigError("unknown variant '" + s + "' (expected baseline, attentive or robust)");
}

struct ModelConfig {
  Variant variant = Variant::kBaseline;
  int feat_dim = 40;
  int d_model = 128;
  int d_a = 0;  // 0: d_model
  int d_l = 0;
  int d_h = 0;
  int attention_heads = 8;
  int attention_dim = 0;
  int encoder_heads = 4;
  int encoder_layers = 3;
  int fusion_layer_index = 1;
  int enroll_layers = 2;
  int ffn_dim = 0;  // 0: 2 * d_model
  int vocab_size = 16;
  int blank_id = 0;
  int causal_context = 16;
  bool causal_encoder = true;
  int joint_dim = 0;  // 0: d_model
  bool text_residual = true;
  bool text_null_key = true;

  int da() const { return d_a ? d_a : d_model; }
  int dl() const { return d_l ? d_l : d_model; }
  int dh() const { return d_h ? d_h : d_model; }
  int adim() const { return attention_dim ? attention_dim : d_model; }
  int ffn() const { return ffn_dim ? ffn_dim : 2 * d_model; }
  int jdim() const { return joint_dim ? joint_dim : d_model; }

  void validate() const {
    auto fail = [](const std::string& m) { throw ConfigError("model config: " + m); };
    if (feat_dim < 1 || d_model < 1 || vocab_size < 2) fail("dimensions must be positive");
    if (encoder_layers < 2) fail("encoder_layers must be at least 2");
    if (fusion_layer_index < 1 || fusion_layer_index >= encoder_layers)
      fail("fusion_layer_index must satisfy 1 <= index < encoder_layers");
    if (attention_heads < 1 || adim() % attention_heads != 0)
      fail("attention_dim must be divisible by attention_heads");
    if (encoder_heads < 1 || d_model % encoder_heads != 0)
      fail("d_model must be divisible by encoder_heads");
    if (blank_id < 0 || blank_id >= vocab_size) fail("blank_id must be < vocab_size");
    if (causal_context < 0) fail("causal_context must be non-negative");
    if (enroll_layers < 0) fail("enroll_layers must be non-negative");
    const int bias_dim = variant == Variant::kRobust ? dl() : da();
    if (bias_dim != dh())
      fail("d_h (" + std::to_string(dh()) + ") must match the bias producer width (" +
           std::to_string(bias_dim) + ")");
    if (variant == Variant::kRobust && text_residual && da() != dl())
      fail("text_residual requires d_a == d_l");
  }

  KeyValues to_keyvalues() const {
    KeyValues kv;
    kv.set("variant", to_string(variant));
    kv.set("feat_dim", std::to_string(feat_dim));
    kv.set("d_model", std::to_string(d_model));
    kv.set("d_a", std::to_string(d_a));
    kv.set("d_l", std::to_string(d_l));
    kv.set("d_h", std::to_string(d_h));
    kv.set("attention_heads", std::to_string(attention_heads));
    kv.set("attention_dim", std::to_string(attention_dim));
    kv.set("encoder_heads", std::to_string(encoder_heads));
    kv.set("encoder_layers", std::to_string(encoder_layers));
    kv.set("fusion_layer_index", std::to_string(fusion_layer_index));
    kv.set("enroll_layers", std::to_string(enroll_layers));
    kv.set("ffn_dim", std::to_string(ffn_dim));
    kv.set("vocab_size", std::to_string(vocab_size));
    kv.set("blank_id", std::to_string(blank_id));
    kv.set("causal_context", std::to_string(causal_context));
    kv.set("causal_encoder", causal_encoder ? "true" : "false");
    kv.set("joint_dim", std::to_string(joint_dim));
    kv.set("text_residual", text_residual ? "true" : "false");
    kv.set("text_null_key", text_null_key ? "true" : "false");
    return kv;
  }

  /// Reads `model.*` keys (or bare keys when `prefix` is empty).
  static ModelConfig from(const KeyValues& kv, const std::string& prefix = "model.") {
    ModelConfig c;
    auto key = [&prefix](const char* k) { return prefix + k; };
    c.variant = parse_variant(kv.get(key("variant"), to_string(c.variant)));
    c.feat_dim = kv.get_as(key("feat_dim"), c.feat_dim);
    c.d_model = kv.get_as(key("d_model"), c.d_model);
    c.d_a = kv.get_as(key("d_a"), c.d_a);
    c.d_l = kv.get_as(key("d_l"), c.d_l);
    c.d_h = kv.get_as(key("d_h"), c.d_h);
    c.attention_heads = kv.get_as(key("attention_heads"), c.attention_heads);
    c.attention_dim = kv.get_as(key("attention_dim"), c.attention_dim);
    c.encoder_heads = kv.get_as(key("encoder_heads"), c.encoder_heads);
    c.encoder_layers = kv.get_as(key("encoder_layers"), c.encoder_layers);
    c.fusion_layer_index = kv.get_as(key("fusion_layer_index"), c.fusion_layer_index);
    c.enroll_layers = kv.get_as(key("enroll_layers"), c.enroll_layers);
    c.ffn_dim = kv.get_as(key("ffn_dim"), c.ffn_dim);
    c.vocab_size = kv.get_as(key("vocab_size"), c.vocab_size);
    c.blank_id = kv.get_as(key("blank_id"), c.blank_id);
    c.causal_context = kv.get_as(key("causal_context"), c.causal_context);
    c.causal_encoder = kv.get_as(key("causal_encoder"), c.causal_encoder);
    c.joint_dim = kv.get_as(key("joint_dim"), c.joint_dim);
    c.text_residual = kv.get_as(key("text_residual"), c.text_residual);
    c.text_null_key = kv.get_as(key("text_null_key"), c.text_null_key);
    c.validate();
    return c;
  }

  std::string text() const { return to_keyvalues().to_text(); }
  std::uint64_t hash() const { return fnv1a64(text()); }
};

// ---------------------------------------------------------------------------
// Parameters.

struct ParamSpec {
  Shape shape;
  std::size_t fan_in = 1;
  bool zero = false;
  bool ones = false;
};

namespace detail {

inline void add_linear(std::map<std::string, ParamSpec>& out, const std::string& p,
                       int in, int o, bool zero = false) {
  const auto fi = static_cast<std::size_t>(in);
  out[p + ".W"] = {{fi, static_cast<std::size_t>(o)}, fi, zero, false};
  out[p + ".b"] = {{1, static_cast<std::size_t>(o)}, fi, zero, false};
}

inline void add_norm(std::map<std::string, ParamSpec>& out, const std::string& p, int d) {
  out[p + ".g"] = {{1, static_cast<std::size_t>(d)}, 1, false, true};
  out[p + ".b"] = {{1, static_cast<std::size_t>(d)}, 1, true, false};
}

inline void add_attention(std::map<std::string, ParamSpec>& out, const std::string& p,
                          int dq, int dkv, int a, int dout, bool zero_out) {
  add_linear(out, p + ".q", dq, a);
  add_linear(out, p + ".k", dkv, a);
  add_linear(out, p + ".v", dkv, a);
  add_linear(out, p + ".o", a, dout, zero_out);
}

inline void add_block(std::map<std::string, ParamSpec>& out, const std::string& p,
                      const ModelConfig& c) {
  add_norm(out, p + ".ln1", c.d_model);
  add_attention(out, p + ".att", c.d_model, c.d_model, c.d_model, c.d_model, false);
  add_norm(out, p + ".ln2", c.d_model);
  add_linear(out, p + ".ff1", c.d_model, c.ffn());
  add_linear(out, p + ".ff2", c.ffn(), c.d_model);
}

inline void add_tokens(std::map<std::string, ParamSpec>& out, const std::string& p,
                       const ModelConfig& c, int dout) {
  const auto v = static_cast<std::size_t>(c.vocab_size);
  out[p + ".emb"] = {{v, static_cast<std::size_t>(c.d_model)}, v, false, false};
  add_linear(out, p + ".proj", 2 * c.d_model, dout);
}

}  // namespace detail

/// Every parameter of a configuration with its shape and initializer.
inline std::map<std::string, ParamSpec> parameter_specs(const ModelConfig& c) {
  c.validate();
  std::map<std::string, ParamSpec> s;
  detail::add_linear(s, "enroll.in", c.feat_dim, c.d_model);
  for (int i = 0; i < c.enroll_layers; ++i)
    detail::add_block(s, "enroll.block" + std::to_string(i), c);
  detail::add_norm(s, "enroll.ln_f", c.d_model);
  detail::add_linear(s, "enroll.out", c.d_model, c.da());

  detail::add_linear(s, "asr.in", c.feat_dim, c.d_model);
  for (int i = 0; i < c.encoder_layers; ++i)
    detail::add_block(s, "asr.block" + std::to_string(i), c);
  detail::add_norm(s, "asr.ln_f", c.d_model);
  if (c.variant == Variant::kBaseline) {
    detail::add_linear(s, "asr.fuse.proj", c.dh(), c.d_model);
  } else {
    detail::add_attention(s, "asr.fuse.att", c.d_model, c.dh(), c.adim(), c.d_model, true);
  }
  if (c.variant == Variant::kRobust) {
    detail::add_tokens(s, "txt", c, c.dl());
    detail::add_attention(s, "txt_att", c.da(), c.dl(), c.adim(), c.dl(), true);
  }

  detail::add_tokens(s, "pred", c, c.d_model);
  const auto d = static_cast<std::size_t>(c.d_model);
  const auto j = static_cast<std::size_t>(c.jdim());
  s["joint.enc.W"] = {{d, j}, d, false, false};
  s["joint.pred.W"] = {{d, j}, d, false, false};
  s["joint.b"] = {{1, j}, d, false, false};
  detail::add_linear(s, "joint.out", c.jdim(), c.vocab_size);
  return s;
}

using ParamMap = std::map<std::string, Tensor>;

struct Model {
  ModelConfig config;
  ParamMap params;

  const Tensor& p(const std::string& name) const {
    auto it = params.find(name);
    if (it == params.end()) throw ContractError("model has no parameter '" + name + "'");
    return it->second;
  }

  std::vector<Tensor> parameter_list() const {
    std::vector<Tensor> out;
    for (const auto& [k, v] : params) out.push_back(v);
    return out;
  }

  std::size_t parameter_count() const {
    std::size_t n = 0;
    for (const auto& [k, v] : params) n += v.numel();
    return n;
  }
};

/// Uniform(-1/sqrt(fan_in), 1/sqrt(fan_in)) except fusion-path attention
/// output projections (zero) and layer-norm gains (one).
inline Model init_model(const ModelConfig& cfg, std::uint64_t seed) {
  Model m;
  m.config = cfg;
  Rng rng(seed);
  for (const auto& [name, spec] : parameter_specs(cfg)) {
    std::vector<double> v(shape_numel(spec.shape), 0.0);
    if (spec.ones) {
      std::fill(v.begin(), v.end(), 1.0);
    } else if (!spec.zero) {
      const double r = 1.0 / std::sqrt(static_cast<double>(spec.fan_in));
      std::uniform_real_distribution<double> u(-r, r);
      for (auto& x : v) x = u(rng);
    }
    m.params.emplace(name, Tensor::param(spec.shape, std::move(v)));
  }
  return m;
}

inline Checkpoint model_checkpoint(const Model& m) {
  Checkpoint ck;
  ck.config_text = m.config.text();
  ck.config_hash = m.config.hash();
  for (const auto& [k, v] : m.params) ck.put(k, v);
  return ck;
}

/// Rebuilds a model; the stored hash must match the stored configuration and
/// every parameter must be present with its expected shape.
inline Model model_from_checkpoint(const Checkpoint& ck) {
  const auto cfg = ModelConfig::from(KeyValues::parse(ck.config_text, "checkpoint config"), "");
  if (cfg.hash() != ck.config_hash)
    throw IntegrityError("checkpoint config hash does not match its configuration text");
  Model m;
  m.config = cfg;
  for (const auto& [name, spec] : parameter_specs(cfg)) {
    const Tensor& t = ck.at(name);
    if (t.shape() != spec.shape)
      throw FormatError("checkpoint parameter '" + name + "' has shape " +
                        shape_str(t.shape()) + ", expected " + shape_str(spec.shape));
    m.params.emplace(name, Tensor::param(t.shape(), std::vector<double>(t.data().begin(),
                                                                        t.data().end())));
  }
  return m;
}

// ---------------------------------------------------------------------------
// Layers.

inline Tensor linear(const Model& m, const std::string& p, const Tensor& x) {
  return matmul(x, m.p(p + ".W")) + m.p(p + ".b");
}

inline Tensor norm(const Model& m, const std::string& p, const Tensor& x) {
  return layer_norm(x, m.p(p + ".g"), m.p(p + ".b"));
}

/// Which key columns each query row may see.
enum class MaskKind { kNone, kCausalWindow, kSymmetricWindow };

inline Tensor attention_mask(MaskKind kind, std::size_t rows, std::size_t cols, int window) {
  std::vector<double> v(rows * cols, 0.0);
  const double ninf = -std::numeric_limits<double>::infinity();
  const auto w = static_cast<long>(window);
  for (std::size_t i = 0; i < rows; ++i)
    for (std::size_t j = 0; j < cols; ++j) {
      const long d = static_cast<long>(i) - static_cast<long>(j);
      bool ok = true;
      if (kind == MaskKind::kCausalWindow) ok = d >= 0 && d <= w;
      if (kind == MaskKind::kSymmetricWindow) ok = d <= w && -d <= w;
      if (!ok) v[i * cols + j] = ninf;
    }
  return Tensor::matrix(rows, cols, std::move(v));
}

/// Scaled dot-product attention over `heads` heads with input and output
/// projections. `null_key` appends one all-zero key/value slot.
inline Tensor multi_head_attention(const Model& m, const std::string& p, const Tensor& query,
                                   const Tensor& memory, int heads,
                                   const Tensor* mask = nullptr, bool null_key = false) {
  if (memory.rows() == 0) throw ContractError(p + ": attention over zero keys");
  Tensor q = linear(m, p + ".q", query);
  Tensor k = linear(m, p + ".k", memory);
  Tensor v = linear(m, p + ".v", memory);
  const std::size_t a = q.cols();
  if (null_key) {
    k = concat_rows({k, Tensor::zeros({1, a})});
    v = concat_rows({v, Tensor::zeros({1, a})});
  }
  const std::size_t hd = a / static_cast<std::size_t>(heads);
  const double scale_factor = 1.0 / std::sqrt(static_cast<double>(hd));
  std::vector<Tensor> outs;
  outs.reserve(static_cast<std::size_t>(heads));
  for (std::size_t h = 0; h < static_cast<std::size_t>(heads); ++h) {
    Tensor qh = heads == 1 ? q : slice_cols(q, h * hd, (h + 1) * hd);
    Tensor kh = heads == 1 ? k : slice_cols(k, h * hd, (h + 1) * hd);
    Tensor vh = heads == 1 ? v : slice_cols(v, h * hd, (h + 1) * hd);
    Tensor s = scale(matmul(qh, transpose(kh)), scale_factor);
    if (mask) s = s + *mask;
    outs.push_back(matmul(softmax_rows(s), vh));
  }
  Tensor cat = heads == 1 ? outs[0] : concat_cols(outs);
  return linear(m, p + ".o", cat);
}

/// Attention weights of one head, for inspection.
inline Tensor attention_weights(const Model& m, const std::string& p, const Tensor& query,
                                const Tensor& memory, int heads, int head,
                                bool null_key = false) {
  Tensor q = linear(m, p + ".q", query);
  Tensor k = linear(m, p + ".k", memory);
  const std::size_t a = q.cols();
  if (null_key) k = concat_rows({k, Tensor::zeros({1, a})});
  const std::size_t hd = a / static_cast<std::size_t>(heads);
  const auto h = static_cast<std::size_t>(head);
  Tensor s = scale(matmul(slice_cols(q, h * hd, (h + 1) * hd),
                          transpose(slice_cols(k, h * hd, (h + 1) * hd))),
                   1.0 / std::sqrt(static_cast<double>(hd)));
  return softmax_rows(s);
}

/// Pre-norm block: self-attention and a ReLU feed-forward, both residual.
inline Tensor encoder_block(const Model& m, const std::string& p, const Tensor& x,
                            const Tensor* mask) {
  Tensor h = norm(m, p + ".ln1", x);
  Tensor y = x + multi_head_attention(m, p + ".att", h, h, m.config.encoder_heads, mask);
  Tensor f = linear(m, p + ".ff2", relu(linear(m, p + ".ff1", norm(m, p + ".ln2", y))));
  return y + f;
}

// ---------------------------------------------------------------------------
// Enrollment side.

inline Tensor enroll_encode(const Model& m, const Tensor& features) {
  if (features.ndim() != 2 || features.rows() == 0)
    throw ContractError("enroll_encode: empty enrollment");
  if (features.cols() != static_cast<std::size_t>(m.config.feat_dim))
    throw DimensionError("enroll_encode: expected " + std::to_string(m.config.feat_dim) +
                         " features, got " + shape_str(features.shape()));
  Tensor x = linear(m, "enroll.in", features);
  for (int i = 0; i < m.config.enroll_layers; ++i)
    x = encoder_block(m, "enroll.block" + std::to_string(i), x, nullptr);
  return linear(m, "enroll.out", norm(m, "enroll.ln_f", x));
}

namespace detail {

/// Stateless token network: row r is tanh(W [emb(a_r); emb(b_r)] + b).
inline Tensor token_network(const Model& m, const std::string& p, const std::vector<int>& a,
                            const std::vector<int>& b) {
  for (const auto* ids : {&a, &b})
    for (int id : *ids)
      if (id < 0 || id >= m.config.vocab_size)
        throw ContractError(p + ": token id " + std::to_string(id) + " outside vocabulary of " +
                            std::to_string(m.config.vocab_size));
  const Tensor& emb = m.p(p + ".emb");
  return tanh(linear(m, p + ".proj", concat_cols({embedding(emb, a), embedding(emb, b)})));
}

}  // namespace detail

/// h_ling: row n encodes token n and its predecessor.
inline Tensor text_decode(const Model& m, const std::vector<int>& wake) {
  if (wake.empty()) throw ContractError("text_decode: empty wake-word text");
  if (!m.params.count("txt.emb")) throw ContractError("text_decode: model has no text decoder");
  std::vector<int> a, b;
  for (std::size_t n = 0; n < wake.size(); ++n) {
    a.push_back(wake[n]);
    b.push_back(n >= 1 ? wake[n - 1] : m.config.blank_id);
  }
  return detail::token_network(m, "txt", a, b);
}

/// softmax(Q(h_aco) K(h_ling)^T / sqrt(d)) V(h_ling), multi-head.
inline Tensor text_guided_attention(const Model& m, const Tensor& h_aco, const Tensor& h_ling) {
  if (h_ling.ndim() != 2 || h_ling.rows() == 0)
    throw ContractError("text_guided_attention: no wake-word tokens");
  return multi_head_attention(m, "txt_att", h_aco, h_ling, m.config.attention_heads, nullptr,
                              m.config.text_null_key);
}

enum class Provenance { kAcousticOnly, kTextGuided };

struct SpeakerBias {
  Tensor value;  // [T' x d_h] sequence, or [1 x d_model] when pooled
  bool pooled = false;
  Provenance provenance = Provenance::kAcousticOnly;

  static SpeakerBias pooled_vector(Tensor v) {
    return SpeakerBias{std::move(v), true, Provenance::kAcousticOnly};
  }
};

/// mean over time of Linear(h).
inline Tensor pool_bias(const Model& m, const Tensor& h) {
  return mean(linear(m, "asr.fuse.proj", h), 0);
}

inline Tensor hadamard_fuse(const Tensor& z1, const Tensor& pooled) { return z1 * pooled; }

inline Tensor baseline_fuse(const Model& m, const Tensor& z1, const Tensor& h_target_seq) {
  return hadamard_fuse(z1, pool_bias(m, h_target_seq));
}

/// z1 + Out(MHA(query = z1, key = value = h_target)).
inline Tensor contextual_bias_attention(const Model& m, const Tensor& z1, const Tensor& h_target) {
  if (h_target.ndim() != 2 || h_target.rows() == 0)
    throw ContractError("contextual_bias_attention: empty speaker bias");
  return z1 + multi_head_attention(m, "asr.fuse.att", z1, h_target, m.config.attention_heads);
}

/// Speaker bias for the model's variant from enrollment features and, for
/// the robust variant, the wake-word text.
inline SpeakerBias make_speaker_bias(const Model& m, const Tensor& enrollment,
                                     const std::vector<int>& wake = {}) {
  Tensor h_aco = enroll_encode(m, enrollment);
  switch (m.config.variant) {
    case Variant::kBaseline:
      return SpeakerBias{pool_bias(m, h_aco), true, Provenance::kAcousticOnly};
    case Variant::kAttentive:
      return SpeakerBias{h_aco, false, Provenance::kAcousticOnly};
    case Variant::kRobust: {
      if (wake.empty()) throw ContractError("robust variant needs the wake-word text");
      Tensor att = text_guided_attention(m, h_aco, text_decode(m, wake));
      return SpeakerBias{m.config.text_residual ? h_aco + att : att, false,
                         Provenance::kTextGuided};
    }
  }
  throw ContractError("unknown variant");
}

inline void check_bias(const ModelConfig& c, const SpeakerBias& b) {
  const char* want = nullptr;
  switch (c.variant) {
    case Variant::kBaseline:
      if (!b.pooled) want = "a pooled bias vector";
      break;
    case Variant::kAttentive:
      if (b.pooled || b.provenance != Provenance::kAcousticOnly)
        want = "an acoustic-only bias sequence";
      break;
    case Variant::kRobust:
      if (b.pooled || b.provenance != Provenance::kTextGuided)
        want = "a text-guided bias sequence";
      break;
  }
  if (want)
    throw ContractError("asr_encode: " + to_string(c.variant) + " variant requires " + want);
}

inline Tensor apply_fusion(const Model& m, const Tensor& z1, const SpeakerBias& bias) {
  if (m.config.variant == Variant::kBaseline) return hadamard_fuse(z1, bias.value);
  return contextual_bias_attention(m, z1, bias.value);
}

// ---------------------------------------------------------------------------
// ASR encoder.

inline MaskKind asr_mask_kind(const ModelConfig& c) {
  return c.causal_encoder ? MaskKind::kCausalWindow : MaskKind::kSymmetricWindow;
}

namespace detail {

inline Tensor asr_encode_impl(const Model& m, const Tensor& features, const SpeakerBias* bias) {
  const ModelConfig& c = m.config;
  if (features.ndim() != 2 || features.rows() == 0)
    throw ContractError("asr_encode: empty input");
  if (features.cols() != static_cast<std::size_t>(c.feat_dim))
    throw DimensionError("asr_encode: expected " + std::to_string(c.feat_dim) +
                         " features, got " + shape_str(features.shape()));
  const std::size_t t = features.rows();
  const Tensor mask = attention_mask(asr_mask_kind(c), t, t, c.causal_context);
  Tensor x = linear(m, "asr.in", features);
  for (int i = 0; i < c.encoder_layers; ++i) {
    if (i == c.fusion_layer_index && bias) x = apply_fusion(m, x, *bias);
    x = encoder_block(m, "asr.block" + std::to_string(i), x, &mask);
  }
  return norm(m, "asr.ln_f", x);
}

}  // namespace detail

/// Layers before fusion_layer_index run on the features, the speaker bias
/// is fused, and the remaining layers run on the fused sequence.
inline Tensor asr_encode(const Model& m, const Tensor& features, const SpeakerBias& bias) {
  check_bias(m.config, bias);
  return detail::asr_encode_impl(m, features, &bias);
}

/// The same stack with fusion skipped.
inline Tensor asr_encode_unbiased(const Model& m, const Tensor& features) {
  return detail::asr_encode_impl(m, features, nullptr);
}

/// Frame-synchronous ASR encoder. Each layer keeps its last
/// causal_context + 1 input rows and evaluates the block on that window.
class StreamingEncoder {
 public:
  StreamingEncoder(const Model& m, SpeakerBias bias) : m_(&m), bias_(std::move(bias)) {
    if (!m.config.causal_encoder)
      throw ContractError("streaming encoding requires a causal encoder");
    check_bias(m.config, bias_);
    caches_.resize(static_cast<std::size_t>(m.config.encoder_layers));
  }

  /// One feature row in, one encoder row out.
  Tensor push(const Tensor& frame) {
    const ModelConfig& c = m_->config;
    if (frame.ndim() != 2 || frame.rows() != 1 ||
        frame.cols() != static_cast<std::size_t>(c.feat_dim))
      throw DimensionError("StreamingEncoder::push expects one [1 x " +
                           std::to_string(c.feat_dim) + "] row, got " + shape_str(frame.shape()));
    const std::size_t window = static_cast<std::size_t>(c.causal_context) + 1;
    Tensor x = linear(*m_, "asr.in", frame);
    for (int i = 0; i < c.encoder_layers; ++i) {
      if (i == c.fusion_layer_index) x = apply_fusion(*m_, x, bias_);
      auto& cache = caches_[static_cast<std::size_t>(i)];
      cache.push_back(x);
      if (cache.size() > window) cache.pop_front();
      const std::vector<Tensor> rows(cache.begin(), cache.end());
      const Tensor in = rows.size() == 1 ? rows[0] : concat_rows(rows);
      const Tensor mask = attention_mask(MaskKind::kCausalWindow, in.rows(), in.rows(),
                                         c.causal_context);
      const Tensor out = encoder_block(*m_, "asr.block" + std::to_string(i), in, &mask);
      x = slice_rows(out, out.rows() - 1, out.rows());
    }
    ++frames_;
    return norm(*m_, "asr.ln_f", x);
  }

  std::size_t frames() const { return frames_; }

 private:
  const Model* m_;
  SpeakerBias bias_;
  std::vector<std::deque<Tensor>> caches_;
  std::size_t frames_ = 0;
};

// ---------------------------------------------------------------------------
// Prediction and joint networks.

/// g: row u encodes the two tokens before position u (blank-padded).
inline Tensor predict(const Model& m, const std::vector<int>& prefix) {
  std::vector<int> a, b;
  for (std::size_t u = 0; u <= prefix.size(); ++u) {
    a.push_back(u >= 1 ? prefix[u - 1] : m.config.blank_id);
    b.push_back(u >= 2 ? prefix[u - 2] : m.config.blank_id);
  }
  return detail::token_network(m, "pred", a, b);
}

/// Logits for every (t, u) pair, row t * rows(g) + u.
inline Tensor joint(const Model& m, const Tensor& z, const Tensor& g) {
  Tensor h = tanh(outer_add(matmul(z, m.p("joint.enc.W")),
                            matmul(g, m.p("joint.pred.W")) + m.p("joint.b")));
  return linear(m, "joint.out", h);
}

/// Lattice log-probabilities [(T * (U + 1)) x V] for one utterance.
inline Tensor lattice_log_probs(const Model& m, const Tensor& z, const std::vector<int>& target) {
  return log_softmax_rows(joint(m, z, predict(m, target)));
}

}  // namespace tsasr
