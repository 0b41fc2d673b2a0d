// tsasr/checkpoint.hpp

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

// Flat binary container mapping parameter paths to tensors.
//
// Layout (all integers little-endian):
//   magic "TSASRCKP" | u32 format_version | u64 config_hash
//   u32 len, config text
//   u32 n_meta,    { u32 len, key | u32 len, value }*
//   u32 n_tensors, { u32 len, name | u8 dtype | u32 ndim | u64 dim* | raw }*
//   u64 FNV-1a checksum of every preceding byte
//
// dtype 0 stores float32, dtype 1 stores float64. Writing a float64 entry and
// reading it back is bit-exact; float32 entries round through float.

#pragma once

#include <bit>
#include <cstdint>
#include <cstring>
#include <fstream>
#include <map>
#include <string>
#include <string_view>
#include <vector>

#include "tsasr/error.hpp"
#include "tsasr/tensor.hpp"

namespace tsasr {

static_assert(std::endian::native == std::endian::little,
              "checkpoint I/O assumes a little-endian host");

inline constexpr std::uint32_t kCheckpointVersion = 1;

inline std::uint64_t fnv1a64(std::string_view bytes,
                             std::uint64_t h = 0xcbf29ce484222325ULL) {
  for (unsigned char c : bytes) {
    h ^= c;
    h *= 0x100000001b3ULL;
  }
  return h;
}

enum class DType : std::uint8_t { kFloat32 = 0, kFloat64 = 1 };

struct CheckpointEntry {
  DType dtype = DType::kFloat64;
  Tensor tensor;
};

struct Checkpoint {
  std::uint32_t format_version = kCheckpointVersion;
  std::uint64_t config_hash = 0;
  std::string config_text;
  std::map<std::string, std::string> meta;
  std::map<std::string, CheckpointEntry> tensors;

  void put(const std::string& name, const Tensor& t,
           DType dtype = DType::kFloat64) {
    tensors[name] = CheckpointEntry{dtype, t.detach()};
  }
  const Tensor& at(const std::string& name) const {
    auto it = tensors.find(name);
    if (it == tensors.end())
      throw FormatError("checkpoint has no tensor '" + name + "'");
    return it->second.tensor;
  }
  bool has(const std::string& name) const { return tensors.count(name) > 0; }
};

namespace detail {

class ByteWriter {
 public:
  template <class T>
  void pod(const T& v) {
    const char* p = reinterpret_cast<const char*>(&v);
    buf_.append(p, sizeof(T));
  }
  void str(std::string_view s) {
    pod(static_cast<std::uint32_t>(s.size()));
    buf_.append(s);
  }
  void raw(const void* p, std::size_t n) {
    buf_.append(static_cast<const char*>(p), n);
  }
  std::string& bytes() { return buf_; }

 private:
  std::string buf_;
};

class ByteReader {
 public:
  explicit ByteReader(std::string_view b) : buf_(b) {}
  template <class T>
  T pod() {
    need(sizeof(T));
    T v;
    std::memcpy(&v, buf_.data() + pos_, sizeof(T));
    pos_ += sizeof(T);
    return v;
  }
  std::string str() {
    const auto n = pod<std::uint32_t>();
    need(n);
    std::string s(buf_.substr(pos_, n));
    pos_ += n;
    return s;
  }
  void raw(void* dst, std::size_t n) {
    need(n);
    std::memcpy(dst, buf_.data() + pos_, n);
    pos_ += n;
  }
  std::size_t pos() const { return pos_; }

 private:
  void need(std::size_t n) const {
    if (pos_ + n > buf_.size())
      throw FormatError("checkpoint truncated at byte " + std::to_string(pos_));
  }
  std::string_view buf_;
  std::size_t pos_ = 0;
};

inline constexpr char kCheckpointMagic[8] = {'T', 'S', 'A', 'S',
                                             'R', 'C', 'K', 'P'};

}  // namespace detail

inline std::string serialize_checkpoint(const Checkpoint& ck) {
  detail::ByteWriter w;
  w.raw(detail::kCheckpointMagic, 8);
  w.pod(ck.format_version);
  w.pod(ck.config_hash);
  w.str(ck.config_text);
  w.pod(static_cast<std::uint32_t>(ck.meta.size()));
  for (const auto& [k, v] : ck.meta) {
    w.str(k);
    w.str(v);
  }
  w.pod(static_cast<std::uint32_t>(ck.tensors.size()));
  for (const auto& [name, e] : ck.tensors) {
    w.str(name);
    w.pod(static_cast<std::uint8_t>(e.dtype));
    const auto& shape = e.tensor.shape();
    w.pod(static_cast<std::uint32_t>(shape.size()));
    for (auto d : shape) w.pod(static_cast<std::uint64_t>(d));
    const auto data = e.tensor.data();
    if (e.dtype == DType::kFloat64) {
      w.raw(data.data(), data.size() * sizeof(double));
    } else {
      for (double v : data) w.pod(static_cast<float>(v));
    }
  }
  const std::uint64_t sum = fnv1a64(w.bytes());
  w.pod(sum);
  return std::move(w.bytes());
}

inline Checkpoint parse_checkpoint(std::string_view bytes) {
  if (bytes.size() < 8 + 4 + 8 + 8 ||
      std::memcmp(bytes.data(), detail::kCheckpointMagic, 8) != 0)
    throw FormatError("not a tsasr checkpoint (bad magic)");
  const std::string_view body = bytes.substr(0, bytes.size() - 8);
  std::uint64_t stored;
  std::memcpy(&stored, bytes.data() + body.size(), 8);
  if (fnv1a64(body) != stored)
    throw IntegrityError("checkpoint checksum mismatch (file corrupted)");

  detail::ByteReader r(body);
  char magic[8];
  r.raw(magic, 8);
  Checkpoint ck;
  ck.format_version = r.pod<std::uint32_t>();
  if (ck.format_version != kCheckpointVersion)
    throw FormatError("unsupported checkpoint format version " +
                      std::to_string(ck.format_version));
  ck.config_hash = r.pod<std::uint64_t>();
  ck.config_text = r.str();
  const auto n_meta = r.pod<std::uint32_t>();
  for (std::uint32_t i = 0; i < n_meta; ++i) {
    std::string k = r.str();
    ck.meta[k] = r.str();
  }
  const auto n_tensors = r.pod<std::uint32_t>();
  for (std::uint32_t i = 0; i < n_tensors; ++i) {
    std::string name = r.str();
    const auto dtype = r.pod<std::uint8_t>();
    if (dtype > 1)
      throw FormatError("tensor '" + name + "' has unknown dtype " +
                        std::to_string(dtype));
    const auto ndim = r.pod<std::uint32_t>();
    Shape shape(ndim);
    for (auto& d : shape) d = static_cast<std::size_t>(r.pod<std::uint64_t>());
    std::vector<double> values(shape_numel(shape));
    if (dtype == 1) {
      r.raw(values.data(), values.size() * sizeof(double));
    } else {
      for (auto& v : values) v = static_cast<double>(r.pod<float>());
    }
    ck.tensors[name] = CheckpointEntry{static_cast<DType>(dtype),
                                       Tensor(std::move(shape), std::move(values))};
  }
  if (r.pos() != body.size())
    throw FormatError("trailing bytes in checkpoint");
  return ck;
}

inline void save_checkpoint(const Checkpoint& ck, const std::string& path) {
  const std::string bytes = serialize_checkpoint(ck);
  std::ofstream os(path, std::ios::binary | std::ios::trunc);
  if (!os) throw Error("cannot open '" + path + "' for writing");
  os.write(bytes.data(), static_cast<std::streamsize>(bytes.size()));
  if (!os) throw Error("failed writing '" + path + "'");
}

inline Checkpoint load_checkpoint(const std::string& path) {
  std::ifstream is(path, std::ios::binary);
  if (!is) throw ConfigError("cannot open checkpoint '" + path + "'");
  std::string bytes((std::istreambuf_iterator<char>(is)),
                    std::istreambuf_iterator<char>());
  return parse_checkpoint(bytes);
}

}  // namespace tsasr
