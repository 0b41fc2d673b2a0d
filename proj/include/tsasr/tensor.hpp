// tsasr/tensor.hpp

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

// Dense float64 tensors with tape-based reverse-mode differentiation.
//
// A Tensor is a shared handle to an immutable value plus an optional gradient
// accumulator. Operations executed while a Tape is installed on the current
// thread, and with at least one input that requires a gradient, are recorded
// on that tape; Tape::backward() replays them in reverse. Without a tape the
// same operations simply compute values, which is how inference runs.
//
// Broadcasting is limited to scalar-tensor and row-vector-over-rows. Anything
// else is a DimensionError.

#pragma once

#include <algorithm>
#include <cmath>
#include <cstddef>
#include <functional>
#include <limits>
#include <memory>
#include <numeric>
#include <random>
#include <span>
#include <sstream>
#include <string>
#include <utility>
#include <vector>

#include "tsasr/error.hpp"

namespace tsasr {

using Shape = std::vector<std::size_t>;

inline std::string shape_str(const Shape& s) {
  std::ostringstream os;
  os << '[';
  for (std::size_t i = 0; i < s.size(); ++i) os << (i ? "x" : "") << s[i];
  os << ']';
  return os.str();
}

inline std::size_t shape_numel(const Shape& s) {
  return std::accumulate(s.begin(), s.end(), std::size_t{1},
                         std::multiplies<>());
}

namespace detail {

struct Node {
  Shape shape;
  std::vector<double> value;
  std::vector<double> grad;
  bool requires_grad = false;
  std::vector<std::shared_ptr<Node>> inputs;
  std::function<void(Node&)> backward;

  std::vector<double>& grad_buffer() {
    if (grad.empty()) grad.assign(value.size(), 0.0);
    return grad;
  }
  bool wants_grad() const { return requires_grad; }
};

}  // namespace detail

class Tape;

class Tensor {
 public:
  Tensor() = default;

  Tensor(Shape shape, std::vector<double> values) {
    if (shape_numel(shape) != values.size())
      throw DimensionError("tensor shape " + shape_str(shape) + " holds " +
                           std::to_string(shape_numel(shape)) +
                           " values, got " + std::to_string(values.size()));
    node_ = std::make_shared<detail::Node>();
    node_->shape = std::move(shape);
    node_->value = std::move(values);
  }

  static Tensor zeros(Shape shape) {
    const std::size_t n = shape_numel(shape);
    return Tensor(std::move(shape), std::vector<double>(n, 0.0));
  }
  static Tensor filled(Shape shape, double v) {
    const std::size_t n = shape_numel(shape);
    return Tensor(std::move(shape), std::vector<double>(n, v));
  }
  static Tensor scalar(double v) { return Tensor(Shape{}, {v}); }
  static Tensor matrix(std::size_t rows, std::size_t cols,
                       std::vector<double> values) {
    return Tensor(Shape{rows, cols}, std::move(values));
  }
  /// Leaf tensor that accumulates gradients.
  static Tensor param(Shape shape, std::vector<double> values) {
    Tensor t(std::move(shape), std::move(values));
    t.node_->requires_grad = true;
    return t;
  }

  bool defined() const { return node_ != nullptr; }
  const Shape& shape() const { return node().shape; }
  std::size_t ndim() const { return node().shape.size(); }
  std::size_t numel() const { return node().value.size(); }
  std::size_t rows() const {
    require_2d("rows");
    return node().shape[0];
  }
  std::size_t cols() const {
    require_2d("cols");
    return node().shape[1];
  }

  std::span<const double> data() const { return node().value; }
  /// Direct write access, for parameters and optimizer updates only.
  std::span<double> mutable_data() { return node().value; }

  double item() const {
    if (numel() != 1)
      throw ContractError("item() on tensor of shape " + shape_str(shape()));
    return node().value[0];
  }
  double operator()(std::size_t r, std::size_t c) const {
    return node().value[r * node().shape[1] + c];
  }
  std::span<const double> row(std::size_t r) const {
    require_2d("row");
    return std::span<const double>(node().value).subspan(r * cols(), cols());
  }

  bool requires_grad() const { return node().requires_grad; }
  void set_requires_grad(bool v) { node().requires_grad = v; }
  bool has_grad() const { return !node().grad.empty(); }
  /// Accumulated gradient; zeros when nothing has flowed back yet.
  std::vector<double> grad() const {
    if (node().grad.empty()) return std::vector<double>(numel(), 0.0);
    return node().grad;
  }
  std::span<double> grad_buffer() { return node().grad_buffer(); }
  void zero_grad() { node().grad.clear(); }

  /// Same values, fresh node, no gradient history.
  Tensor detach() const { return Tensor(shape(), node().value); }
  Tensor clone_param() const {
    Tensor t = detach();
    t.node_->requires_grad = requires_grad();
    return t;
  }

  const std::shared_ptr<detail::Node>& handle() const { return node_; }
  explicit Tensor(std::shared_ptr<detail::Node> n) : node_(std::move(n)) {}

 private:
  detail::Node& node() const {
    if (!node_) throw ContractError("use of undefined tensor");
    return *node_;
  }
  void require_2d(const char* what) const {
    if (node().shape.size() != 2)
      throw DimensionError(std::string(what) + " requires a 2-D tensor, got " +
                           shape_str(node().shape));
  }

  std::shared_ptr<detail::Node> node_;
};

/// Ordered record of differentiable operations for one forward pass.
///
/// Constructing a Tape installs it as the current tape of the calling thread;
/// destruction restores the previous one. A tape supports one backward() per
/// reset().
class Tape {
 public:
  Tape() : previous_(current_slot()) { current_slot() = this; }
  ~Tape() { current_slot() = previous_; }
  Tape(const Tape&) = delete;
  Tape& operator=(const Tape&) = delete;

  static Tape* current() { return current_slot(); }

  void record(std::shared_ptr<detail::Node> n) { nodes_.push_back(std::move(n)); }
  std::size_t size() const { return nodes_.size(); }

  void backward(const Tensor& loss) {
    if (loss.numel() != 1)
      throw ContractError("backward() needs a scalar loss, got shape " +
                          shape_str(loss.shape()));
    if (consumed_)
      throw ContractError("backward() called twice without reset()");
    consumed_ = true;
    if (!loss.requires_grad()) return;
    loss.handle()->grad_buffer()[0] += 1.0;
    for (auto it = nodes_.rbegin(); it != nodes_.rend(); ++it) {
      detail::Node& n = **it;
      if (n.grad.empty() || !n.backward) continue;
      n.backward(n);
    }
  }

  void reset() {
    nodes_.clear();
    consumed_ = false;
  }

 private:
  static Tape*& current_slot() {
    thread_local Tape* slot = nullptr;
    return slot;
  }

  Tape* previous_;
  std::vector<std::shared_ptr<detail::Node>> nodes_;
  bool consumed_ = false;
};

inline void zero_grad(std::span<Tensor> params) {
  for (auto& p : params) p.zero_grad();
}

namespace detail {

inline Tensor make_result(Shape shape, std::vector<double> value,
                          std::initializer_list<const Tensor*> inputs,
                          std::function<void(Node&)> backward) {
  Tensor out(std::move(shape), std::move(value));
  Tape* tape = Tape::current();
  if (!tape) return out;
  bool any = false;
  for (const Tensor* in : inputs) any = any || in->requires_grad();
  if (!any) return out;
  auto& n = *out.handle();
  n.requires_grad = true;
  for (const Tensor* in : inputs) n.inputs.push_back(in->handle());
  n.backward = std::move(backward);
  tape->record(out.handle());
  return out;
}

inline Tensor make_result_list(Shape shape, std::vector<double> value,
                               const std::vector<Tensor>& inputs,
                               std::function<void(Node&)> backward) {
  Tensor out(std::move(shape), std::move(value));
  Tape* tape = Tape::current();
  if (!tape) return out;
  bool any = false;
  for (const auto& in : inputs) any = any || in.requires_grad();
  if (!any) return out;
  auto& n = *out.handle();
  n.requires_grad = true;
  for (const auto& in : inputs) n.inputs.push_back(in.handle());
  n.backward = std::move(backward);
  tape->record(out.handle());
  return out;
}

inline void check_no_nan(const Tensor& t, const char* op) {
  for (double v : t.data())
    if (std::isnan(v)) throw NumericError(std::string(op) + ": NaN input");
}

inline void require_2d(const Tensor& t, const char* op) {
  if (t.ndim() != 2)
    throw DimensionError(std::string(op) + " requires a 2-D tensor, got " +
                         shape_str(t.shape()));
}

// C[M×N] (+)= A[M×K] · B[K×N], row-major, accumulation over k in order.
inline void gemm(const double* a, const double* b, double* c, std::size_t m,
                 std::size_t k, std::size_t n) {
  for (std::size_t i = 0; i < m; ++i) {
    double* crow = c + i * n;
    for (std::size_t p = 0; p < k; ++p) {
      const double av = a[i * k + p];
      const double* brow = b + p * n;
      for (std::size_t j = 0; j < n; ++j) crow[j] += av * brow[j];
    }
  }
}

enum class Broadcast { kSame, kScalarA, kScalarB, kRowA, kRowB };

inline bool is_row_of(const Tensor& row, const Tensor& full) {
  if (full.ndim() != 2) return false;
  const auto& s = row.shape();
  if (s.size() == 1) return s[0] == full.shape()[1];
  if (s.size() == 2) return s[0] == 1 && s[1] == full.shape()[1] &&
                            full.shape()[0] != 1;
  return false;
}

inline Broadcast broadcast_mode(const Tensor& a, const Tensor& b,
                                const char* op) {
  if (a.shape() == b.shape()) return Broadcast::kSame;
  if (b.ndim() == 0) return Broadcast::kScalarB;
  if (a.ndim() == 0) return Broadcast::kScalarA;
  if (is_row_of(b, a)) return Broadcast::kRowB;
  if (is_row_of(a, b)) return Broadcast::kRowA;
  throw DimensionError(std::string(op) + ": incompatible shapes " +
                       shape_str(a.shape()) + " and " + shape_str(b.shape()));
}

// f(x, y) with partials dfx(x, y, out), dfy(x, y, out).
template <class F, class Dx, class Dy>
Tensor binary_op(const Tensor& a, const Tensor& b, const char* name, F f,
                 Dx dfx, Dy dfy) {
  const Broadcast mode = broadcast_mode(a, b, name);
  const bool a_big = mode != Broadcast::kScalarA && mode != Broadcast::kRowA;
  const Shape out_shape = a_big ? a.shape() : b.shape();
  const std::size_t n = shape_numel(out_shape);
  const std::size_t width = out_shape.size() == 2 ? out_shape[1] : 1;
  auto ia = [mode, width](std::size_t i) -> std::size_t {
    switch (mode) {
      case Broadcast::kScalarA: return 0;
      case Broadcast::kRowA: return i % width;
      default: return i;
    }
  };
  auto ib = [mode, width](std::size_t i) -> std::size_t {
    switch (mode) {
      case Broadcast::kScalarB: return 0;
      case Broadcast::kRowB: return i % width;
      default: return i;
    }
  };
  const auto av = a.data();
  const auto bv = b.data();
  std::vector<double> out(n);
  for (std::size_t i = 0; i < n; ++i) out[i] = f(av[ia(i)], bv[ib(i)]);
  return make_result(
      out_shape, std::move(out), {&a, &b},
      [ia, ib, n, dfx, dfy](Node& self) {
        auto& na = *self.inputs[0];
        auto& nb = *self.inputs[1];
        const auto& g = self.grad;
        if (na.requires_grad) {
          auto& ga = na.grad_buffer();
          for (std::size_t i = 0; i < n; ++i)
            ga[ia(i)] += g[i] * dfx(na.value[ia(i)], nb.value[ib(i)],
                                    self.value[i]);
        }
        if (nb.requires_grad) {
          auto& gb = nb.grad_buffer();
          for (std::size_t i = 0; i < n; ++i)
            gb[ib(i)] += g[i] * dfy(na.value[ia(i)], nb.value[ib(i)],
                                    self.value[i]);
        }
      });
}

// f(x) with derivative df(x, out).
template <class F, class D>
Tensor unary_op(const Tensor& a, F f, D df) {
  const auto av = a.data();
  std::vector<double> out(av.size());
  for (std::size_t i = 0; i < av.size(); ++i) out[i] = f(av[i]);
  return make_result(a.shape(), std::move(out), {&a}, [df](Node& self) {
    auto& na = *self.inputs[0];
    auto& ga = na.grad_buffer();
    for (std::size_t i = 0; i < ga.size(); ++i)
      ga[i] += self.grad[i] * df(na.value[i], self.value[i]);
  });
}

}  // namespace detail

// ---------------------------------------------------------------------------
// Elementwise arithmetic.

inline Tensor add(const Tensor& a, const Tensor& b) {
  return detail::binary_op(
      a, b, "add", [](double x, double y) { return x + y; },
      [](double, double, double) { return 1.0; },
      [](double, double, double) { return 1.0; });
}

inline Tensor sub(const Tensor& a, const Tensor& b) {
  return detail::binary_op(
      a, b, "sub", [](double x, double y) { return x - y; },
      [](double, double, double) { return 1.0; },
      [](double, double, double) { return -1.0; });
}

/// Hadamard product.
inline Tensor mul(const Tensor& a, const Tensor& b) {
  return detail::binary_op(
      a, b, "mul", [](double x, double y) { return x * y; },
      [](double, double y, double) { return y; },
      [](double x, double, double) { return x; });
}

inline Tensor scale(const Tensor& a, double s) {
  return detail::unary_op(
      a, [s](double x) { return x * s; }, [s](double, double) { return s; });
}

inline Tensor operator+(const Tensor& a, const Tensor& b) { return add(a, b); }
inline Tensor operator-(const Tensor& a, const Tensor& b) { return sub(a, b); }
inline Tensor operator*(const Tensor& a, const Tensor& b) { return mul(a, b); }
inline Tensor operator*(const Tensor& a, double s) { return scale(a, s); }
inline Tensor operator-(const Tensor& a) { return scale(a, -1.0); }

inline Tensor exp(const Tensor& a) {
  return detail::unary_op(
      a, [](double x) { return std::exp(x); },
      [](double, double y) { return y; });
}

inline Tensor log(const Tensor& a) {
  return detail::unary_op(
      a, [](double x) { return std::log(x); },
      [](double x, double) { return 1.0 / x; });
}

inline Tensor tanh(const Tensor& a) {
  return detail::unary_op(
      a, [](double x) { return std::tanh(x); },
      [](double, double y) { return 1.0 - y * y; });
}

inline Tensor relu(const Tensor& a) {
  return detail::unary_op(
      a, [](double x) { return x > 0.0 ? x : 0.0; },
      [](double x, double) { return x > 0.0 ? 1.0 : 0.0; });
}

inline Tensor sigmoid(const Tensor& a) {
  return detail::unary_op(
      a, [](double x) { return 1.0 / (1.0 + std::exp(-x)); },
      [](double, double y) { return y * (1.0 - y); });
}

/// log(exp(a) + exp(b)), elementwise; -inf inputs are allowed.
inline Tensor logaddexp(const Tensor& a, const Tensor& b) {
  return detail::binary_op(
      a, b, "logaddexp",
      [](double x, double y) {
        const double m = std::max(x, y);
        if (m == -std::numeric_limits<double>::infinity()) return m;
        return m + std::log(std::exp(x - m) + std::exp(y - m));
      },
      [](double x, double, double r) {
        return std::isinf(r) ? 0.0 : std::exp(x - r);
      },
      [](double, double y, double r) {
        return std::isinf(r) ? 0.0 : std::exp(y - r);
      });
}

// ---------------------------------------------------------------------------
// Linear algebra and shape manipulation.

inline Tensor matmul(const Tensor& a, const Tensor& b) {
  if (a.ndim() != 2 || b.ndim() != 2 || a.shape()[1] != b.shape()[0])
    throw DimensionError("matmul: cannot multiply " + shape_str(a.shape()) +
                         " by " + shape_str(b.shape()));
  const std::size_t m = a.shape()[0], k = a.shape()[1], n = b.shape()[1];
  std::vector<double> out(m * n, 0.0);
  detail::gemm(a.data().data(), b.data().data(), out.data(), m, k, n);
  return detail::make_result(
      {m, n}, std::move(out), {&a, &b}, [m, k, n](detail::Node& self) {
        auto& na = *self.inputs[0];
        auto& nb = *self.inputs[1];
        const double* g = self.grad.data();
        if (na.requires_grad) {
          // dA = dC · Bᵀ
          std::vector<double> bt(n * k);
          for (std::size_t p = 0; p < k; ++p)
            for (std::size_t j = 0; j < n; ++j) bt[j * k + p] = nb.value[p * n + j];
          detail::gemm(g, bt.data(), na.grad_buffer().data(), m, n, k);
        }
        if (nb.requires_grad) {
          // dB = Aᵀ · dC
          double* gb = nb.grad_buffer().data();
          for (std::size_t i = 0; i < m; ++i)
            for (std::size_t p = 0; p < k; ++p) {
              const double av = na.value[i * k + p];
              double* gbrow = gb + p * n;
              const double* grow = g + i * n;
              for (std::size_t j = 0; j < n; ++j) gbrow[j] += av * grow[j];
            }
        }
      });
}

inline Tensor transpose(const Tensor& a) {
  detail::require_2d(a, "transpose");
  const std::size_t r = a.rows(), c = a.cols();
  std::vector<double> out(r * c);
  const auto av = a.data();
  for (std::size_t i = 0; i < r; ++i)
    for (std::size_t j = 0; j < c; ++j) out[j * r + i] = av[i * c + j];
  return detail::make_result({c, r}, std::move(out), {&a},
                             [r, c](detail::Node& self) {
                               auto& ga = self.inputs[0]->grad_buffer();
                               for (std::size_t i = 0; i < r; ++i)
                                 for (std::size_t j = 0; j < c; ++j)
                                   ga[i * c + j] += self.grad[j * r + i];
                             });
}

inline Tensor reshape(const Tensor& a, Shape shape) {
  if (shape_numel(shape) != a.numel())
    throw DimensionError("reshape: " + shape_str(a.shape()) + " to " +
                         shape_str(shape));
  std::vector<double> out(a.data().begin(), a.data().end());
  return detail::make_result(std::move(shape), std::move(out), {&a},
                             [](detail::Node& self) {
                               auto& ga = self.inputs[0]->grad_buffer();
                               for (std::size_t i = 0; i < ga.size(); ++i)
                                 ga[i] += self.grad[i];
                             });
}

inline Tensor sum(const Tensor& a) {
  double s = 0.0;
  for (double v : a.data()) s += v;
  return detail::make_result({}, {s}, {&a}, [](detail::Node& self) {
    auto& ga = self.inputs[0]->grad_buffer();
    for (auto& g : ga) g += self.grad[0];
  });
}

/// Mean over one axis of a 2-D tensor; the reduced axis keeps size 1.
inline Tensor mean(const Tensor& a, std::size_t axis) {
  detail::require_2d(a, "mean");
  if (axis > 1) throw DimensionError("mean: axis must be 0 or 1");
  const std::size_t r = a.rows(), c = a.cols();
  const std::size_t n = axis == 0 ? r : c;
  if (n == 0) throw DimensionError("mean over an empty axis");
  const auto av = a.data();
  Shape shape = axis == 0 ? Shape{1, c} : Shape{r, 1};
  std::vector<double> out(axis == 0 ? c : r, 0.0);
  for (std::size_t i = 0; i < r; ++i)
    for (std::size_t j = 0; j < c; ++j)
      out[axis == 0 ? j : i] += av[i * c + j];
  for (auto& v : out) v /= static_cast<double>(n);
  return detail::make_result(
      std::move(shape), std::move(out), {&a}, [r, c, axis, n](detail::Node& self) {
        auto& ga = self.inputs[0]->grad_buffer();
        const double inv = 1.0 / static_cast<double>(n);
        for (std::size_t i = 0; i < r; ++i)
          for (std::size_t j = 0; j < c; ++j)
            ga[i * c + j] += self.grad[axis == 0 ? j : i] * inv;
      });
}

inline Tensor slice_rows(const Tensor& a, std::size_t begin, std::size_t end) {
  detail::require_2d(a, "slice_rows");
  if (begin > end || end > a.rows())
    throw DimensionError("slice_rows [" + std::to_string(begin) + "," +
                         std::to_string(end) + ") of " + shape_str(a.shape()));
  const std::size_t c = a.cols();
  std::vector<double> out(a.data().begin() + begin * c,
                          a.data().begin() + end * c);
  return detail::make_result({end - begin, c}, std::move(out), {&a},
                             [begin, c](detail::Node& self) {
                               auto& ga = self.inputs[0]->grad_buffer();
                               for (std::size_t i = 0; i < self.grad.size(); ++i)
                                 ga[begin * c + i] += self.grad[i];
                             });
}

inline Tensor slice_cols(const Tensor& a, std::size_t begin, std::size_t end) {
  detail::require_2d(a, "slice_cols");
  if (begin > end || end > a.cols())
    throw DimensionError("slice_cols [" + std::to_string(begin) + "," +
                         std::to_string(end) + ") of " + shape_str(a.shape()));
  const std::size_t r = a.rows(), c = a.cols(), w = end - begin;
  std::vector<double> out(r * w);
  const auto av = a.data();
  for (std::size_t i = 0; i < r; ++i)
    for (std::size_t j = 0; j < w; ++j) out[i * w + j] = av[i * c + begin + j];
  return detail::make_result({r, w}, std::move(out), {&a},
                             [r, c, w, begin](detail::Node& self) {
                               auto& ga = self.inputs[0]->grad_buffer();
                               for (std::size_t i = 0; i < r; ++i)
                                 for (std::size_t j = 0; j < w; ++j)
                                   ga[i * c + begin + j] += self.grad[i * w + j];
                             });
}

inline Tensor concat_cols(const std::vector<Tensor>& parts) {
  if (parts.empty()) throw DimensionError("concat_cols of nothing");
  for (const auto& p : parts) detail::require_2d(p, "concat_cols");
  const std::size_t r = parts[0].rows();
  std::size_t total = 0;
  std::vector<std::size_t> offsets;
  for (const auto& p : parts) {
    if (p.rows() != r)
      throw DimensionError("concat_cols: row mismatch " +
                           shape_str(parts[0].shape()) + " vs " +
                           shape_str(p.shape()));
    offsets.push_back(total);
    total += p.cols();
  }
  std::vector<double> out(r * total);
  for (std::size_t k = 0; k < parts.size(); ++k) {
    const auto pv = parts[k].data();
    const std::size_t c = parts[k].cols();
    for (std::size_t i = 0; i < r; ++i)
      for (std::size_t j = 0; j < c; ++j)
        out[i * total + offsets[k] + j] = pv[i * c + j];
  }
  return detail::make_result_list(
      {r, total}, std::move(out), parts,
      [r, total, offsets](detail::Node& self) {
        for (std::size_t k = 0; k < self.inputs.size(); ++k) {
          auto& in = *self.inputs[k];
          if (!in.requires_grad) continue;
          auto& g = in.grad_buffer();
          const std::size_t c = in.shape[1];
          for (std::size_t i = 0; i < r; ++i)
            for (std::size_t j = 0; j < c; ++j)
              g[i * c + j] += self.grad[i * total + offsets[k] + j];
        }
      });
}

inline Tensor concat_rows(const std::vector<Tensor>& parts) {
  if (parts.empty()) throw DimensionError("concat_rows of nothing");
  for (const auto& p : parts) detail::require_2d(p, "concat_rows");
  const std::size_t c = parts[0].cols();
  std::size_t r = 0;
  std::vector<double> out;
  for (const auto& p : parts) {
    if (p.cols() != c)
      throw DimensionError("concat_rows: column mismatch " +
                           shape_str(parts[0].shape()) + " vs " +
                           shape_str(p.shape()));
    r += p.rows();
    out.insert(out.end(), p.data().begin(), p.data().end());
  }
  return detail::make_result_list({r, c}, std::move(out), parts,
                                  [](detail::Node& self) {
                                    std::size_t off = 0;
                                    for (auto& in : self.inputs) {
                                      const std::size_t n = in->value.size();
                                      if (in->requires_grad) {
                                        auto& g = in->grad_buffer();
                                        for (std::size_t i = 0; i < n; ++i)
                                          g[i] += self.grad[off + i];
                                      }
                                      off += n;
                                    }
                                  });
}

/// Gathers flat elements into a 1-D tensor.
inline Tensor select(const Tensor& a, std::vector<std::size_t> indices) {
  const auto av = a.data();
  std::vector<double> out(indices.size());
  for (std::size_t i = 0; i < indices.size(); ++i) {
    if (indices[i] >= av.size())
      throw DimensionError("select: index " + std::to_string(indices[i]) +
                           " out of range for " + shape_str(a.shape()));
    out[i] = av[indices[i]];
  }
  const std::size_t n = indices.size();
  return detail::make_result({n}, std::move(out), {&a},
                             [idx = std::move(indices)](detail::Node& self) {
                               auto& ga = self.inputs[0]->grad_buffer();
                               for (std::size_t i = 0; i < idx.size(); ++i)
                                 ga[idx[i]] += self.grad[i];
                             });
}

inline constexpr std::size_t kFillIndex = static_cast<std::size_t>(-1);

/// Like select, but kFillIndex positions take the constant `fill`.
inline Tensor select_fill(const Tensor& a, std::vector<std::size_t> indices, double fill) {
  const auto av = a.data();
  std::vector<double> out(indices.size());
  for (std::size_t i = 0; i < indices.size(); ++i) {
    if (indices[i] == kFillIndex) {
      out[i] = fill;
      continue;
    }
    if (indices[i] >= av.size())
      throw DimensionError("select_fill: index " + std::to_string(indices[i]) +
                           " out of range for " + shape_str(a.shape()));
    out[i] = av[indices[i]];
  }
  const std::size_t n = indices.size();
  return detail::make_result({n}, std::move(out), {&a},
                             [idx = std::move(indices)](detail::Node& self) {
                               auto& ga = self.inputs[0]->grad_buffer();
                               for (std::size_t i = 0; i < idx.size(); ++i)
                                 if (idx[i] != kFillIndex) ga[idx[i]] += self.grad[i];
                             });
}

/// Rows of `table` picked by `ids`.
inline Tensor embedding(const Tensor& table, std::span<const int> ids) {
  detail::require_2d(table, "embedding");
  const std::size_t v = table.rows(), d = table.cols();
  std::vector<std::size_t> rows_idx;
  rows_idx.reserve(ids.size());
  for (int id : ids) {
    if (id < 0 || static_cast<std::size_t>(id) >= v)
      throw ContractError("embedding: token id " + std::to_string(id) +
                          " outside vocabulary of size " + std::to_string(v));
    rows_idx.push_back(static_cast<std::size_t>(id));
  }
  std::vector<double> out(rows_idx.size() * d);
  const auto tv = table.data();
  for (std::size_t i = 0; i < rows_idx.size(); ++i)
    std::copy_n(tv.begin() + rows_idx[i] * d, d, out.begin() + i * d);
  const std::size_t n = rows_idx.size();
  return detail::make_result({n, d}, std::move(out), {&table},
                             [d, idx = std::move(rows_idx)](detail::Node& self) {
                               auto& g = self.inputs[0]->grad_buffer();
                               for (std::size_t i = 0; i < idx.size(); ++i)
                                 for (std::size_t j = 0; j < d; ++j)
                                   g[idx[i] * d + j] += self.grad[i * d + j];
                             });
}

/// out[t·U + u] = a[t] + b[u]; the transducer joint's (t, u) grid.
inline Tensor outer_add(const Tensor& a, const Tensor& b) {
  detail::require_2d(a, "outer_add");
  detail::require_2d(b, "outer_add");
  if (a.cols() != b.cols())
    throw DimensionError("outer_add: " + shape_str(a.shape()) + " and " +
                         shape_str(b.shape()));
  const std::size_t t = a.rows(), u = b.rows(), d = a.cols();
  std::vector<double> out(t * u * d);
  const auto av = a.data(), bv = b.data();
  for (std::size_t i = 0; i < t; ++i)
    for (std::size_t k = 0; k < u; ++k)
      for (std::size_t j = 0; j < d; ++j)
        out[(i * u + k) * d + j] = av[i * d + j] + bv[k * d + j];
  return detail::make_result(
      {t * u, d}, std::move(out), {&a, &b}, [t, u, d](detail::Node& self) {
        auto& na = *self.inputs[0];
        auto& nb = *self.inputs[1];
        if (na.requires_grad) {
          auto& ga = na.grad_buffer();
          for (std::size_t i = 0; i < t; ++i)
            for (std::size_t k = 0; k < u; ++k)
              for (std::size_t j = 0; j < d; ++j)
                ga[i * d + j] += self.grad[(i * u + k) * d + j];
        }
        if (nb.requires_grad) {
          auto& gb = nb.grad_buffer();
          for (std::size_t i = 0; i < t; ++i)
            for (std::size_t k = 0; k < u; ++k)
              for (std::size_t j = 0; j < d; ++j)
                gb[k * d + j] += self.grad[(i * u + k) * d + j];
        }
      });
}

// ---------------------------------------------------------------------------
// Normalizations.

/// Row-wise softmax, stabilized by the row maximum. Entries equal to -inf are
/// treated as masked out; a row with no finite entry is an error.
inline Tensor softmax_rows(const Tensor& x) {
  detail::require_2d(x, "softmax_rows");
  detail::check_no_nan(x, "softmax_rows");
  const std::size_t r = x.rows(), c = x.cols();
  const auto xv = x.data();
  std::vector<double> out(r * c);
  for (std::size_t i = 0; i < r; ++i) {
    const double* row = xv.data() + i * c;
    const double m = *std::max_element(row, row + c);
    if (m == -std::numeric_limits<double>::infinity())
      throw NumericError("softmax_rows: row " + std::to_string(i) +
                         " has no finite entry");
    double s = 0.0;
    for (std::size_t j = 0; j < c; ++j) {
      out[i * c + j] = std::exp(row[j] - m);
      s += out[i * c + j];
    }
    for (std::size_t j = 0; j < c; ++j) out[i * c + j] /= s;
  }
  return detail::make_result({r, c}, std::move(out), {&x},
                             [r, c](detail::Node& self) {
                               auto& gx = self.inputs[0]->grad_buffer();
                               for (std::size_t i = 0; i < r; ++i) {
                                 const double* y = self.value.data() + i * c;
                                 const double* g = self.grad.data() + i * c;
                                 double dot = 0.0;
                                 for (std::size_t j = 0; j < c; ++j)
                                   dot += y[j] * g[j];
                                 for (std::size_t j = 0; j < c; ++j)
                                   gx[i * c + j] += y[j] * (g[j] - dot);
                               }
                             });
}

/// Row-wise log-sum-exp, shape [rows × 1].
inline Tensor logsumexp_rows(const Tensor& x) {
  detail::require_2d(x, "logsumexp_rows");
  detail::check_no_nan(x, "logsumexp_rows");
  const std::size_t r = x.rows(), c = x.cols();
  const auto xv = x.data();
  std::vector<double> out(r);
  for (std::size_t i = 0; i < r; ++i) {
    const double* row = xv.data() + i * c;
    const double m = *std::max_element(row, row + c);
    double s = 0.0;
    for (std::size_t j = 0; j < c; ++j) s += std::exp(row[j] - m);
    out[i] = m + std::log(s);
  }
  return detail::make_result({r, 1}, std::move(out), {&x},
                             [r, c](detail::Node& self) {
                               auto& in = *self.inputs[0];
                               auto& gx = in.grad_buffer();
                               for (std::size_t i = 0; i < r; ++i)
                                 for (std::size_t j = 0; j < c; ++j)
                                   gx[i * c + j] +=
                                       self.grad[i] *
                                       std::exp(in.value[i * c + j] - self.value[i]);
                             });
}

inline Tensor log_softmax_rows(const Tensor& x) {
  detail::require_2d(x, "log_softmax_rows");
  detail::check_no_nan(x, "log_softmax_rows");
  const std::size_t r = x.rows(), c = x.cols();
  const auto xv = x.data();
  std::vector<double> out(r * c);
  for (std::size_t i = 0; i < r; ++i) {
    const double* row = xv.data() + i * c;
    const double m = *std::max_element(row, row + c);
    double s = 0.0;
    for (std::size_t j = 0; j < c; ++j) s += std::exp(row[j] - m);
    const double lse = m + std::log(s);
    for (std::size_t j = 0; j < c; ++j) out[i * c + j] = row[j] - lse;
  }
  return detail::make_result({r, c}, std::move(out), {&x},
                             [r, c](detail::Node& self) {
                               auto& gx = self.inputs[0]->grad_buffer();
                               for (std::size_t i = 0; i < r; ++i) {
                                 const double* y = self.value.data() + i * c;
                                 const double* g = self.grad.data() + i * c;
                                 double gs = 0.0;
                                 for (std::size_t j = 0; j < c; ++j) gs += g[j];
                                 for (std::size_t j = 0; j < c; ++j)
                                   gx[i * c + j] += g[j] - std::exp(y[j]) * gs;
                               }
                             });
}

/// Per-row layer normalization with learned gain and bias (both length cols).
inline Tensor layer_norm(const Tensor& x, const Tensor& gain, const Tensor& bias,
                         double eps = 1e-5) {
  detail::require_2d(x, "layer_norm");
  const std::size_t r = x.rows(), c = x.cols();
  if (gain.numel() != c || bias.numel() != c)
    throw DimensionError("layer_norm: input " + shape_str(x.shape()) +
                         " with gain " + shape_str(gain.shape()) +
                         " and bias " + shape_str(bias.shape()));
  const auto xv = x.data(), gv = gain.data(), bv = bias.data();
  std::vector<double> out(r * c), xhat(r * c), inv_std(r);
  for (std::size_t i = 0; i < r; ++i) {
    const double* row = xv.data() + i * c;
    double mu = 0.0;
    for (std::size_t j = 0; j < c; ++j) mu += row[j];
    mu /= static_cast<double>(c);
    double var = 0.0;
    for (std::size_t j = 0; j < c; ++j) var += (row[j] - mu) * (row[j] - mu);
    var /= static_cast<double>(c);
    inv_std[i] = 1.0 / std::sqrt(var + eps);
    for (std::size_t j = 0; j < c; ++j) {
      xhat[i * c + j] = (row[j] - mu) * inv_std[i];
      out[i * c + j] = xhat[i * c + j] * gv[j] + bv[j];
    }
  }
  return detail::make_result(
      {r, c}, std::move(out), {&x, &gain, &bias},
      [r, c, xhat = std::move(xhat), inv_std = std::move(inv_std)](
          detail::Node& self) {
        auto& nx = *self.inputs[0];
        auto& ng = *self.inputs[1];
        auto& nb = *self.inputs[2];
        const auto& g = self.grad;
        if (ng.requires_grad) {
          auto& gg = ng.grad_buffer();
          for (std::size_t i = 0; i < r; ++i)
            for (std::size_t j = 0; j < c; ++j)
              gg[j] += g[i * c + j] * xhat[i * c + j];
        }
        if (nb.requires_grad) {
          auto& gb = nb.grad_buffer();
          for (std::size_t i = 0; i < r; ++i)
            for (std::size_t j = 0; j < c; ++j) gb[j] += g[i * c + j];
        }
        if (nx.requires_grad) {
          auto& gx = nx.grad_buffer();
          std::vector<double> dxhat(c);
          for (std::size_t i = 0; i < r; ++i) {
            double m1 = 0.0, m2 = 0.0;
            for (std::size_t j = 0; j < c; ++j) {
              dxhat[j] = g[i * c + j] * ng.value[j];
              m1 += dxhat[j];
              m2 += dxhat[j] * xhat[i * c + j];
            }
            m1 /= static_cast<double>(c);
            m2 /= static_cast<double>(c);
            for (std::size_t j = 0; j < c; ++j)
              gx[i * c + j] +=
                  inv_std[i] * (dxhat[j] - m1 - xhat[i * c + j] * m2);
          }
        }
      });
}

// ---------------------------------------------------------------------------
// Verification helpers.

/// Max relative error between tape gradients and central differences:
/// max over coordinates of |analytic - numeric| / max(1, |analytic|, |numeric|).
/// `params` must be leaf tensors that `f` reads.
inline double grad_check(const std::function<Tensor()>& f,
                         std::span<Tensor> params, double eps) {
  if (!(eps >= 1e-7 && eps <= 1e-3))
    throw ContractError("grad_check: eps must lie in [1e-7, 1e-3]");
  for (auto& p : params) {
    if (!p.requires_grad())
      throw ContractError("grad_check: parameter does not require grad");
    p.zero_grad();
  }
  {
    Tape tape;
    Tensor y = f();
    if (!std::isfinite(y.item()))
      throw NumericError("grad_check: objective is not finite");
    tape.backward(y);
  }
  auto eval = [&f]() {
    const double v = f().item();
    if (!std::isfinite(v))
      throw NumericError("grad_check: objective is not finite");
    return v;
  };
  double worst = 0.0;
  for (auto& p : params) {
    const std::vector<double> analytic = p.grad();
    auto data = p.mutable_data();
    for (std::size_t i = 0; i < data.size(); ++i) {
      const double saved = data[i];
      data[i] = saved + eps;
      const double up = eval();
      data[i] = saved - eps;
      const double down = eval();
      data[i] = saved;
      const double numeric = (up - down) / (2.0 * eps);
      const double denom =
          std::max({1.0, std::abs(analytic[i]), std::abs(numeric)});
      worst = std::max(worst, std::abs(analytic[i] - numeric) / denom);
    }
    p.zero_grad();
  }
  return worst;
}

template <class Rng>
Tensor random_uniform(Shape shape, double lo, double hi, Rng& rng,
                      bool requires_grad = false) {
  std::uniform_real_distribution<double> dist(lo, hi);
  std::vector<double> v(shape_numel(shape));
  for (auto& x : v) x = dist(rng);
  Tensor t(std::move(shape), std::move(v));
  t.set_requires_grad(requires_grad);
  return t;
}

inline double max_abs_diff(const Tensor& a, const Tensor& b) {
  if (a.shape() != b.shape())
    throw DimensionError("max_abs_diff: " + shape_str(a.shape()) + " vs " +
                         shape_str(b.shape()));
  double m = 0.0;
  for (std::size_t i = 0; i < a.numel(); ++i)
    m = std::max(m, std::abs(a.data()[i] - b.data()[i]));
  return m;
}

inline bool bit_equal(const Tensor& a, const Tensor& b) {
  return a.shape() == b.shape() &&
         std::equal(a.data().begin(), a.data().end(), b.data().begin());
}

}  // namespace tsasr
