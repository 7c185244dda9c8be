// Copyright 2026 The bartlab Authors
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

// Minimal reverse-mode differentiation over 2-D tensors.
//
// A Tape records every op as a node holding its value and a closure that
// pushes the node's gradient back to its inputs. Ops are fused at the
// granularity the transformer needs (linear, layer norm, multi-head
// attention, softmax cross-entropy) so each backward is written once, by
// hand, and checked against finite differences in the test suite.

#pragma once

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <functional>
#include <limits>
#include <memory>
#include <numbers>
#include <span>
#include <vector>

#include "bartlab/error.hpp"
#include "bartlab/rng.hpp"
#include "bartlab/tensor.hpp"

namespace bartlab::nn {

struct Var {
  std::size_t id = 0;
};

template <typename T>
class Tape {
 public:
  /// Receives the gradient of the node the closure belongs to.
  using Backward = std::function<void(const Tensor<T>& dout)>;

  /// With record == false no backward closures are kept (inference).
  explicit Tape(bool record = true) : record_(record) {}

  Tape(const Tape&) = delete;
  Tape& operator=(const Tape&) = delete;

  bool recording() const noexcept { return record_; }

  Var constant(Tensor<T> value) { return push(std::move(value), false, {}); }
  Var parameter(Tensor<T> value) { return push(std::move(value), true, {}); }

  Var push(Tensor<T> value, bool needs_grad, Backward backward) {
    const bool ng = needs_grad && record_;
    nodes_.push_back(Node{std::move(value), {}, ng, ng ? std::move(backward) : Backward{}});
    return Var{nodes_.size() - 1};
  }

  const Tensor<T>& value(Var v) const { return nodes_[v.id].value; }
  bool needs_grad(Var v) const { return nodes_[v.id].needs_grad; }

  /// Gradient buffer, zero-filled on first touch.
  Tensor<T>& grad(Var v) {
    Node& n = nodes_[v.id];
    if (n.grad.shape != n.value.shape) n.grad = Tensor<T>(n.value.shape);
    return n.grad;
  }

  /// Seeds d(output)/d(output) = 1 and runs the closures in reverse order.
  void backward(Var output) {
    if (!record_) fail(Errc::kInvalidConfig, "backward on a non-recording tape");
    Tensor<T>& seed = grad(output);
    std::fill(seed.data.begin(), seed.data.end(), T(1));
    for (std::size_t i = output.id + 1; i-- > 0;) {
      Node& n = nodes_[i];
      if (n.backward && n.grad.size() == n.value.size() && n.grad.size() != 0) n.backward(n.grad);
    }
  }

 private:
  struct Node {
    Tensor<T> value;
    Tensor<T> grad;
    bool needs_grad;
    Backward backward;
  };

  std::vector<Node> nodes_;
  bool record_;
};

/// Layout of a batched attention call: rows are (batch, time) flattened.
struct AttentionShape {
  std::size_t batch = 0;
  std::size_t query_len = 0;
  std::size_t key_len = 0;
  std::size_t heads = 0;
};

// ---------------------------------------------------------------------------
// ops

/// out[i] = table[ids[i]].
template <typename T>
Var gather_rows(Tape<T>& tape, Var table, std::vector<int> ids) {
  const Tensor<T>& t = tape.value(table);
  const std::size_t d = t.cols();
  Tensor<T> out({ids.size(), d});
  for (std::size_t i = 0; i < ids.size(); ++i) {
    assert(ids[i] >= 0 && static_cast<std::size_t>(ids[i]) < t.rows());
    std::copy_n(t.row(static_cast<std::size_t>(ids[i])), d, out.row(i));
  }
  return tape.push(std::move(out), tape.needs_grad(table), [&tape, table, ids = std::move(ids), d](const Tensor<T>& dout) {
    Tensor<T>& g = tape.grad(table);
    for (std::size_t i = 0; i < ids.size(); ++i) {
      T* dst = g.row(static_cast<std::size_t>(ids[i]));
      const T* src = dout.row(i);
      for (std::size_t c = 0; c < d; ++c) dst[c] += src[c];
    }
  });
}

template <typename T>
Var add(Tape<T>& tape, Var a, Var b) {
  const Tensor<T>& x = tape.value(a);
  const Tensor<T>& y = tape.value(b);
  assert(x.shape == y.shape);
  Tensor<T> out(x.shape);
  for (std::size_t i = 0; i < out.size(); ++i) out.data[i] = x.data[i] + y.data[i];
  const bool ng = tape.needs_grad(a) || tape.needs_grad(b);
  return tape.push(std::move(out), ng, [&tape, a, b](const Tensor<T>& dout) {
    for (Var v : {a, b}) {
      if (!tape.needs_grad(v)) continue;
      Tensor<T>& g = tape.grad(v);
      for (std::size_t i = 0; i < g.size(); ++i) g.data[i] += dout.data[i];
    }
  });
}

/// y = x W^T + b with W stored [out, in] and an optional bias [out].
template <typename T>
Var linear(Tape<T>& tape, Var x, Var weight, const Var* bias) {
  const Tensor<T>& xv = tape.value(x);
  const Tensor<T>& w = tape.value(weight);
  const std::size_t n = xv.rows();
  const std::size_t in = xv.cols();
  const std::size_t out_dim = w.rows();
  assert(w.cols() == in);

  // Transposed copy so the inner loop is a contiguous axpy over outputs.
  std::vector<T> wt(in * out_dim);
  for (std::size_t o = 0; o < out_dim; ++o) {
    const T* wr = w.row(o);
    for (std::size_t i = 0; i < in; ++i) wt[i * out_dim + o] = wr[i];
  }
  Tensor<T> out({n, out_dim});
  for (std::size_t r = 0; r < n; ++r) {
    T* y = out.row(r);
    if (bias) {
      const Tensor<T>& b = tape.value(*bias);
      std::copy_n(b.data.data(), out_dim, y);
    }
    const T* xr = xv.row(r);
    for (std::size_t i = 0; i < in; ++i) {
      const T xi = xr[i];
      const T* wrow = wt.data() + i * out_dim;
      for (std::size_t o = 0; o < out_dim; ++o) y[o] += xi * wrow[o];
    }
  }
  const bool has_bias = bias != nullptr;
  const Var bvar = has_bias ? *bias : Var{};
  const bool ng = tape.needs_grad(x) || tape.needs_grad(weight) || (has_bias && tape.needs_grad(bvar));
  return tape.push(std::move(out), ng, [&tape, x, weight, has_bias, bvar, n, in, out_dim](const Tensor<T>& dout) {
    const Tensor<T>& xv = tape.value(x);
    const Tensor<T>& w = tape.value(weight);
    if (tape.needs_grad(x)) {
      Tensor<T>& dx = tape.grad(x);
      for (std::size_t r = 0; r < n; ++r) {
        const T* dy = dout.row(r);
        T* dxr = dx.row(r);
        for (std::size_t o = 0; o < out_dim; ++o) {
          const T g = dy[o];
          const T* wr = w.row(o);
          for (std::size_t i = 0; i < in; ++i) dxr[i] += g * wr[i];
        }
      }
    }
    if (tape.needs_grad(weight)) {
      Tensor<T>& dw = tape.grad(weight);
      for (std::size_t r = 0; r < n; ++r) {
        const T* dy = dout.row(r);
        const T* xr = xv.row(r);
        for (std::size_t o = 0; o < out_dim; ++o) {
          const T g = dy[o];
          T* dwr = dw.row(o);
          for (std::size_t i = 0; i < in; ++i) dwr[i] += g * xr[i];
        }
      }
    }
    if (has_bias && tape.needs_grad(bvar)) {
      Tensor<T>& db = tape.grad(bvar);
      for (std::size_t r = 0; r < n; ++r) {
        const T* dy = dout.row(r);
        for (std::size_t o = 0; o < out_dim; ++o) db.data[o] += dy[o];
      }
    }
  });
}

template <typename T>
Var linear(Tape<T>& tape, Var x, Var weight, Var bias) {
  return linear(tape, x, weight, &bias);
}

/// Row-wise layer normalization with learned gain and bias.
template <typename T>
Var layer_norm(Tape<T>& tape, Var x, Var gain, Var bias, T eps = T(1e-5)) {
  const Tensor<T>& xv = tape.value(x);
  const Tensor<T>& g = tape.value(gain);
  const Tensor<T>& b = tape.value(bias);
  const std::size_t n = xv.rows();
  const std::size_t d = xv.cols();
  auto xhat = std::make_shared<std::vector<T>>(xv.size());
  auto inv_std = std::make_shared<std::vector<T>>(n);
  Tensor<T> out(xv.shape);
  for (std::size_t r = 0; r < n; ++r) {
    const T* xr = xv.row(r);
    T mean = 0;
    for (std::size_t c = 0; c < d; ++c) mean += xr[c];
    mean /= static_cast<T>(d);
    T var = 0;
    for (std::size_t c = 0; c < d; ++c) var += (xr[c] - mean) * (xr[c] - mean);
    var /= static_cast<T>(d);
    const T inv = T(1) / std::sqrt(var + eps);
    (*inv_std)[r] = inv;
    T* h = xhat->data() + r * d;
    T* y = out.row(r);
    for (std::size_t c = 0; c < d; ++c) {
      h[c] = (xr[c] - mean) * inv;
      y[c] = h[c] * g.data[c] + b.data[c];
    }
  }
  const bool ng = tape.needs_grad(x) || tape.needs_grad(gain) || tape.needs_grad(bias);
  return tape.push(std::move(out), ng, [&tape, x, gain, bias, xhat, inv_std, n, d](const Tensor<T>& dout) {
    const Tensor<T>& g = tape.value(gain);
    if (tape.needs_grad(gain) || tape.needs_grad(bias)) {
      Tensor<T>& dg = tape.grad(gain);
      Tensor<T>& db = tape.grad(bias);
      for (std::size_t r = 0; r < n; ++r) {
        const T* dy = dout.row(r);
        const T* h = xhat->data() + r * d;
        for (std::size_t c = 0; c < d; ++c) {
          dg.data[c] += dy[c] * h[c];
          db.data[c] += dy[c];
        }
      }
    }
    if (!tape.needs_grad(x)) return;
    Tensor<T>& dx = tape.grad(x);
    std::vector<T> dh(d);
    for (std::size_t r = 0; r < n; ++r) {
      const T* dy = dout.row(r);
      const T* h = xhat->data() + r * d;
      T mean_dh = 0;
      T mean_dh_h = 0;
      for (std::size_t c = 0; c < d; ++c) {
        dh[c] = dy[c] * g.data[c];
        mean_dh += dh[c];
        mean_dh_h += dh[c] * h[c];
      }
      mean_dh /= static_cast<T>(d);
      mean_dh_h /= static_cast<T>(d);
      T* dxr = dx.row(r);
      const T inv = (*inv_std)[r];
      for (std::size_t c = 0; c < d; ++c) dxr[c] += inv * (dh[c] - mean_dh - h[c] * mean_dh_h);
    }
  });
}

/// Exact (erf) GELU.
template <typename T>
Var gelu(Tape<T>& tape, Var x) {
  const Tensor<T>& xv = tape.value(x);
  Tensor<T> out(xv.shape);
  for (std::size_t i = 0; i < xv.size(); ++i) {
    const T v = xv.data[i];
    out.data[i] = T(0.5) * v * (T(1) + std::erf(v * (T(0.5) * std::numbers::sqrt2_v<T>)));
  }
  return tape.push(std::move(out), tape.needs_grad(x), [&tape, x](const Tensor<T>& dout) {
    const Tensor<T>& xv = tape.value(x);
    Tensor<T>& dx = tape.grad(x);
    const T inv_sqrt_2pi = std::numbers::inv_sqrtpi_v<T> * (T(0.5) * std::numbers::sqrt2_v<T>);
    for (std::size_t i = 0; i < xv.size(); ++i) {
      const T v = xv.data[i];
      const T cdf = T(0.5) * (T(1) + std::erf(v * (T(0.5) * std::numbers::sqrt2_v<T>)));
      const T pdf = inv_sqrt_2pi * std::exp(T(-0.5) * v * v);
      dx.data[i] += dout.data[i] * (cdf + v * pdf);
    }
  });
}

/// Inverted dropout. rate == 0 returns x itself.
template <typename T>
Var dropout(Tape<T>& tape, Var x, double rate, RandomSource& rng) {
  if (rate <= 0.0) return x;
  const Tensor<T>& xv = tape.value(x);
  const T scale = static_cast<T>(1.0 / (1.0 - rate));
  auto mask = std::make_shared<std::vector<T>>(xv.size());
  Tensor<T> out(xv.shape);
  for (std::size_t i = 0; i < xv.size(); ++i) {
    (*mask)[i] = rng.uniform01() < rate ? T(0) : scale;
    out.data[i] = xv.data[i] * (*mask)[i];
  }
  return tape.push(std::move(out), tape.needs_grad(x), [&tape, x, mask](const Tensor<T>& dout) {
    Tensor<T>& dx = tape.grad(x);
    for (std::size_t i = 0; i < dx.size(); ++i) dx.data[i] += dout.data[i] * (*mask)[i];
  });
}

/// Multi-head scaled dot-product attention over pre-projected q, k, v.
///
/// q is [batch*query_len, d], k and v are [batch*key_len, d]; heads split d
/// evenly. key_valid[b*key_len + j] == 0 hides key j of batch row b. With
/// causal set, query i only sees keys j <= i. Hidden keys get probability
/// exactly 0. If probs_out is given it receives the attention weights as
/// [batch, heads, query_len, key_len].
template <typename T>
Var attention(Tape<T>& tape, Var q, Var k, Var v, const AttentionShape& shape,
              std::span<const std::uint8_t> key_valid, bool causal, std::vector<T>* probs_out = nullptr) {
  const Tensor<T>& qv = tape.value(q);
  const Tensor<T>& kv = tape.value(k);
  const Tensor<T>& vv = tape.value(v);
  const std::size_t d = qv.cols();
  const std::size_t hd = d / shape.heads;
  const std::size_t tq = shape.query_len;
  const std::size_t tk = shape.key_len;
  assert(qv.rows() == shape.batch * tq && kv.rows() == shape.batch * tk && hd * shape.heads == d);
  assert(key_valid.size() == shape.batch * tk);
  const T scale = T(1) / std::sqrt(static_cast<T>(hd));

  auto probs = std::make_shared<std::vector<T>>(shape.batch * shape.heads * tq * tk, T(0));
  Tensor<T> out({shape.batch * tq, d});
  std::vector<T> scores(tk);
  for (std::size_t b = 0; b < shape.batch; ++b) {
    for (std::size_t h = 0; h < shape.heads; ++h) {
      for (std::size_t i = 0; i < tq; ++i) {
        const T* qi = qv.row(b * tq + i) + h * hd;
        T* p = probs->data() + ((b * shape.heads + h) * tq + i) * tk;
        T max_score = -std::numeric_limits<T>::infinity();
        for (std::size_t j = 0; j < tk; ++j) {
          if (!key_valid[b * tk + j] || (causal && j > i)) continue;
          const T* kj = kv.row(b * tk + j) + h * hd;
          T s = 0;
          for (std::size_t c = 0; c < hd; ++c) s += qi[c] * kj[c];
          scores[j] = s * scale;
          max_score = std::max(max_score, scores[j]);
        }
        if (max_score == -std::numeric_limits<T>::infinity()) continue;  // no visible key
        T total = 0;
        for (std::size_t j = 0; j < tk; ++j) {
          if (!key_valid[b * tk + j] || (causal && j > i)) continue;
          p[j] = std::exp(scores[j] - max_score);
          total += p[j];
        }
        T* o = out.row(b * tq + i) + h * hd;
        for (std::size_t j = 0; j < tk; ++j) {
          if (p[j] == T(0)) continue;
          p[j] /= total;
          const T* vj = vv.row(b * tk + j) + h * hd;
          for (std::size_t c = 0; c < hd; ++c) o[c] += p[j] * vj[c];
        }
      }
    }
  }
  if (probs_out) *probs_out = *probs;
  const bool ng = tape.needs_grad(q) || tape.needs_grad(k) || tape.needs_grad(v);
  return tape.push(std::move(out), ng, [&tape, q, k, v, shape, probs, hd, scale](const Tensor<T>& dout) {
    const Tensor<T>& qv = tape.value(q);
    const Tensor<T>& kv = tape.value(k);
    const Tensor<T>& vv = tape.value(v);
    Tensor<T>& dq = tape.grad(q);
    Tensor<T>& dk = tape.grad(k);
    Tensor<T>& dv = tape.grad(v);
    const std::size_t tq = shape.query_len;
    const std::size_t tk = shape.key_len;
    std::vector<T> dp(tk);
    for (std::size_t b = 0; b < shape.batch; ++b) {
      for (std::size_t h = 0; h < shape.heads; ++h) {
        for (std::size_t i = 0; i < tq; ++i) {
          const T* p = probs->data() + ((b * shape.heads + h) * tq + i) * tk;
          const T* go = dout.row(b * tq + i) + h * hd;
          T dot = 0;
          for (std::size_t j = 0; j < tk; ++j) {
            dp[j] = 0;
            if (p[j] == T(0)) continue;
            const T* vj = vv.row(b * tk + j) + h * hd;
            T* dvj = dv.row(b * tk + j) + h * hd;
            for (std::size_t c = 0; c < hd; ++c) {
              dp[j] += go[c] * vj[c];
              dvj[c] += p[j] * go[c];
            }
            dot += p[j] * dp[j];
          }
          const T* qi = qv.row(b * tq + i) + h * hd;
          T* dqi = dq.row(b * tq + i) + h * hd;
          for (std::size_t j = 0; j < tk; ++j) {
            if (p[j] == T(0)) continue;
            const T ds = p[j] * (dp[j] - dot) * scale;
            const T* kj = kv.row(b * tk + j) + h * hd;
            T* dkj = dk.row(b * tk + j) + h * hd;
            for (std::size_t c = 0; c < hd; ++c) {
              dqi[c] += ds * kj[c];
              dkj[c] += ds * qi[c];
            }
          }
        }
      }
    }
  });
}

/// Numerically stable log-softmax of each row, written into out.
template <typename T>
void log_softmax_row(const T* logits, std::size_t n, T* out) {
  T max_v = -std::numeric_limits<T>::infinity();
  for (std::size_t i = 0; i < n; ++i) max_v = std::max(max_v, logits[i]);
  T total = 0;
  for (std::size_t i = 0; i < n; ++i) total += std::exp(logits[i] - max_v);
  const T lse = max_v + std::log(total);
  for (std::size_t i = 0; i < n; ++i) out[i] = logits[i] - lse;
}

/// Mean cross-entropy over rows whose target is not pad_id. Returns a
/// [1]-shaped node. Throws AllPadTarget when nothing is supervised.
template <typename T>
Var cross_entropy(Tape<T>& tape, Var logits, std::vector<int> targets, int pad_id) {
  const Tensor<T>& lv = tape.value(logits);
  const std::size_t n = lv.rows();
  const std::size_t vocab = lv.cols();
  assert(targets.size() == n);
  std::size_t count = 0;
  for (int t : targets) count += t != pad_id;
  if (count == 0) fail(Errc::kAllPadTarget, "no supervised target positions");

  auto log_probs = std::make_shared<std::vector<T>>(lv.size());
  double total = 0.0;
  for (std::size_t r = 0; r < n; ++r) {
    if (targets[r] == pad_id) continue;
    T* lp = log_probs->data() + r * vocab;
    log_softmax_row(lv.row(r), vocab, lp);
    total -= static_cast<double>(lp[static_cast<std::size_t>(targets[r])]);
  }
  Tensor<T> out({1}, static_cast<T>(total / static_cast<double>(count)));
  return tape.push(std::move(out), tape.needs_grad(logits),
                   [&tape, logits, targets = std::move(targets), pad_id, log_probs, count, vocab](const Tensor<T>& dout) {
                     Tensor<T>& dl = tape.grad(logits);
                     const T scale = dout.data[0] / static_cast<T>(count);
                     for (std::size_t r = 0; r < targets.size(); ++r) {
                       if (targets[r] == pad_id) continue;
                       const T* lp = log_probs->data() + r * vocab;
                       T* g = dl.row(r);
                       for (std::size_t c = 0; c < vocab; ++c) g[c] += std::exp(lp[c]) * scale;
                       g[static_cast<std::size_t>(targets[r])] -= scale;
                     }
                   });
}

}  // namespace bartlab::nn
