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

#include "bartlab/model.hpp"

#include <algorithm>
#include <cmath>

#include "bartlab/autograd.hpp"
#include "bartlab/error.hpp"

namespace bartlab {

using nn::Shape;
using nn::Tape;
using nn::Tensor;
using nn::Var;

void ModelConfig::validate() const {
  auto positive = [](std::size_t v, const char* name) {
    if (v == 0) fail(Errc::kInvalidConfig, std::string(name) + " must be at least 1");
  };
  positive(enc_layers, "enc_layers");
  positive(dec_layers, "dec_layers");
  positive(d_model, "d_model");
  positive(n_heads, "n_heads");
  positive(d_ffn, "d_ffn");
  positive(vocab_size, "vocab_size");
  positive(max_positions, "max_positions");
  if (d_model % n_heads != 0) fail(Errc::kInvalidConfig, "d_model must be divisible by n_heads");
  if (!(dropout >= 0.0 && dropout < 1.0)) fail(Errc::kInvalidConfig, "dropout must lie in [0, 1)");
}

std::uint64_t count_params(const ModelConfig& cfg) {
  cfg.validate();
  const std::uint64_t v = cfg.vocab_size;
  const std::uint64_t d = cfg.d_model;
  const std::uint64_t f = cfg.d_ffn;
  const std::uint64_t p = cfg.max_positions;
  const std::uint64_t attn = 4 * d * d + 4 * d;
  const std::uint64_t ffn = 2 * d * f + d + f;
  const std::uint64_t norm = 2 * d;
  const std::uint64_t enc_layer = attn + ffn + 2 * norm;
  const std::uint64_t dec_layer = 2 * attn + ffn + 3 * norm;
  const std::uint64_t finals = cfg.final_layernorm ? 2 * norm : 0;
  return v * d + 2 * p * d + cfg.enc_layers * enc_layer + cfg.dec_layers * dec_layer + finals;
}

ParamLayout ParamLayout::build(const ModelConfig& cfg) {
  cfg.validate();
  ParamLayout layout;
  const std::size_t d = cfg.d_model;
  auto add = [&](std::string name, Shape shape) {
    layout.names.push_back(std::move(name));
    layout.shapes.push_back(std::move(shape));
    return layout.names.size() - 1;
  };
  auto attn = [&](const std::string& prefix) {
    AttnSlots s{};
    s.wq = add(prefix + ".q_proj.weight", {d, d});
    s.bq = add(prefix + ".q_proj.bias", {d});
    s.wk = add(prefix + ".k_proj.weight", {d, d});
    s.bk = add(prefix + ".k_proj.bias", {d});
    s.wv = add(prefix + ".v_proj.weight", {d, d});
    s.bv = add(prefix + ".v_proj.bias", {d});
    s.wo = add(prefix + ".out_proj.weight", {d, d});
    s.bo = add(prefix + ".out_proj.bias", {d});
    return s;
  };
  auto norm = [&](const std::string& prefix) {
    return NormSlots{add(prefix + ".weight", {d}), add(prefix + ".bias", {d})};
  };
  auto ffn = [&](const std::string& prefix) {
    FfnSlots s{};
    s.w1 = add(prefix + ".fc1.weight", {cfg.d_ffn, d});
    s.b1 = add(prefix + ".fc1.bias", {cfg.d_ffn});
    s.w2 = add(prefix + ".fc2.weight", {d, cfg.d_ffn});
    s.b2 = add(prefix + ".fc2.bias", {d});
    return s;
  };

  layout.tok_emb = add("shared.weight", {cfg.vocab_size, d});
  layout.enc_pos = add("encoder.embed_positions.weight", {cfg.max_positions, d});
  layout.dec_pos = add("decoder.embed_positions.weight", {cfg.max_positions, d});
  for (std::size_t l = 0; l < cfg.enc_layers; ++l) {
    const std::string p = "encoder.layers." + std::to_string(l);
    EncoderSlots s{};
    s.self_attn = attn(p + ".self_attn");
    s.self_norm = norm(p + ".self_attn_layer_norm");
    s.ffn = ffn(p);
    s.ffn_norm = norm(p + ".final_layer_norm");
    layout.encoder.push_back(s);
  }
  for (std::size_t l = 0; l < cfg.dec_layers; ++l) {
    const std::string p = "decoder.layers." + std::to_string(l);
    DecoderSlots s{};
    s.self_attn = attn(p + ".self_attn");
    s.self_norm = norm(p + ".self_attn_layer_norm");
    s.cross_attn = attn(p + ".encoder_attn");
    s.cross_norm = norm(p + ".encoder_attn_layer_norm");
    s.ffn = ffn(p);
    s.ffn_norm = norm(p + ".final_layer_norm");
    layout.decoder.push_back(s);
  }
  if (cfg.final_layernorm) {
    layout.enc_final = norm("encoder.layer_norm");
    layout.dec_final = norm("decoder.layer_norm");
  }
  return layout;
}

template <typename T>
std::uint64_t Parameters<T>::scalar_count() const {
  std::uint64_t total = 0;
  for (const auto& t : tensors) total += t.size();
  return total;
}

template <typename T>
Parameters<T> Parameters<T>::zeros_like(const Parameters& other) {
  Parameters out;
  out.layout = other.layout;
  for (const auto& t : other.tensors) out.tensors.emplace_back(t.shape);
  return out;
}

template <typename T>
Parameters<T> init_params(const ModelConfig& cfg, std::uint64_t seed) {
  Parameters<T> params;
  params.layout = ParamLayout::build(cfg);
  SplitMix64 rng(seed);
  for (std::size_t i = 0; i < params.layout.names.size(); ++i) {
    const std::string& name = params.layout.names[i];
    Tensor<T> t(params.layout.shapes[i]);
    const bool is_norm = name.find("layer_norm") != std::string::npos;
    const bool is_bias = name.ends_with(".bias");
    if (is_norm && !is_bias) {
      std::fill(t.data.begin(), t.data.end(), T(1));
    } else if (!is_bias) {
      for (T& x : t.data) x = static_cast<T>(0.02 * rng.normal());
    }
    params.tensors.push_back(std::move(t));
  }
  return params;
}

std::size_t Batch::supervised_tokens() const {
  return static_cast<std::size_t>(std::count_if(targets.begin(), targets.end(), [](int t) { return t != special::kPad; }));
}

Batch make_batch(std::span<const TokenSequence> sources, std::span<const TokenSequence> targets) {
  if (sources.size() != targets.size()) fail(Errc::kLengthMismatch, "sources and targets differ in count");
  Batch b;
  b.batch = sources.size();
  for (std::size_t i = 0; i < b.batch; ++i) {
    const auto& t = targets[i].ids;
    if (t.size() < 2 || t.front() != special::kBos || t.back() != special::kEos) {
      fail(Errc::kInvalidConfig, "target sequences must be framed by bos ... eos");
    }
    b.src_len = std::max(b.src_len, sources[i].ids.size());
    b.tgt_len = std::max(b.tgt_len, t.size() - 1);
  }
  b.src_ids.assign(b.batch * b.src_len, special::kPad);
  b.src_valid.assign(b.batch * b.src_len, 0);
  b.dec_in.assign(b.batch * b.tgt_len, special::kPad);
  b.dec_valid.assign(b.batch * b.tgt_len, 0);
  b.targets.assign(b.batch * b.tgt_len, special::kPad);
  for (std::size_t i = 0; i < b.batch; ++i) {
    const auto& s = sources[i].ids;
    for (std::size_t t = 0; t < s.size(); ++t) {
      b.src_ids[i * b.src_len + t] = s[t];
      b.src_valid[i * b.src_len + t] = 1;
    }
    const auto& g = targets[i].ids;
    for (std::size_t t = 0; t + 1 < g.size(); ++t) {
      b.dec_in[i * b.tgt_len + t] = g[t];
      b.dec_valid[i * b.tgt_len + t] = 1;
      b.targets[i * b.tgt_len + t] = g[t + 1];
    }
  }
  return b;
}

namespace {

void check_ids(std::span<const int> ids, std::size_t vocab) {
  for (int id : ids) {
    if (id < 0 || static_cast<std::size_t>(id) >= vocab) {
      fail(Errc::kInvalidId, "token id " + std::to_string(id) + " outside model vocabulary");
    }
  }
}

std::vector<int> position_ids(std::size_t batch, std::size_t len) {
  std::vector<int> ids(batch * len);
  for (std::size_t b = 0; b < batch; ++b) {
    for (std::size_t t = 0; t < len; ++t) ids[b * len + t] = static_cast<int>(t);
  }
  return ids;
}

// Builds the encoder-decoder graph on a tape. Post-norm residual blocks:
// x = LN(x + Dropout(Sublayer(x))).
template <typename T>
class Graph {
 public:
  Graph(Tape<T>& tape, const Parameters<T>& params, const ModelConfig& cfg, const ForwardOptions& opts,
        bool as_parameters)
      : tape_(tape), cfg_(cfg), layout_(params.layout), opts_(opts) {
    vars_.reserve(params.tensors.size());
    for (const auto& t : params.tensors) vars_.push_back(as_parameters ? tape.parameter(t) : tape.constant(t));
  }

  Var param(std::size_t slot) const { return vars_[slot]; }

  Var encoder(const std::vector<int>& ids, std::span<const std::uint8_t> valid, std::size_t batch, std::size_t len) {
    Var x = embed(ids, layout_.enc_pos, batch, len);
    const nn::AttentionShape shape{batch, len, len, cfg_.n_heads};
    for (const EncoderSlots& s : layout_.encoder) {
      Var a = drop(attention_block(s.self_attn, x, x, shape, valid, false));
      x = norm(s.self_norm, nn::add(tape_, x, a));
      Var f = drop(feed_forward(s.ffn, x));
      x = norm(s.ffn_norm, nn::add(tape_, x, f));
    }
    if (layout_.enc_final) x = norm(*layout_.enc_final, x);
    return x;
  }

  Var decoder(const std::vector<int>& ids, std::span<const std::uint8_t> valid, std::size_t batch, std::size_t len,
              Var memory, std::span<const std::uint8_t> memory_valid, std::size_t memory_len) {
    Var x = embed(ids, layout_.dec_pos, batch, len);
    const nn::AttentionShape self_shape{batch, len, len, cfg_.n_heads};
    const nn::AttentionShape cross_shape{batch, len, memory_len, cfg_.n_heads};
    for (const DecoderSlots& s : layout_.decoder) {
      Var a = drop(attention_block(s.self_attn, x, x, self_shape, valid, true));
      x = norm(s.self_norm, nn::add(tape_, x, a));
      Var c = drop(attention_block(s.cross_attn, x, memory, cross_shape, memory_valid, false));
      x = norm(s.cross_norm, nn::add(tape_, x, c));
      Var f = drop(feed_forward(s.ffn, x));
      x = norm(s.ffn_norm, nn::add(tape_, x, f));
    }
    if (layout_.dec_final) x = norm(*layout_.dec_final, x);
    return x;
  }

  /// Output projection through the shared embedding.
  Var project(Var hidden) { return nn::linear(tape_, hidden, vars_[layout_.tok_emb], nullptr); }

 private:
  Var embed(const std::vector<int>& ids, std::size_t pos_slot, std::size_t batch, std::size_t len) {
    Var tok = nn::gather_rows(tape_, vars_[layout_.tok_emb], ids);
    Var pos = nn::gather_rows(tape_, vars_[pos_slot], position_ids(batch, len));
    return drop(nn::add(tape_, tok, pos));
  }

  Var attention_block(const AttnSlots& s, Var query_in, Var kv_in, const nn::AttentionShape& shape,
                      std::span<const std::uint8_t> key_valid, bool causal) {
    Var q = nn::linear(tape_, query_in, vars_[s.wq], vars_[s.bq]);
    Var k = nn::linear(tape_, kv_in, vars_[s.wk], vars_[s.bk]);
    Var v = nn::linear(tape_, kv_in, vars_[s.wv], vars_[s.bv]);
    Var ctx = nn::attention(tape_, q, k, v, shape, key_valid, causal);
    return nn::linear(tape_, ctx, vars_[s.wo], vars_[s.bo]);
  }

  Var feed_forward(const FfnSlots& s, Var x) {
    Var h = nn::gelu(tape_, nn::linear(tape_, x, vars_[s.w1], vars_[s.b1]));
    return nn::linear(tape_, h, vars_[s.w2], vars_[s.b2]);
  }

  Var norm(const NormSlots& s, Var x) { return nn::layer_norm(tape_, x, vars_[s.gain], vars_[s.bias]); }

  Var drop(Var x) {
    if (!opts_.train || opts_.dropout <= 0.0) return x;
    if (!opts_.rng) fail(Errc::kInvalidConfig, "dropout in training mode needs a random source");
    return nn::dropout(tape_, x, opts_.dropout, *opts_.rng);
  }

  Tape<T>& tape_;
  const ModelConfig& cfg_;
  const ParamLayout& layout_;
  const ForwardOptions& opts_;
  std::vector<Var> vars_;
};

void check_batch(const ModelConfig& cfg, const Batch& batch) {
  if (batch.src_len > cfg.max_positions || batch.tgt_len > cfg.max_positions) {
    fail(Errc::kSequenceTooLong, "sequence length " + std::to_string(std::max(batch.src_len, batch.tgt_len)) +
                                     " exceeds max_positions " + std::to_string(cfg.max_positions));
  }
  check_ids(batch.src_ids, cfg.vocab_size);
  check_ids(batch.dec_in, cfg.vocab_size);
  check_ids(batch.targets, cfg.vocab_size);
}

template <typename T>
Var build_logits(Graph<T>& g, const Batch& batch) {
  Var memory = g.encoder(batch.src_ids, batch.src_valid, batch.batch, batch.src_len);
  Var hidden = g.decoder(batch.dec_in, batch.dec_valid, batch.batch, batch.tgt_len, memory, batch.src_valid,
                         batch.src_len);
  return g.project(hidden);
}

}  // namespace

template <typename T>
Tensor<T> forward(const Parameters<T>& params, const ModelConfig& cfg, const Batch& batch,
                  const ForwardOptions& opts) {
  check_batch(cfg, batch);
  Tape<T> tape(false);
  Graph<T> g(tape, params, cfg, opts, false);
  return tape.value(build_logits(g, batch));
}

template <typename T>
Tensor<T> decoder_states(const Parameters<T>& params, const ModelConfig& cfg, const Batch& batch) {
  check_batch(cfg, batch);
  Tape<T> tape(false);
  const ForwardOptions opts;
  Graph<T> g(tape, params, cfg, opts, false);
  Var memory = g.encoder(batch.src_ids, batch.src_valid, batch.batch, batch.src_len);
  return tape.value(g.decoder(batch.dec_in, batch.dec_valid, batch.batch, batch.tgt_len, memory, batch.src_valid,
                              batch.src_len));
}

template <typename T>
double loss(const Tensor<T>& logits, std::span<const int> targets, int pad_id) {
  assert(logits.rows() == targets.size());
  const std::size_t vocab = logits.cols();
  std::vector<T> lp(vocab);
  double total = 0.0;
  std::size_t count = 0;
  for (std::size_t r = 0; r < targets.size(); ++r) {
    if (targets[r] == pad_id) continue;
    nn::log_softmax_row(logits.row(r), vocab, lp.data());
    total -= static_cast<double>(lp[static_cast<std::size_t>(targets[r])]);
    ++count;
  }
  if (count == 0) fail(Errc::kAllPadTarget, "no supervised target positions");
  return total / static_cast<double>(count);
}

template <typename T>
LossAndGrad<T> backward(const Parameters<T>& params, const ModelConfig& cfg, const Batch& batch,
                        const ForwardOptions& opts) {
  check_batch(cfg, batch);
  Tape<T> tape(true);
  Graph<T> g(tape, params, cfg, opts, true);
  Var logits = build_logits(g, batch);
  Var l = nn::cross_entropy(tape, logits, batch.targets, special::kPad);
  tape.backward(l);
  LossAndGrad<T> out;
  out.loss = static_cast<double>(tape.value(l).data[0]);
  out.tokens = batch.supervised_tokens();
  out.grads.layout = params.layout;
  out.grads.tensors.reserve(params.tensors.size());
  for (std::size_t i = 0; i < params.tensors.size(); ++i) out.grads.tensors.push_back(std::move(tape.grad(g.param(i))));
  return out;
}

template <typename T>
double token_accuracy(const Tensor<T>& logits, std::span<const int> targets, int pad_id) {
  std::size_t correct = 0;
  std::size_t count = 0;
  for (std::size_t r = 0; r < targets.size(); ++r) {
    if (targets[r] == pad_id) continue;
    const T* row = logits.row(r);
    const auto best = static_cast<int>(std::max_element(row, row + logits.cols()) - row);
    correct += best == targets[r];
    ++count;
  }
  return count == 0 ? 0.0 : static_cast<double>(correct) / static_cast<double>(count);
}

template <typename T>
EncodedSource<T> encode_source(const Parameters<T>& params, const ModelConfig& cfg, std::span<const int> src_ids) {
  if (src_ids.size() > cfg.max_positions) fail(Errc::kSequenceTooLong, "source longer than max_positions");
  check_ids(src_ids, cfg.vocab_size);
  Tape<T> tape(false);
  const ForwardOptions opts;
  Graph<T> g(tape, params, cfg, opts, false);
  EncodedSource<T> out;
  out.valid.assign(src_ids.size(), 1);
  out.memory = tape.value(g.encoder(std::vector<int>(src_ids.begin(), src_ids.end()), out.valid, 1, src_ids.size()));
  return out;
}

template <typename T>
std::vector<std::vector<double>> next_token_log_probs(const Parameters<T>& params, const ModelConfig& cfg,
                                                      const EncodedSource<T>& source,
                                                      const std::vector<std::vector<int>>& prefixes) {
  if (prefixes.empty()) return {};
  const std::size_t batch = prefixes.size();
  const std::size_t len = prefixes.front().size();
  if (len == 0 || len > cfg.max_positions) fail(Errc::kSequenceTooLong, "decoder prefix length out of range");
  std::vector<int> ids;
  ids.reserve(batch * len);
  for (const auto& p : prefixes) {
    if (p.size() != len) fail(Errc::kInvalidConfig, "prefixes must share one length");
    check_ids(p, cfg.vocab_size);
    ids.insert(ids.end(), p.begin(), p.end());
  }
  const std::size_t src_len = source.valid.size();
  const std::size_t d = cfg.d_model;
  Tensor<T> memory({batch * src_len, d});
  std::vector<std::uint8_t> memory_valid;
  for (std::size_t b = 0; b < batch; ++b) {
    std::copy(source.memory.data.begin(), source.memory.data.end(), memory.data.begin() + static_cast<std::ptrdiff_t>(b * src_len * d));
    memory_valid.insert(memory_valid.end(), source.valid.begin(), source.valid.end());
  }

  Tape<T> tape(false);
  const ForwardOptions opts;
  Graph<T> g(tape, params, cfg, opts, false);
  const std::vector<std::uint8_t> dec_valid(batch * len, 1);
  Var hidden = g.decoder(ids, dec_valid, batch, len, tape.constant(std::move(memory)), memory_valid, src_len);
  const Tensor<T>& h = tape.value(hidden);
  Tensor<T> last({batch, d});
  for (std::size_t b = 0; b < batch; ++b) std::copy_n(h.row(b * len + len - 1), d, last.row(b));
  const Tensor<T>& logits = tape.value(g.project(tape.constant(std::move(last))));

  std::vector<std::vector<double>> out(batch);
  std::vector<T> lp(logits.cols());
  for (std::size_t b = 0; b < batch; ++b) {
    nn::log_softmax_row(logits.row(b), logits.cols(), lp.data());
    out[b].assign(lp.begin(), lp.end());
  }
  return out;
}

#define BARTLAB_INSTANTIATE(T)                                                                                  \
  template struct Parameters<T>;                                                                                \
  template Parameters<T> init_params<T>(const ModelConfig&, std::uint64_t);                                     \
  template Tensor<T> forward<T>(const Parameters<T>&, const ModelConfig&, const Batch&, const ForwardOptions&);  \
  template Tensor<T> decoder_states<T>(const Parameters<T>&, const ModelConfig&, const Batch&);             \
  template double loss<T>(const Tensor<T>&, std::span<const int>, int);                                         \
  template LossAndGrad<T> backward<T>(const Parameters<T>&, const ModelConfig&, const Batch&,                   \
                                      const ForwardOptions&);                                                   \
  template double token_accuracy<T>(const Tensor<T>&, std::span<const int>, int);                               \
  template EncodedSource<T> encode_source<T>(const Parameters<T>&, const ModelConfig&, std::span<const int>);   \
  template std::vector<std::vector<double>> next_token_log_probs<T>(                                            \
      const Parameters<T>&, const ModelConfig&, const EncodedSource<T>&, const std::vector<std::vector<int>>&);

BARTLAB_INSTANTIATE(float)
BARTLAB_INSTANTIATE(double)

#undef BARTLAB_INSTANTIATE

}  // namespace bartlab
