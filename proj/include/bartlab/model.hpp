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

#pragma once

#include <cstdint>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include "bartlab/rng.hpp"
#include "bartlab/tensor.hpp"
#include "bartlab/tokenizer.hpp"

namespace bartlab {

/// Encoder-decoder hyperparameters. Defaults are the base-size shape
/// (6 + 6 layers, 768 wide).
struct ModelConfig {
  std::size_t enc_layers = 6;
  std::size_t dec_layers = 6;
  std::size_t d_model = 768;
  std::size_t n_heads = 12;
  std::size_t d_ffn = 3072;
  std::size_t vocab_size = 50000;
  std::size_t max_positions = 1024;
  double dropout = 0.1;
  bool final_layernorm = true;

  void validate() const;
  bool operator==(const ModelConfig&) const = default;
};

/// Exact number of learnable scalars for cfg.
std::uint64_t count_params(const ModelConfig& cfg);

struct AttnSlots {
  std::size_t wq, bq, wk, bk, wv, bv, wo, bo;
};
struct NormSlots {
  std::size_t gain, bias;
};
struct FfnSlots {
  std::size_t w1, b1, w2, b2;
};
struct EncoderSlots {
  AttnSlots self_attn;
  NormSlots self_norm;
  FfnSlots ffn;
  NormSlots ffn_norm;
};
struct DecoderSlots {
  AttnSlots self_attn;
  NormSlots self_norm;
  AttnSlots cross_attn;
  NormSlots cross_norm;
  FfnSlots ffn;
  NormSlots ffn_norm;
};

/// Index of every parameter tensor in the flat tensor list, plus names and
/// shapes. The token embedding is shared by the encoder input, the decoder
/// input and the output projection.
struct ParamLayout {
  std::size_t tok_emb = 0;
  std::size_t enc_pos = 0;
  std::size_t dec_pos = 0;
  std::vector<EncoderSlots> encoder;
  std::vector<DecoderSlots> decoder;
  std::optional<NormSlots> enc_final;
  std::optional<NormSlots> dec_final;
  std::vector<std::string> names;
  std::vector<nn::Shape> shapes;

  static ParamLayout build(const ModelConfig& cfg);
};

template <typename T>
struct Parameters {
  ParamLayout layout;
  std::vector<nn::Tensor<T>> tensors;

  nn::Tensor<T>& operator[](std::size_t slot) { return tensors[slot]; }
  const nn::Tensor<T>& operator[](std::size_t slot) const { return tensors[slot]; }

  std::uint64_t scalar_count() const;

  /// Same layout, all zeros.
  static Parameters zeros_like(const Parameters& other);
  bool operator==(const Parameters& other) const { return tensors == other.tensors; }
};

/// N(0, 0.02) weights and embeddings, zero biases, unit layer-norm gains.
template <typename T>
Parameters<T> init_params(const ModelConfig& cfg, std::uint64_t seed);

template <typename To, typename From>
Parameters<To> cast_params(const Parameters<From>& src) {
  Parameters<To> out;
  out.layout = src.layout;
  for (const auto& t : src.tensors) out.tensors.push_back(nn::tensor_cast<To>(t));
  return out;
}

/// Padded [batch, time] id matrices. The decoder input is the target
/// shifted right, beginning with bos; pad positions hold pad ids.
struct Batch {
  std::size_t batch = 0;
  std::size_t src_len = 0;
  std::size_t tgt_len = 0;
  std::vector<int> src_ids;
  std::vector<std::uint8_t> src_valid;
  std::vector<int> dec_in;
  std::vector<std::uint8_t> dec_valid;
  std::vector<int> targets;

  std::size_t supervised_tokens() const;
};

/// Builds a batch from source sequences and bos...eos target sequences.
Batch make_batch(std::span<const TokenSequence> sources, std::span<const TokenSequence> targets);

struct ForwardOptions {
  bool train = false;
  double dropout = 0.0;            // rate used when train is set
  RandomSource* rng = nullptr;     // required when train && dropout > 0
};

/// Logits [batch * tgt_len, vocab] (row-major over batch then time).
template <typename T>
nn::Tensor<T> forward(const Parameters<T>& params, const ModelConfig& cfg, const Batch& batch,
                      const ForwardOptions& opts = {});

/// Final decoder hidden states [batch * tgt_len, d_model], before the
/// output projection.
template <typename T>
nn::Tensor<T> decoder_states(const Parameters<T>& params, const ModelConfig& cfg, const Batch& batch);

/// Mean token cross-entropy over non-pad targets, stable log-softmax.
template <typename T>
double loss(const nn::Tensor<T>& logits, std::span<const int> targets, int pad_id);

template <typename T>
struct LossAndGrad {
  double loss = 0.0;
  std::size_t tokens = 0;
  Parameters<T> grads;
};

/// Loss and exact parameter gradients for one batch.
template <typename T>
LossAndGrad<T> backward(const Parameters<T>& params, const ModelConfig& cfg, const Batch& batch,
                        const ForwardOptions& opts = {});

/// Token-level accuracy of argmax predictions on non-pad targets
/// (teacher forcing).
template <typename T>
double token_accuracy(const nn::Tensor<T>& logits, std::span<const int> targets, int pad_id);

/// Encoder output kept for incremental decoding of one source.
template <typename T>
struct EncodedSource {
  nn::Tensor<T> memory;            // [src_len, d_model]
  std::vector<std::uint8_t> valid;
};

template <typename T>
EncodedSource<T> encode_source(const Parameters<T>& params, const ModelConfig& cfg, std::span<const int> src_ids);

/// Next-token log-probabilities for each prefix (all of equal length),
/// each against the same encoded source. Dropout off.
template <typename T>
std::vector<std::vector<double>> next_token_log_probs(const Parameters<T>& params, const ModelConfig& cfg,
                                                      const EncodedSource<T>& source,
                                                      const std::vector<std::vector<int>>& prefixes);

}  // namespace bartlab
