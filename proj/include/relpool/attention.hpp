// Frozen transformer encoder with prefix-tuning.
//
// Multi-head self-attention is available in two algebraically equivalent
// forms. The direct form projects X into Q, K, V and applies softmax(QK^T/sqrt(Dv))V
// per head. The mixture-of-experts form treats every output position i of
// head l as its own MoE: expert j is the linear map x_j -> Wv^T x_j, its score
// is x_i^T Wq Wk^T x_j / sqrt(Dv), and a prefix row (pk_j, pv_j) contributes an
// extra expert with constant output Wv^T pv_j and score x_i^T Wq Wk^T pk_j / sqrt(Dv).
// The two forms must agree to 1e-10; the test suite and `verify` check it.
//
// Encoder layers are post-norm: Y = LN(X + MSA(X)), out = LN(Y + FFN(Y)) with
// a GELU feed-forward block. Only prompts are trainable; gradients reach them
// through backward_prefix().

#pragma once

#include <cstddef>
#include <cstdint>
#include <span>
#include <vector>

#include "relpool/numeric/matrix.hpp"
#include "relpool/numeric/rng.hpp"
#include "relpool/token_sequence.hpp"

namespace relpool {

enum class QueryPooling : std::uint8_t { kSentinel = 0, kMean = 1 };

struct EncoderConfig {
  std::size_t vocab_size = 120;
  std::size_t dim = 32;
  std::size_t heads = 2;
  std::size_t layers = 2;
  std::size_t ffn_hidden = 64;
  std::size_t max_len = 32;
  QueryPooling pooling = QueryPooling::kSentinel;
  /// Layers that receive prefixes; empty means every layer.
  std::vector<std::size_t> prefix_layers;

  std::size_t head_dim() const { return dim / heads; }
  bool prefixed(std::size_t layer) const;
  /// Throws InvalidArgument on inconsistent sizes.
  void validate() const;
  bool operator==(const EncoderConfig&) const = default;
};

struct AttentionHead {
  Matrix wq;  // D x Dv
  Matrix wk;  // D x Dv
  Matrix wv;  // D x Dv
};

struct EncoderLayer {
  std::vector<AttentionHead> heads;
  Matrix wo;  // D x D
  Vector ln1_gain, ln1_bias;
  Matrix ffn_in;  // D x H
  Vector ffn_in_bias;
  Matrix ffn_out;  // H x D
  Vector ffn_out_bias;
  Vector ln2_gain, ln2_bias;
};

/// L prefix experts: row j of `keys` is p^k_j, row j of `values` is p^v_j.
struct Prompt {
  Matrix keys;    // L x D
  Matrix values;  // L x D

  std::size_t length() const { return keys.rows(); }
  bool operator==(const Prompt&) const = default;
};

/// Prompts stacked along the sequence axis, as they enter attention.
struct PrefixBlock {
  Matrix keys;
  Matrix values;
  std::size_t rows() const { return keys.rows(); }
};

PrefixBlock stack_prompts(std::span<const Prompt> prompts, std::size_t dim);
PrefixBlock stack_prompts(std::span<const Prompt* const> prompts, std::size_t dim);

class EncoderParams {
 public:
  EncoderParams() = default;
  EncoderParams(EncoderConfig config, Matrix token_embedding, Matrix position_embedding,
                std::vector<EncoderLayer> layers);

  /// Scaled-Gaussian initialization; the result is not yet frozen.
  static EncoderParams random(const EncoderConfig& config, Rng& rng);

  const EncoderConfig& config() const { return config_; }
  const Matrix& token_embedding() const { return token_embedding_; }
  const Matrix& position_embedding() const { return position_embedding_; }
  const std::vector<EncoderLayer>& layers() const { return layers_; }
  /// Throws std::logic_error once frozen.
  std::vector<EncoderLayer>& mutable_layers();

  void freeze() { frozen_ = true; }
  bool frozen() const { return frozen_; }

  /// FNV-1a over the serialized parameters (excluding the frozen flag).
  std::uint64_t checksum() const;

  std::vector<std::uint8_t> serialize() const;
  static EncoderParams deserialize(std::span<const std::uint8_t> payload);

 private:
  EncoderConfig config_;
  Matrix token_embedding_;     // vocab x D
  Matrix position_embedding_;  // max_len x D
  std::vector<EncoderLayer> layers_;
  bool frozen_ = false;
};

// ---- Attention in both formulations ----------------------------------------

/// Concat(h_1..h_m) W_O with h_i = Attention(X Wq_i, X Wk_i, X Wv_i).
Matrix msa_forward(const Matrix& x, const EncoderLayer& layer);
/// Same quantity evaluated as N MoE models per head.
Matrix moe_view_forward(const Matrix& x, const EncoderLayer& layer);
/// Keys [Pk; X] Wk_i, values [Pv; X] Wv_i; queries unchanged.
Matrix prefix_msa_forward(const Matrix& x, const EncoderLayer& layer,
                          std::span<const Prompt> prompts);

/// Gate weights recorded by the MoE view: gates[h] is N x (L + N), prefix
/// experts first, matching the key order of the direct form.
struct MoeTrace {
  std::vector<Matrix> gates;
};

Matrix prefix_moe_view_forward(const Matrix& x, const EncoderLayer& layer,
                               std::span<const Prompt> prompts, MoeTrace* trace = nullptr);

// ---- Encoder forward / backward --------------------------------------------

struct LayerNormCache {
  Matrix normalized;  // (r - mean) * inv_std
  Vector inv_std;
};

struct HeadCache {
  Matrix q;     // N x Dv
  Matrix k;     // (P + N) x Dv, prefix rows first
  Matrix v;     // (P + N) x Dv
  Matrix attn;  // N x (P + N)
};

struct LayerCache {
  Matrix input;
  bool prefixed = false;
  std::vector<HeadCache> heads;
  Matrix concat;  // N x D
  LayerNormCache ln1;
  Matrix after_attn;  // LN1 output
  Matrix ffn_pre;     // N x H
  Matrix ffn_act;     // N x H
  LayerNormCache ln2;
};

struct ForwardTrace {
  std::vector<LayerCache> layers;
};

struct EncoderOutput {
  Matrix hidden;          // N x D
  Vector query_repr;      // D; only filled by unprompted encodes
  Vector relation_repr;   // 2D
};

/// Token + position embedding. Throws InvalidArgument on out-of-vocab ids or
/// a sequence longer than max_len.
Matrix embed(const TokenSequence& x, const EncoderParams& params);

/// Full encoder pass with `prefix` injected into the configured layers.
/// `trace` (optional) receives what backward_prefix needs.
Matrix encoder_forward(const Matrix& embedded, const EncoderParams& params,
                       const PrefixBlock& prefix, ForwardTrace* trace = nullptr);

/// Gradient of a scalar loss w.r.t. the prefix rows, given d loss / d hidden.
/// Contributions from every prefixed layer are summed.
PrefixBlock backward_prefix(const ForwardTrace& trace, const EncoderParams& params,
                            const Matrix& grad_hidden);

/// q(x): unprompted pass, pooled per config (sentinel row or mean).
Vector encode_query(const TokenSequence& x, const EncoderParams& params);

/// z(x): prompted pass; concat(hidden[e1.start], hidden[e2.start]).
/// Requires at least one prompt.
Vector encode_prompted(const TokenSequence& x, const EncoderParams& params,
                       std::span<const Prompt* const> prompts);
Vector encode_prompted(const TokenSequence& x, const EncoderParams& params,
                       std::span<const Prompt> prompts);

/// Entity-start concatenation of a hidden-state matrix.
Vector entity_concat(const Matrix& hidden, const TokenSequence& x);

}  // namespace relpool
