#include <cmath>
#include <string>

#include "relpool/attention.hpp"
#include "relpool/errors.hpp"
#include "relpool/numeric/ops.hpp"

namespace relpool {
namespace {

void check_layer_input(const Matrix& x, const EncoderLayer& layer) {
  if (layer.heads.empty()) throw InvalidArgument("attention: layer has no heads");
  const std::size_t d = layer.wo.rows();
  if (x.rows() < 1) throw InvalidArgument("attention: empty sequence");
  if (x.cols() != d) {
    throw InvalidArgument("attention: input width " + std::to_string(x.cols()) +
                          " != model dim " + std::to_string(d));
  }
  for (const auto& h : layer.heads) {
    if (h.wq.rows() != d || h.wk.rows() != d || h.wv.rows() != d ||
        h.wq.cols() * layer.heads.size() != d) {
      throw InvalidArgument("attention: head projection shape mismatch");
    }
  }
}

void check_prompts(std::span<const Prompt> prompts, std::size_t d) {
  for (const auto& p : prompts) {
    if (p.keys.cols() != d || p.values.cols() != d) {
      throw InvalidArgument("prompt dim " + std::to_string(p.keys.cols()) + " != model dim " +
                            std::to_string(d));
    }
    if (p.keys.rows() != p.values.rows()) {
      throw InvalidArgument("prompt key/value lengths differ");
    }
  }
}

// Writes head output (N x Dv) into columns [offset, offset + Dv) of `concat`.
void place_head(const Matrix& h, std::size_t offset, Matrix& concat) {
  for (std::size_t i = 0; i < h.rows(); ++i)
    for (std::size_t c = 0; c < h.cols(); ++c) concat(i, offset + c) = h(i, c);
}

}  // namespace

bool EncoderConfig::prefixed(std::size_t layer) const {
  if (prefix_layers.empty()) return true;
  for (std::size_t l : prefix_layers)
    if (l == layer) return true;
  return false;
}

void EncoderConfig::validate() const {
  if (dim == 0 || heads == 0 || dim % heads != 0) {
    throw InvalidArgument("encoder: dim " + std::to_string(dim) + " not divisible by heads " +
                          std::to_string(heads));
  }
  if (layers == 0 || vocab_size <= special::kCount || max_len == 0 || ffn_hidden == 0) {
    throw InvalidArgument("encoder: layers, vocab, max_len and ffn_hidden must be positive");
  }
  for (std::size_t l : prefix_layers) {
    if (l >= layers) throw InvalidArgument("encoder: prefix layer index out of range");
  }
}

PrefixBlock stack_prompts(std::span<const Prompt> prompts, std::size_t dim) {
  std::vector<const Prompt*> ptrs;
  ptrs.reserve(prompts.size());
  for (const auto& p : prompts) ptrs.push_back(&p);
  return stack_prompts(std::span<const Prompt* const>(ptrs), dim);
}

PrefixBlock stack_prompts(std::span<const Prompt* const> prompts, std::size_t dim) {
  std::size_t rows = 0;
  for (const Prompt* p : prompts) {
    if (p->keys.cols() != dim || p->values.cols() != dim) {
      throw InvalidArgument("prompt dim " + std::to_string(p->keys.cols()) + " != model dim " +
                            std::to_string(dim));
    }
    if (p->keys.rows() != p->values.rows()) throw InvalidArgument("prompt key/value lengths differ");
    rows += p->length();
  }
  PrefixBlock block{Matrix(rows, dim), Matrix(rows, dim)};
  std::size_t r = 0;
  for (const Prompt* p : prompts) {
    for (std::size_t j = 0; j < p->length(); ++j, ++r) {
      std::copy(p->keys.row(j).begin(), p->keys.row(j).end(), block.keys.row(r).begin());
      std::copy(p->values.row(j).begin(), p->values.row(j).end(), block.values.row(r).begin());
    }
  }
  return block;
}

Matrix msa_forward(const Matrix& x, const EncoderLayer& layer) {
  return prefix_msa_forward(x, layer, {});
}

Matrix prefix_msa_forward(const Matrix& x, const EncoderLayer& layer,
                          std::span<const Prompt> prompts) {
  check_layer_input(x, layer);
  check_prompts(prompts, x.cols());
  const PrefixBlock prefix = stack_prompts(prompts, x.cols());
  const std::size_t dv = layer.heads.front().wq.cols();
  const double scale = 1.0 / std::sqrt(static_cast<double>(dv));
  const Matrix kv_keys = vstack(prefix.keys, x);
  const Matrix kv_values = vstack(prefix.values, x);

  Matrix concat(x.rows(), x.cols());
  for (std::size_t h = 0; h < layer.heads.size(); ++h) {
    const auto& head = layer.heads[h];
    const Matrix q = matmul(x, head.wq);
    const Matrix k = matmul(kv_keys, head.wk);
    const Matrix v = matmul(kv_values, head.wv);
    Matrix scores = matmul_nt(q, k);
    scale_inplace(scores, scale);
    softmax_rows(scores);
    place_head(matmul(scores, v), h * dv, concat);
  }
  return matmul(concat, layer.wo);
}

Matrix moe_view_forward(const Matrix& x, const EncoderLayer& layer) {
  return prefix_moe_view_forward(x, layer, {});
}

Matrix prefix_moe_view_forward(const Matrix& x, const EncoderLayer& layer,
                               std::span<const Prompt> prompts, MoeTrace* trace) {
  check_layer_input(x, layer);
  check_prompts(prompts, x.cols());
  const std::size_t n = x.rows();
  const std::size_t d = x.cols();
  const std::size_t dv = layer.heads.front().wq.cols();
  const double inv_sqrt_dv = 1.0 / std::sqrt(static_cast<double>(dv));

  // Prefix experts, flattened in prompt order.
  std::vector<std::span<const double>> pk, pv;
  for (const auto& p : prompts) {
    for (std::size_t j = 0; j < p.length(); ++j) {
      pk.push_back(p.keys.row(j));
      pv.push_back(p.values.row(j));
    }
  }
  const std::size_t num_prefix = pk.size();

  if (trace) trace->gates.assign(layer.heads.size(), Matrix(n, num_prefix + n));
  Matrix concat(n, d);
  for (std::size_t h = 0; h < layer.heads.size(); ++h) {
    const auto& head = layer.heads[h];
    // Bilinear score matrix Wq Wk^T shared by every gate of this head.
    const Matrix bilinear = matmul_nt(head.wq, head.wk);

    // Experts: pre-trained f_j = Wv^T x_j, prefix f_{N+j} = Wv^T pv_j.
    std::vector<Vector> experts;
    experts.reserve(num_prefix + n);
    for (std::size_t j = 0; j < num_prefix; ++j) experts.push_back(vecmat(pv[j], head.wv));
    for (std::size_t j = 0; j < n; ++j) experts.push_back(vecmat(x.row(j), head.wv));

    for (std::size_t i = 0; i < n; ++i) {
      const Vector xi_b = vecmat(x.row(i), bilinear);
      Vector scores(num_prefix + n);
      for (std::size_t j = 0; j < num_prefix; ++j) scores[j] = dot(xi_b, pk[j]) * inv_sqrt_dv;
      for (std::size_t j = 0; j < n; ++j) scores[num_prefix + j] = dot(xi_b, x.row(j)) * inv_sqrt_dv;
      const Vector gate = softmax(scores);
      Vector out(dv, 0.0);
      for (std::size_t e = 0; e < gate.size(); ++e)
        for (std::size_t c = 0; c < dv; ++c) out[c] += gate[e] * experts[e][c];
      for (std::size_t c = 0; c < dv; ++c) concat(i, h * dv + c) = out[c];
      if (trace) std::copy(gate.begin(), gate.end(), trace->gates[h].row(i).begin());
    }
  }
  return matmul(concat, layer.wo);
}

}  // namespace relpool
