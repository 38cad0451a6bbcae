#include <cmath>
#include <numbers>
#include <string>

#include "relpool/attention.hpp"
#include "relpool/errors.hpp"
#include "relpool/numeric/kernels.hpp"
#include "relpool/numeric/ops.hpp"

namespace relpool {
namespace {

constexpr double kLayerNormEps = 1e-5;

Matrix layer_norm(const Matrix& r, const Vector& gain, const Vector& bias, LayerNormCache* cache) {
  const std::size_t n = r.rows();
  const std::size_t d = r.cols();
  Matrix out(n, d);
  Matrix normalized(n, d);
  Vector inv_std(n);
  for (std::size_t i = 0; i < n; ++i) {
    const auto row = r.row(i);
    double mean = 0.0;
    for (double v : row) mean += v;
    mean /= static_cast<double>(d);
    double var = 0.0;
    for (double v : row) var += (v - mean) * (v - mean);
    var /= static_cast<double>(d);
    const double is = 1.0 / std::sqrt(var + kLayerNormEps);
    inv_std[i] = is;
    for (std::size_t c = 0; c < d; ++c) {
      const double xh = (row[c] - mean) * is;
      normalized(i, c) = xh;
      out(i, c) = xh * gain[c] + bias[c];
    }
  }
  if (cache) {
    cache->normalized = std::move(normalized);
    cache->inv_std = std::move(inv_std);
  }
  return out;
}

Matrix layer_norm_backward(const Matrix& grad_out, const LayerNormCache& cache, const Vector& gain) {
  const std::size_t n = grad_out.rows();
  const std::size_t d = grad_out.cols();
  Matrix grad_in(n, d);
  Vector dxh(d);
  for (std::size_t i = 0; i < n; ++i) {
    double mean_dxh = 0.0;
    double mean_dxh_xh = 0.0;
    for (std::size_t c = 0; c < d; ++c) {
      dxh[c] = grad_out(i, c) * gain[c];
      mean_dxh += dxh[c];
      mean_dxh_xh += dxh[c] * cache.normalized(i, c);
    }
    mean_dxh /= static_cast<double>(d);
    mean_dxh_xh /= static_cast<double>(d);
    for (std::size_t c = 0; c < d; ++c) {
      grad_in(i, c) =
          cache.inv_std[i] * (dxh[c] - mean_dxh - cache.normalized(i, c) * mean_dxh_xh);
    }
  }
  return grad_in;
}

const double kGeluC = std::sqrt(2.0 / std::numbers::pi);

double gelu(double x) {
  return 0.5 * x * (1.0 + std::tanh(kGeluC * (x + 0.044715 * x * x * x)));
}

double gelu_grad(double x) {
  const double u = kGeluC * (x + 0.044715 * x * x * x);
  const double t = std::tanh(u);
  const double du = kGeluC * (1.0 + 3.0 * 0.044715 * x * x);
  return 0.5 * (1.0 + t) + 0.5 * x * (1.0 - t * t) * du;
}

void add_row_bias(Matrix& m, const Vector& bias) {
  for (std::size_t i = 0; i < m.rows(); ++i) kernels::axpy(1.0, bias.data(), m.row(i).data(), m.cols());
}

Matrix layer_forward(const Matrix& x, const EncoderLayer& layer, const PrefixBlock* prefix,
                     LayerCache* cache) {
  const std::size_t n = x.rows();
  const std::size_t d = x.cols();
  const std::size_t dv = layer.heads.front().wq.cols();
  const double scale = 1.0 / std::sqrt(static_cast<double>(dv));
  const bool prefixed = prefix != nullptr && prefix->rows() > 0;
  const Matrix kv_keys = prefixed ? vstack(prefix->keys, x) : x;
  const Matrix kv_values = prefixed ? vstack(prefix->values, x) : x;

  Matrix concat(n, d);
  if (cache) {
    cache->input = x;
    cache->prefixed = prefixed;
    cache->heads.resize(layer.heads.size());
  }
  for (std::size_t h = 0; h < layer.heads.size(); ++h) {
    const auto& head = layer.heads[h];
    Matrix q = matmul(x, head.wq);
    Matrix k = matmul(kv_keys, head.wk);
    Matrix v = matmul(kv_values, head.wv);
    Matrix attn = matmul_nt(q, k);
    scale_inplace(attn, scale);
    softmax_rows(attn);
    const Matrix out = matmul(attn, v);
    for (std::size_t i = 0; i < n; ++i)
      std::copy(out.row(i).begin(), out.row(i).end(), concat.row(i).begin() + h * dv);
    if (cache) {
      cache->heads[h] = HeadCache{std::move(q), std::move(k), std::move(v), std::move(attn)};
    }
  }
  Matrix r1 = matmul(concat, layer.wo);
  add_inplace(r1, x);
  Matrix y1 = layer_norm(r1, layer.ln1_gain, layer.ln1_bias, cache ? &cache->ln1 : nullptr);

  Matrix pre = matmul(y1, layer.ffn_in);
  add_row_bias(pre, layer.ffn_in_bias);
  Matrix act(pre.rows(), pre.cols());
  for (std::size_t i = 0; i < pre.size(); ++i) act.data()[i] = gelu(pre.data()[i]);
  Matrix r2 = matmul(act, layer.ffn_out);
  add_row_bias(r2, layer.ffn_out_bias);
  add_inplace(r2, y1);
  Matrix y2 = layer_norm(r2, layer.ln2_gain, layer.ln2_bias, cache ? &cache->ln2 : nullptr);

  if (cache) {
    cache->concat = std::move(concat);
    cache->after_attn = std::move(y1);
    cache->ffn_pre = std::move(pre);
    cache->ffn_act = std::move(act);
  }
  return y2;
}

// Returns d loss / d layer input; accumulates prefix gradients into `grad_prefix`.
Matrix layer_backward(const Matrix& grad_out, const EncoderLayer& layer, const LayerCache& cache,
                      PrefixBlock& grad_prefix) {
  const std::size_t n = grad_out.rows();
  const std::size_t dv = layer.heads.front().wq.cols();
  const double scale = 1.0 / std::sqrt(static_cast<double>(dv));

  // LN2 and the feed-forward residual branch.
  const Matrix d_r2 = layer_norm_backward(grad_out, cache.ln2, layer.ln2_gain);
  Matrix d_pre = matmul_nt(d_r2, layer.ffn_out);
  for (std::size_t i = 0; i < d_pre.size(); ++i) d_pre.data()[i] *= gelu_grad(cache.ffn_pre.data()[i]);
  Matrix d_y1 = matmul_nt(d_pre, layer.ffn_in);
  add_inplace(d_y1, d_r2);

  // LN1 and the attention residual branch.
  const Matrix d_r1 = layer_norm_backward(d_y1, cache.ln1, layer.ln1_gain);
  Matrix d_x = d_r1;
  const Matrix d_concat = matmul_nt(d_r1, layer.wo);

  const std::size_t num_prefix = cache.prefixed ? grad_prefix.rows() : 0;
  for (std::size_t h = 0; h < layer.heads.size(); ++h) {
    const auto& head = layer.heads[h];
    const HeadCache& hc = cache.heads[h];
    const Matrix d_head = slice_cols(d_concat, h * dv, dv);  // N x Dv

    Matrix d_attn = matmul_nt(d_head, hc.v);   // N x T
    const Matrix d_v = matmul_tn(hc.attn, d_head);  // T x Dv
    for (std::size_t i = 0; i < n; ++i) {
      auto a = hc.attn.row(i);
      auto g = d_attn.row(i);
      const double s = dot(a, g);
      for (std::size_t j = 0; j < a.size(); ++j) g[j] = a[j] * (g[j] - s) * scale;
    }
    const Matrix d_q = matmul(d_attn, hc.k);      // N x Dv
    const Matrix d_k = matmul_tn(d_attn, hc.q);   // T x Dv

    add_inplace(d_x, matmul_nt(d_q, head.wq));
    add_inplace(d_x, matmul_nt(slice_rows(d_k, num_prefix, n), head.wk));
    add_inplace(d_x, matmul_nt(slice_rows(d_v, num_prefix, n), head.wv));
    if (num_prefix > 0) {
      add_inplace(grad_prefix.keys, matmul_nt(slice_rows(d_k, 0, num_prefix), head.wk));
      add_inplace(grad_prefix.values, matmul_nt(slice_rows(d_v, 0, num_prefix), head.wv));
    }
  }
  return d_x;
}

void check_sequence(const TokenSequence& x, const EncoderParams& params) {
  const auto& cfg = params.config();
  if (x.tokens.empty()) throw InvalidArgument("encoder: empty token sequence");
  if (x.tokens.size() > cfg.max_len) {
    throw InvalidArgument("encoder: sequence length " + std::to_string(x.tokens.size()) +
                          " exceeds max_len " + std::to_string(cfg.max_len));
  }
  for (TokenId t : x.tokens) {
    if (t >= cfg.vocab_size) {
      throw InvalidArgument("encoder: token id " + std::to_string(t) + " >= vocab_size " +
                            std::to_string(cfg.vocab_size));
    }
  }
}

}  // namespace

bool spans_valid(const TokenSequence& x) {
  const std::size_t n = x.tokens.size();
  auto ok = [n](const Span& s) { return s.start < s.end && s.end <= n; };
  if (!ok(x.e1) || !ok(x.e2)) return false;
  return x.e1.end <= x.e2.start || x.e2.end <= x.e1.start;
}

Matrix embed(const TokenSequence& x, const EncoderParams& params) {
  check_sequence(x, params);
  const std::size_t d = params.config().dim;
  Matrix out(x.tokens.size(), d);
  for (std::size_t i = 0; i < x.tokens.size(); ++i) {
    auto row = out.row(i);
    const auto tok = params.token_embedding().row(x.tokens[i]);
    const auto pos = params.position_embedding().row(i);
    for (std::size_t c = 0; c < d; ++c) row[c] = tok[c] + pos[c];
  }
  return out;
}

Matrix encoder_forward(const Matrix& embedded, const EncoderParams& params,
                       const PrefixBlock& prefix, ForwardTrace* trace) {
  const auto& cfg = params.config();
  if (prefix.rows() > 0 && (prefix.keys.cols() != cfg.dim || prefix.values.cols() != cfg.dim)) {
    throw InvalidArgument("encoder: prefix width != model dim");
  }
  if (trace) trace->layers.assign(params.layers().size(), LayerCache{});
  Matrix h = embedded;
  for (std::size_t l = 0; l < params.layers().size(); ++l) {
    const PrefixBlock* p = cfg.prefixed(l) ? &prefix : nullptr;
    h = layer_forward(h, params.layers()[l], p, trace ? &trace->layers[l] : nullptr);
  }
  return h;
}

PrefixBlock backward_prefix(const ForwardTrace& trace, const EncoderParams& params,
                            const Matrix& grad_hidden) {
  std::size_t num_prefix = 0;
  for (const auto& lc : trace.layers) {
    if (lc.prefixed) {
      num_prefix = lc.heads.front().k.rows() - lc.input.rows();
      break;
    }
  }
  const std::size_t d = params.config().dim;
  PrefixBlock grad{Matrix(num_prefix, d), Matrix(num_prefix, d)};
  Matrix g = grad_hidden;
  for (std::size_t l = params.layers().size(); l-- > 0;) {
    g = layer_backward(g, params.layers()[l], trace.layers[l], grad);
  }
  return grad;
}

Vector entity_concat(const Matrix& hidden, const TokenSequence& x) {
  if (!spans_valid(x) || x.tokens.size() != hidden.rows()) {
    throw InvalidArgument("encoder: entity span outside sequence");
  }
  const std::size_t d = hidden.cols();
  Vector z(2 * d);
  std::copy(hidden.row(x.e1.start).begin(), hidden.row(x.e1.start).end(), z.begin());
  std::copy(hidden.row(x.e2.start).begin(), hidden.row(x.e2.start).end(), z.begin() + d);
  return z;
}

Vector encode_query(const TokenSequence& x, const EncoderParams& params) {
  const Matrix hidden = encoder_forward(embed(x, params), params, PrefixBlock{});
  if (params.config().pooling == QueryPooling::kSentinel) {
    return Vector(hidden.row(0).begin(), hidden.row(0).end());
  }
  Vector mean(hidden.cols(), 0.0);
  for (std::size_t i = 0; i < hidden.rows(); ++i)
    for (std::size_t c = 0; c < hidden.cols(); ++c) mean[c] += hidden(i, c);
  for (double& v : mean) v /= static_cast<double>(hidden.rows());
  return mean;
}

Vector encode_prompted(const TokenSequence& x, const EncoderParams& params,
                       std::span<const Prompt* const> prompts) {
  if (prompts.empty()) throw InvalidArgument("encode_prompted: at least one prompt required");
  if (!spans_valid(x)) throw InvalidArgument("encoder: entity span outside sequence");
  const PrefixBlock prefix = stack_prompts(prompts, params.config().dim);
  const Matrix hidden = encoder_forward(embed(x, params), params, prefix);
  return entity_concat(hidden, x);
}

Vector encode_prompted(const TokenSequence& x, const EncoderParams& params,
                       std::span<const Prompt> prompts) {
  std::vector<const Prompt*> ptrs;
  for (const auto& p : prompts) ptrs.push_back(&p);
  return encode_prompted(x, params, std::span<const Prompt* const>(ptrs));
}

}  // namespace relpool
