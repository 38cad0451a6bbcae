#include <cmath>
#include <stdexcept>

#include "relpool/attention.hpp"
#include "relpool/errors.hpp"
#include "relpool/io/binary.hpp"

namespace relpool {
namespace {

Matrix gaussian(std::size_t rows, std::size_t cols, double stddev, Rng& rng) {
  Matrix m(rows, cols);
  for (double& v : m.flat()) v = rng.normal(0.0, stddev);
  return m;
}

void write_config(io::Writer& w, const EncoderConfig& c) {
  w.u64(c.vocab_size);
  w.u64(c.dim);
  w.u64(c.heads);
  w.u64(c.layers);
  w.u64(c.ffn_hidden);
  w.u64(c.max_len);
  w.u8(static_cast<std::uint8_t>(c.pooling));
  w.u64(c.prefix_layers.size());
  for (std::size_t l : c.prefix_layers) w.u64(l);
}

EncoderConfig read_config(io::Reader& r) {
  EncoderConfig c;
  c.vocab_size = r.u64();
  c.dim = r.u64();
  c.heads = r.u64();
  c.layers = r.u64();
  c.ffn_hidden = r.u64();
  c.max_len = r.u64();
  const std::uint8_t pooling = r.u8();
  if (pooling > 1) throw ParseError("encoder: unknown pooling mode");
  c.pooling = static_cast<QueryPooling>(pooling);
  const std::uint64_t n = r.u64();
  for (std::uint64_t i = 0; i < n; ++i) c.prefix_layers.push_back(r.u64());
  return c;
}

}  // namespace

EncoderParams::EncoderParams(EncoderConfig config, Matrix token_embedding,
                             Matrix position_embedding, std::vector<EncoderLayer> layers)
    : config_(std::move(config)),
      token_embedding_(std::move(token_embedding)),
      position_embedding_(std::move(position_embedding)),
      layers_(std::move(layers)) {
  config_.validate();
  const std::size_t d = config_.dim;
  if (token_embedding_.rows() != config_.vocab_size || token_embedding_.cols() != d ||
      position_embedding_.rows() != config_.max_len || position_embedding_.cols() != d ||
      layers_.size() != config_.layers) {
    throw InvalidArgument("encoder: parameter shapes disagree with config");
  }
}

EncoderParams EncoderParams::random(const EncoderConfig& config, Rng& rng) {
  config.validate();
  const std::size_t d = config.dim;
  const std::size_t dv = config.head_dim();
  const double proj = 1.0 / std::sqrt(static_cast<double>(d));
  Matrix tok = gaussian(config.vocab_size, d, 1.0, rng);
  Matrix pos = gaussian(config.max_len, d, 0.2, rng);
  std::vector<EncoderLayer> layers(config.layers);
  for (auto& layer : layers) {
    layer.heads.resize(config.heads);
    for (auto& h : layer.heads) {
      h.wq = gaussian(d, dv, proj, rng);
      h.wk = gaussian(d, dv, proj, rng);
      h.wv = gaussian(d, dv, proj, rng);
    }
    layer.wo = gaussian(d, d, proj, rng);
    layer.ln1_gain.assign(d, 1.0);
    layer.ln1_bias.assign(d, 0.0);
    layer.ffn_in = gaussian(d, config.ffn_hidden, proj, rng);
    layer.ffn_in_bias.assign(config.ffn_hidden, 0.0);
    layer.ffn_out = gaussian(config.ffn_hidden, d, 1.0 / std::sqrt(double(config.ffn_hidden)), rng);
    layer.ffn_out_bias.assign(d, 0.0);
    layer.ln2_gain.assign(d, 1.0);
    layer.ln2_bias.assign(d, 0.0);
  }
  return EncoderParams(config, std::move(tok), std::move(pos), std::move(layers));
}

std::vector<EncoderLayer>& EncoderParams::mutable_layers() {
  if (frozen_) throw std::logic_error("encoder parameters are frozen");
  return layers_;
}

std::uint64_t EncoderParams::checksum() const { return io::fnv1a64(serialize()); }

std::vector<std::uint8_t> EncoderParams::serialize() const {
  io::Writer w;
  write_config(w, config_);
  w.mat(token_embedding_);
  w.mat(position_embedding_);
  for (const auto& layer : layers_) {
    for (const auto& h : layer.heads) {
      w.mat(h.wq);
      w.mat(h.wk);
      w.mat(h.wv);
    }
    w.mat(layer.wo);
    w.vec(layer.ln1_gain);
    w.vec(layer.ln1_bias);
    w.mat(layer.ffn_in);
    w.vec(layer.ffn_in_bias);
    w.mat(layer.ffn_out);
    w.vec(layer.ffn_out_bias);
    w.vec(layer.ln2_gain);
    w.vec(layer.ln2_bias);
  }
  return w.take();
}

EncoderParams EncoderParams::deserialize(std::span<const std::uint8_t> payload) {
  io::Reader r(payload);
  EncoderConfig config = read_config(r);
  try {
    config.validate();
  } catch (const InvalidArgument& e) {
    throw ParseError(std::string("encoder blob: ") + e.what());
  }
  Matrix tok = r.mat();
  Matrix pos = r.mat();
  std::vector<EncoderLayer> layers(config.layers);
  for (auto& layer : layers) {
    layer.heads.resize(config.heads);
    for (auto& h : layer.heads) {
      h.wq = r.mat();
      h.wk = r.mat();
      h.wv = r.mat();
    }
    layer.wo = r.mat();
    layer.ln1_gain = r.vec();
    layer.ln1_bias = r.vec();
    layer.ffn_in = r.mat();
    layer.ffn_in_bias = r.vec();
    layer.ffn_out = r.mat();
    layer.ffn_out_bias = r.vec();
    layer.ln2_gain = r.vec();
    layer.ln2_bias = r.vec();
  }
  if (!r.at_end()) throw ParseError("encoder blob: trailing bytes");
  try {
    EncoderParams p(std::move(config), std::move(tok), std::move(pos), std::move(layers));
    p.freeze();
    return p;
  } catch (const InvalidArgument& e) {
    throw ParseError(std::string("encoder blob: ") + e.what());
  }
}

}  // namespace relpool
