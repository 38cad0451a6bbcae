#include "relpool/prompt_pool.hpp"

#include <cmath>
#include <numeric>
#include <stdexcept>
#include <string>

#include "relpool/errors.hpp"
#include "relpool/io/binary.hpp"
#include "relpool/numeric/ops.hpp"

namespace relpool {

void PoolConfig::validate() const {
  if (pool_size < 1) throw InvalidArgument("pool: pool_size must be >= 1");
  if (top_k < 1 || top_k > pool_size) {
    throw InvalidArgument("pool: top_k " + std::to_string(top_k) + " outside [1, " +
                          std::to_string(pool_size) + "]");
  }
  if (prompt_length < 1) throw InvalidArgument("pool: prompt_length must be >= 1");
  if (lambda < 0.0) throw InvalidArgument("pool: lambda must be non-negative");
}

PromptPool::PromptPool(std::size_t task_id, const PoolConfig& config, std::size_t dim, Rng& rng)
    : task_id_(task_id), config_(config), keys_(config.pool_size, dim) {
  config_.validate();
  for (std::size_t i = 0; i < config.pool_size; ++i) {
    auto row = keys_.row(i);
    double n = 0.0;
    while (n == 0.0) {
      for (double& v : row) v = rng.normal();
      n = norm2(row);
    }
    for (double& v : row) v /= n;
  }
  prompts_.reserve(config.pool_size);
  for (std::size_t i = 0; i < config.pool_size; ++i) {
    Prompt p{Matrix(config.prompt_length, dim), Matrix(config.prompt_length, dim)};
    for (double& v : p.keys.flat()) v = rng.normal(0.0, config.prompt_init_std);
    for (double& v : p.values.flat()) v = rng.normal(0.0, config.prompt_init_std);
    prompts_.push_back(std::move(p));
  }
}

PromptPool::PromptPool(std::size_t task_id, const PoolConfig& config, Matrix keys,
                       std::vector<Prompt> prompts)
    : task_id_(task_id), config_(config), keys_(std::move(keys)), prompts_(std::move(prompts)) {
  config_.validate();
  if (keys_.rows() != config_.pool_size || prompts_.size() != config_.pool_size) {
    throw InvalidArgument("pool: key/prompt counts disagree with pool_size");
  }
  for (const auto& p : prompts_) {
    if (p.keys.rows() != config_.prompt_length || p.values.rows() != config_.prompt_length ||
        p.keys.cols() != keys_.cols() || p.values.cols() != keys_.cols()) {
      throw InvalidArgument("pool: prompt shape disagrees with config");
    }
  }
}

std::size_t PromptPool::parameter_count() const {
  return keys_.size() + prompts_.size() * 2 * config_.prompt_length * dim();
}

Vector PromptPool::parameters() const {
  Vector flat;
  flat.reserve(parameter_count());
  flat.insert(flat.end(), keys_.flat().begin(), keys_.flat().end());
  for (const auto& p : prompts_) {
    flat.insert(flat.end(), p.keys.flat().begin(), p.keys.flat().end());
    flat.insert(flat.end(), p.values.flat().begin(), p.values.flat().end());
  }
  return flat;
}

void PromptPool::set_parameters(std::span<const double> flat) {
  if (frozen_) throw std::logic_error("prompt pool " + std::to_string(task_id_) + " is frozen");
  if (flat.size() != parameter_count()) throw InvalidArgument("pool: parameter vector length");
  auto it = flat.begin();
  std::copy_n(it, keys_.size(), keys_.data());
  it += static_cast<std::ptrdiff_t>(keys_.size());
  for (auto& p : prompts_) {
    std::copy_n(it, p.keys.size(), p.keys.data());
    it += static_cast<std::ptrdiff_t>(p.keys.size());
    std::copy_n(it, p.values.size(), p.values.data());
    it += static_cast<std::ptrdiff_t>(p.values.size());
  }
}

std::uint64_t PromptPool::checksum() const { return io::fnv1a64(serialize()); }

std::vector<std::uint8_t> PromptPool::serialize() const {
  io::Writer w;
  w.u64(task_id_);
  w.u64(config_.pool_size);
  w.u64(config_.top_k);
  w.u64(config_.prompt_length);
  w.f64(config_.lambda);
  w.f64(config_.prompt_init_std);
  w.mat(keys_);
  for (const auto& p : prompts_) {
    w.mat(p.keys);
    w.mat(p.values);
  }
  return w.take();
}

PromptPool PromptPool::deserialize(std::span<const std::uint8_t> payload) {
  io::Reader r(payload);
  const std::size_t task = r.u64();
  PoolConfig c;
  c.pool_size = r.u64();
  c.top_k = r.u64();
  c.prompt_length = r.u64();
  c.lambda = r.f64();
  c.prompt_init_std = r.f64();
  Matrix keys = r.mat();
  std::vector<Prompt> prompts;
  for (std::size_t i = 0; i < c.pool_size; ++i) {
    Matrix k = r.mat();
    Matrix v = r.mat();
    prompts.push_back({std::move(k), std::move(v)});
  }
  if (!r.at_end()) throw ParseError("pool blob: trailing bytes");
  try {
    PromptPool pool(task, c, std::move(keys), std::move(prompts));
    pool.freeze();
    return pool;
  } catch (const InvalidArgument& e) {
    throw ParseError(std::string("pool blob: ") + e.what());
  }
}

Selection select(const PromptPool& pool, std::span<const double> q) {
  Vector dist(pool.size());
  for (std::size_t i = 0; i < pool.size(); ++i) dist[i] = cosine_distance(q, pool.keys().row(i));
  Selection sel;
  sel.indices = top_k_indices(dist, pool.config().top_k);
  for (std::size_t i : sel.indices) sel.distances.push_back(dist[i]);
  return sel;
}

std::vector<const Prompt*> selected_prompts(const PromptPool& pool, const Selection& sel) {
  std::vector<const Prompt*> out;
  out.reserve(sel.indices.size());
  for (std::size_t i : sel.indices) out.push_back(&pool.prompts()[i]);
  return out;
}

PoolLoss pool_loss(const PromptPool& pool, const TokenSequence& x, std::span<const double> q,
                   const EncoderParams& encoder, const ClassifierHead& head,
                   const RelationTaskMap& map, std::span<double> pool_grad,
                   std::span<double> head_grad) {
  if (!map.contains(x.label) || map.task_of(x.label) != pool.task_id()) {
    throw InvalidArgument("pool_loss: label " + std::to_string(x.label) +
                          " is not a relation of task " + std::to_string(pool.task_id()));
  }
  if (!pool_grad.empty() && pool_grad.size() != pool.parameter_count()) {
    throw InvalidArgument("pool_loss: pool gradient buffer size");
  }
  const std::size_t slot = map.slot_of(x.label);
  const std::size_t d = encoder.config().dim;

  PoolLoss out;
  out.selection = select(pool, q);
  const auto prompts = selected_prompts(pool, out.selection);
  const PrefixBlock prefix = stack_prompts(std::span<const Prompt* const>(prompts), d);

  const bool want_grad = !pool_grad.empty() || !head_grad.empty();
  ForwardTrace trace;
  const Matrix hidden = encoder_forward(embed(x, encoder), encoder, prefix, want_grad ? &trace : nullptr);
  const Vector z = entity_concat(hidden, x);

  Vector d_z;
  std::vector<double> scratch;
  std::span<double> hg = head_grad;
  if (want_grad && hg.empty()) {
    scratch.assign(head.params().size(), 0.0);
    hg = scratch;
  }
  if (want_grad) {
    out.classification = head.loss_and_grad(z, slot, hg, &d_z);
  } else {
    out.classification = cross_entropy(head.logits(z), slot);
  }
  out.predicted_slot = argmax(head.logits(z));

  double surrogate = 0.0;
  for (double dist : out.selection.distances) surrogate += dist;
  out.surrogate = surrogate;
  const double lambda = pool.config().lambda;
  out.total = out.classification + lambda * surrogate;

  if (pool_grad.empty()) return out;

  // Keys: only the surrogate term depends on them.
  if (lambda != 0.0) {
    for (std::size_t s : out.selection.indices) {
      const Vector g = cosine_distance_grad_b(q, pool.keys().row(s));
      double* dst = pool_grad.data() + s * d;
      for (std::size_t c = 0; c < d; ++c) dst[c] += lambda * g[c];
    }
  }

  // Prompts: backpropagate d loss / d z through the frozen encoder.
  Matrix d_hidden(hidden.rows(), hidden.cols());
  for (std::size_t c = 0; c < d; ++c) {
    d_hidden(x.e1.start, c) += d_z[c];
    d_hidden(x.e2.start, c) += d_z[d + c];
  }
  const PrefixBlock g = backward_prefix(trace, encoder, d_hidden);
  const std::size_t len = pool.config().prompt_length;
  const std::size_t prompt_block = 2 * len * d;
  const std::size_t base = pool.keys().size();
  for (std::size_t k = 0; k < out.selection.indices.size(); ++k) {
    double* dst = pool_grad.data() + base + out.selection.indices[k] * prompt_block;
    for (std::size_t j = 0; j < len; ++j) {
      const auto gk = g.keys.row(k * len + j);
      const auto gv = g.values.row(k * len + j);
      for (std::size_t c = 0; c < d; ++c) {
        dst[j * d + c] += gk[c];
        dst[len * d + j * d + c] += gv[c];
      }
    }
  }
  return out;
}

PoolTrainReport train_pool(PromptPool& pool, std::span<const TokenSequence> data,
                           std::span<const Vector> queries, const EncoderParams& encoder,
                           ClassifierHead& head, const RelationTaskMap& map,
                           const PoolTrainOptions& opts, Rng& rng) {
  if (data.empty()) throw InvalidArgument("train_pool: empty dataset");
  if (queries.size() != data.size()) throw InvalidArgument("train_pool: one query per sample required");
  if (!encoder.frozen()) throw InvalidArgument("train_pool: encoder must be frozen");
  if (pool.frozen()) throw InvalidArgument("train_pool: pool is frozen");

  PoolTrainReport report;
  Optimizer pool_opt(opts.optimizer, opts.lr);
  Optimizer head_opt(opts.head_optimizer, opts.head_lr);
  Vector params = pool.parameters();
  std::vector<double> pool_grad(params.size());
  std::vector<double> head_grad(head.params().size());
  std::vector<std::size_t> order(data.size());
  std::iota(order.begin(), order.end(), std::size_t{0});
  const std::size_t batch = std::max<std::size_t>(1, opts.batch_size);

  for (std::size_t e = 0; e < opts.epochs; ++e) {
    rng.shuffle(order);
    double total = 0.0;
    std::size_t correct = 0;
    for (std::size_t start = 0; start < data.size(); start += batch) {
      const std::size_t end = std::min(data.size(), start + batch);
      std::fill(pool_grad.begin(), pool_grad.end(), 0.0);
      std::fill(head_grad.begin(), head_grad.end(), 0.0);
      for (std::size_t b = start; b < end; ++b) {
        const std::size_t i = order[b];
        const PoolLoss l = pool_loss(pool, data[i], queries[i], encoder, head, map, pool_grad, head_grad);
        total += l.total;
        correct += l.predicted_slot == map.slot_of(data[i].label);
      }
      const double inv = 1.0 / static_cast<double>(end - start);
      for (double& g : pool_grad) g *= inv;
      for (double& g : head_grad) g *= inv;
      pool_opt.step(params, pool_grad);
      pool.set_parameters(params);
      head_opt.step(head.params(), head_grad);
      ++report.steps;
    }
    const double mean = total / static_cast<double>(data.size());
    if (!std::isfinite(mean)) {
      throw NumericError("train_pool: loss diverged at epoch " + std::to_string(report.epoch_losses.size() + 1));
    }
    report.epoch_losses.push_back(mean);
    report.train_accuracy = static_cast<double>(correct) / static_cast<double>(data.size());
  }
  return report;
}

}  // namespace relpool
