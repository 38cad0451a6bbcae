// Task-specific prompt pools.
//
// A pool holds M (key, prompt) pairs. An input selects the K prompts whose
// keys are nearest to its query q(x) in cosine distance; the same K prefix
// experts are shared by every position of every prefixed layer, so selection
// costs M distance evaluations per input. Training minimizes
//   CE(g(z(x; selected prompts)), y) + lambda * sum_{s in selected} gamma(q(x), k_s)
// over the pool and the classifier, with q(x) treated as a constant.

#pragma once

#include <cstddef>
#include <cstdint>
#include <span>
#include <vector>

#include "relpool/attention.hpp"
#include "relpool/heads.hpp"
#include "relpool/numeric/optim.hpp"

namespace relpool {

struct PoolConfig {
  std::size_t pool_size = 10;     // M
  std::size_t top_k = 4;          // K
  std::size_t prompt_length = 1;  // L, experts per prompt
  double lambda = 0.1;
  double prompt_init_std = 0.02;

  void validate() const;
  bool operator==(const PoolConfig&) const = default;
};

class PromptPool {
 public:
  PromptPool() = default;
  /// Keys uniform on the unit sphere, prompts N(0, prompt_init_std^2).
  PromptPool(std::size_t task_id, const PoolConfig& config, std::size_t dim, Rng& rng);
  PromptPool(std::size_t task_id, const PoolConfig& config, Matrix keys, std::vector<Prompt> prompts);

  std::size_t task_id() const { return task_id_; }
  const PoolConfig& config() const { return config_; }
  std::size_t size() const { return prompts_.size(); }
  std::size_t dim() const { return keys_.cols(); }

  const Matrix& keys() const { return keys_; }
  const std::vector<Prompt>& prompts() const { return prompts_; }

  /// Flat view [keys (M x D), prompt_0.keys, prompt_0.values, prompt_1.keys, ...].
  Vector parameters() const;
  /// Inverse of parameters(). Throws std::logic_error once frozen.
  void set_parameters(std::span<const double> flat);
  std::size_t parameter_count() const;

  void freeze() { frozen_ = true; }
  bool frozen() const { return frozen_; }

  std::uint64_t checksum() const;
  std::vector<std::uint8_t> serialize() const;
  static PromptPool deserialize(std::span<const std::uint8_t> payload);

  bool operator==(const PromptPool& o) const {
    return task_id_ == o.task_id_ && config_ == o.config_ && keys_ == o.keys_ && prompts_ == o.prompts_;
  }

 private:
  std::size_t task_id_ = 0;
  PoolConfig config_;
  Matrix keys_;
  std::vector<Prompt> prompts_;
  bool frozen_ = false;
};

struct Selection {
  std::vector<std::size_t> indices;  // ascending distance, lowest index on ties
  std::vector<double> distances;
};

/// K nearest keys to q. Throws DegenerateInput on a zero-norm q or key.
Selection select(const PromptPool& pool, std::span<const double> q);

std::vector<const Prompt*> selected_prompts(const PromptPool& pool, const Selection& sel);

struct PoolLoss {
  double total = 0.0;
  double classification = 0.0;
  double surrogate = 0.0;
  Selection selection;
  std::size_t predicted_slot = 0;
};

/// Evaluates the joint objective at one labelled input. If `pool_grad`
/// (length pool.parameter_count()) or `head_grad` (length head params) are
/// non-null, their gradients are ADDED into them. Entries of unselected
/// prompts and keys receive exactly zero.
/// Throws InvalidArgument if `x.label` does not belong to the pool's task.
PoolLoss pool_loss(const PromptPool& pool, const TokenSequence& x, std::span<const double> q,
                   const EncoderParams& encoder, const ClassifierHead& head,
                   const RelationTaskMap& map, std::span<double> pool_grad = {},
                   std::span<double> head_grad = {});

struct PoolTrainOptions {
  std::size_t epochs = 20;
  double lr = 0.05;
  std::size_t batch_size = 16;
  OptimizerKind optimizer = OptimizerKind::kSgd;
  double head_lr = 1e-3;
  OptimizerKind head_optimizer = OptimizerKind::kAdam;

  bool operator==(const PoolTrainOptions&) const = default;
};

struct PoolTrainReport {
  std::vector<double> epoch_losses;
  double train_accuracy = 0.0;
  std::size_t steps = 0;
};

/// Mini-batch descent on the joint objective. `queries[i]` must be
/// q(data[i]); they are computed once by the caller and reused. Requires a
/// frozen encoder and an unfrozen pool; throws InvalidArgument on empty data
/// and NumericError if an epoch's loss is not finite.
PoolTrainReport train_pool(PromptPool& pool, std::span<const TokenSequence> data,
                           std::span<const Vector> queries, const EncoderParams& encoder,
                           ClassifierHead& head, const RelationTaskMap& map,
                           const PoolTrainOptions& opts, Rng& rng);

}  // namespace relpool
