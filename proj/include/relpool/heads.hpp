// Task predictor and relation classifier heads.
//
// Both heads are the same two-layer tanh MLP over relation-granularity labels:
// the task predictor reads q-space latents and the relation classifier reads
// z-space latents. Output slot s corresponds to RelationTaskMap::relation_at(s);
// a task identity is only ever derived from a predicted relation slot.

#pragma once

#include <cstddef>
#include <cstdint>
#include <map>
#include <span>
#include <vector>

#include "relpool/numeric/matrix.hpp"
#include "relpool/numeric/optim.hpp"
#include "relpool/numeric/rng.hpp"
#include "relpool/token_sequence.hpp"

namespace relpool {

class LatentGaussianStore;

/// Relation <-> task bookkeeping and the relation <-> output-slot order.
class RelationTaskMap {
 public:
  /// Registers a new task; returns its index. Throws InvalidArgument if any
  /// relation is already known or the set is empty / has duplicates.
  std::size_t add_task(const std::vector<RelationId>& relations);

  std::size_t num_tasks() const { return tasks_.size(); }
  std::size_t num_relations() const { return slots_.size(); }
  bool contains(RelationId r) const { return slot_index_.contains(r); }

  std::size_t slot_of(RelationId r) const;
  RelationId relation_at(std::size_t slot) const;
  std::size_t task_of_slot(std::size_t slot) const;
  std::size_t task_of(RelationId r) const { return task_of_slot(slot_of(r)); }
  const std::vector<RelationId>& relations_of(std::size_t task) const;

  bool operator==(const RelationTaskMap&) const = default;

 private:
  std::vector<std::vector<RelationId>> tasks_;
  std::vector<RelationId> slots_;
  std::vector<std::size_t> slot_task_;
  std::map<RelationId, std::size_t> slot_index_;
};

/// Two-layer MLP: logits = W2^T tanh(W1^T x + b1) + b2.
/// Parameters live in one flat array laid out as [W1 (in x hidden), b1,
/// W2 (hidden x out), b2] so optimizers and gradient checks see one vector.
class ClassifierHead {
 public:
  ClassifierHead() = default;
  ClassifierHead(std::size_t input_dim, std::size_t hidden_dim, std::size_t output_dim, Rng& rng);

  std::size_t input_dim() const { return in_; }
  std::size_t hidden_dim() const { return hidden_; }
  std::size_t output_dim() const { return out_; }

  std::span<double> params() { return params_; }
  std::span<const double> params() const { return params_; }

  Vector logits(std::span<const double> x) const;

  /// Cross-entropy at (x, label). Adds d loss / d params into `grad_params`
  /// and, if non-null, writes d loss / d x into `grad_input`.
  double loss_and_grad(std::span<const double> x, std::size_t label, std::span<double> grad_params,
                       Vector* grad_input = nullptr) const;

  /// Widens the output layer by `new_outputs` slots. Existing slots keep their
  /// weights bit-exactly; new columns are drawn from `rng`.
  void expand(std::size_t new_outputs, Rng& rng);

  std::vector<std::uint8_t> serialize() const;
  static ClassifierHead deserialize(std::span<const std::uint8_t> payload);

  bool operator==(const ClassifierHead&) const = default;

 private:
  std::size_t w1_offset() const { return 0; }
  std::size_t b1_offset() const { return in_ * hidden_; }
  std::size_t w2_offset() const { return b1_offset() + hidden_; }
  std::size_t b2_offset() const { return w2_offset() + hidden_ * out_; }
  void hidden_activations(std::span<const double> x, Vector& h) const;

  std::size_t in_ = 0, hidden_ = 0, out_ = 0;
  std::vector<double> params_;
};

struct HeadTrainOptions {
  std::size_t epochs = 300;
  double lr = 1e-3;
  std::size_t batch_size = 64;
  std::size_t samples_per_relation = 200;
  OptimizerKind optimizer = OptimizerKind::kAdam;

  bool operator==(const HeadTrainOptions&) const = default;
};

/// Labelled latent vectors; labels are output slots.
struct LatentDataset {
  Matrix inputs;
  std::vector<std::size_t> labels;
};

/// Mini-batch cross-entropy training; returns the mean loss of every epoch.
/// Throws NumericError if an epoch's loss is not finite.
std::vector<double> train_head(ClassifierHead& head, const LatentDataset& data,
                               const HeadTrainOptions& opts, Rng& rng);

double mean_loss(const ClassifierHead& head, const LatentDataset& data);
double accuracy(const ClassifierHead& head, const LatentDataset& data);

/// Draws samples_per_relation q-latents (or z-latents) for every relation in
/// `map`, labelled by slot. Throws InvalidArgument if the store is empty or
/// misses a relation.
LatentDataset sample_query_dataset(const LatentGaussianStore& store, const RelationTaskMap& map,
                                   std::size_t samples_per_relation, Rng& rng);
LatentDataset sample_relation_dataset(const LatentGaussianStore& store, const RelationTaskMap& map,
                                      std::size_t samples_per_relation, Rng& rng);

/// Cross-entropy over relation labels on G_q samples.
std::vector<double> train_task_predictor(ClassifierHead& head, const LatentGaussianStore& store,
                                         const RelationTaskMap& map, const HeadTrainOptions& opts,
                                         Rng& rng);
/// Cross-entropy over relation labels on G_z samples for every known relation.
std::vector<double> train_relation_classifier(ClassifierHead& head,
                                              const LatentGaussianStore& store,
                                              const RelationTaskMap& map,
                                              const HeadTrainOptions& opts, Rng& rng);

/// Task owning the argmax relation slot (lowest slot wins ties).
std::size_t predict_task(const ClassifierHead& head, const RelationTaskMap& map,
                         std::span<const double> q);
/// Argmax relation slot (lowest slot wins ties).
std::size_t classify_relation(const ClassifierHead& head, std::span<const double> z);

}  // namespace relpool
