#include "relpool/heads.hpp"

#include <cmath>
#include <numeric>
#include <set>
#include <string>

#include "relpool/errors.hpp"
#include "relpool/io/binary.hpp"
#include "relpool/numeric/kernels.hpp"
#include "relpool/numeric/ops.hpp"
#include "relpool/replay.hpp"

namespace relpool {

// ---- RelationTaskMap --------------------------------------------------------

std::size_t RelationTaskMap::add_task(const std::vector<RelationId>& relations) {
  if (relations.empty()) throw InvalidArgument("relation map: task with no relations");
  std::set<RelationId> seen;
  for (RelationId r : relations) {
    if (!seen.insert(r).second) throw InvalidArgument("relation map: duplicate relation in task");
    if (contains(r)) {
      throw InvalidArgument("relation map: relation " + std::to_string(r) +
                            " already belongs to task " + std::to_string(task_of(r)));
    }
  }
  const std::size_t task = tasks_.size();
  tasks_.push_back(relations);
  for (RelationId r : relations) {
    slot_index_[r] = slots_.size();
    slots_.push_back(r);
    slot_task_.push_back(task);
  }
  return task;
}

std::size_t RelationTaskMap::slot_of(RelationId r) const {
  auto it = slot_index_.find(r);
  if (it == slot_index_.end()) throw InvalidArgument("relation map: unknown relation " + std::to_string(r));
  return it->second;
}

RelationId RelationTaskMap::relation_at(std::size_t slot) const {
  if (slot >= slots_.size()) throw InvalidArgument("relation map: slot out of range");
  return slots_[slot];
}

std::size_t RelationTaskMap::task_of_slot(std::size_t slot) const {
  if (slot >= slot_task_.size()) throw InvalidArgument("relation map: slot out of range");
  return slot_task_[slot];
}

const std::vector<RelationId>& RelationTaskMap::relations_of(std::size_t task) const {
  if (task >= tasks_.size()) throw InvalidArgument("relation map: task out of range");
  return tasks_[task];
}

// ---- ClassifierHead ---------------------------------------------------------

ClassifierHead::ClassifierHead(std::size_t input_dim, std::size_t hidden_dim,
                               std::size_t output_dim, Rng& rng)
    : in_(input_dim), hidden_(hidden_dim), out_(output_dim) {
  if (in_ == 0 || hidden_ == 0 || out_ == 0) throw InvalidArgument("head: zero dimension");
  params_.assign(b2_offset() + out_, 0.0);
  const double s1 = 1.0 / std::sqrt(static_cast<double>(in_));
  const double s2 = 1.0 / std::sqrt(static_cast<double>(hidden_));
  for (std::size_t i = 0; i < in_ * hidden_; ++i) params_[w1_offset() + i] = rng.normal(0.0, s1);
  for (std::size_t i = 0; i < hidden_ * out_; ++i) params_[w2_offset() + i] = rng.normal(0.0, s2);
}

void ClassifierHead::hidden_activations(std::span<const double> x, Vector& h) const {
  if (x.size() != in_) {
    throw InvalidArgument("head: input dim " + std::to_string(x.size()) + " != " +
                          std::to_string(in_));
  }
  h.resize(hidden_);
  kernels::vecmat(x.data(), params_.data() + w1_offset(), in_, hidden_, h.data());
  const double* b1 = params_.data() + b1_offset();
  for (std::size_t j = 0; j < hidden_; ++j) h[j] = std::tanh(h[j] + b1[j]);
}

Vector ClassifierHead::logits(std::span<const double> x) const {
  Vector h;
  hidden_activations(x, h);
  Vector out(out_);
  kernels::vecmat(h.data(), params_.data() + w2_offset(), hidden_, out_, out.data());
  const double* b2 = params_.data() + b2_offset();
  for (std::size_t k = 0; k < out_; ++k) out[k] += b2[k];
  return out;
}

double ClassifierHead::loss_and_grad(std::span<const double> x, std::size_t label,
                                     std::span<double> grad_params, Vector* grad_input) const {
  if (grad_params.size() != params_.size()) throw InvalidArgument("head: gradient buffer size");
  Vector h;
  hidden_activations(x, h);
  Vector out(out_);
  kernels::vecmat(h.data(), params_.data() + w2_offset(), hidden_, out_, out.data());
  const double* b2 = params_.data() + b2_offset();
  for (std::size_t k = 0; k < out_; ++k) out[k] += b2[k];

  const double loss = cross_entropy(out, label);
  const Vector d_out = cross_entropy_grad(out, label);

  double* g = grad_params.data();
  const double* w2 = params_.data() + w2_offset();
  Vector d_pre(hidden_);
  for (std::size_t j = 0; j < hidden_; ++j) {
    kernels::axpy(h[j], d_out.data(), g + w2_offset() + j * out_, out_);
    const double dh = kernels::dot(w2 + j * out_, d_out.data(), out_);
    d_pre[j] = dh * (1.0 - h[j] * h[j]);
  }
  kernels::axpy(1.0, d_out.data(), g + b2_offset(), out_);
  for (std::size_t i = 0; i < in_; ++i) {
    if (x[i] != 0.0) kernels::axpy(x[i], d_pre.data(), g + w1_offset() + i * hidden_, hidden_);
  }
  kernels::axpy(1.0, d_pre.data(), g + b1_offset(), hidden_);

  if (grad_input) {
    grad_input->assign(in_, 0.0);
    const double* w1 = params_.data() + w1_offset();
    for (std::size_t i = 0; i < in_; ++i) (*grad_input)[i] = kernels::dot(w1 + i * hidden_, d_pre.data(), hidden_);
  }
  return loss;
}

void ClassifierHead::expand(std::size_t new_outputs, Rng& rng) {
  if (new_outputs == 0) return;
  const std::size_t new_out = out_ + new_outputs;
  std::vector<double> next(b2_offset() - (hidden_ * out_) + hidden_ * new_out + new_out, 0.0);
  std::copy_n(params_.begin(), w2_offset(), next.begin());
  const double s2 = 1.0 / std::sqrt(static_cast<double>(hidden_));
  for (std::size_t j = 0; j < hidden_; ++j) {
    for (std::size_t k = 0; k < out_; ++k) next[w2_offset() + j * new_out + k] = params_[w2_offset() + j * out_ + k];
  }
  // New columns are drawn column-major so that widening in one step or in
  // several steps consumes the rng in the same order per new slot.
  for (std::size_t k = out_; k < new_out; ++k)
    for (std::size_t j = 0; j < hidden_; ++j) next[w2_offset() + j * new_out + k] = rng.normal(0.0, s2);
  const std::size_t new_b2 = w2_offset() + hidden_ * new_out;
  std::copy_n(params_.begin() + b2_offset(), out_, next.begin() + new_b2);
  out_ = new_out;
  params_ = std::move(next);
}

std::vector<std::uint8_t> ClassifierHead::serialize() const {
  io::Writer w;
  w.u64(in_);
  w.u64(hidden_);
  w.u64(out_);
  w.vec(params_);
  return w.take();
}

ClassifierHead ClassifierHead::deserialize(std::span<const std::uint8_t> payload) {
  io::Reader r(payload);
  ClassifierHead h;
  h.in_ = r.u64();
  h.hidden_ = r.u64();
  h.out_ = r.u64();
  h.params_ = r.vec();
  if (h.params_.size() != h.b2_offset() + h.out_) throw ParseError("head blob: parameter count mismatch");
  if (!r.at_end()) throw ParseError("head blob: trailing bytes");
  return h;
}

// ---- Training ---------------------------------------------------------------

std::vector<double> train_head(ClassifierHead& head, const LatentDataset& data,
                               const HeadTrainOptions& opts, Rng& rng) {
  const std::size_t n = data.labels.size();
  if (n == 0 || data.inputs.rows() != n) throw InvalidArgument("train_head: empty or ragged dataset");
  if (data.inputs.cols() != head.input_dim()) throw InvalidArgument("train_head: input dim mismatch");
  for (std::size_t y : data.labels)
    if (y >= head.output_dim()) throw InvalidArgument("train_head: label outside head output");

  Optimizer opt(opts.optimizer, opts.lr);
  std::vector<std::size_t> order(n);
  std::iota(order.begin(), order.end(), std::size_t{0});
  std::vector<double> grad(head.params().size());
  std::vector<double> epoch_losses;
  epoch_losses.reserve(opts.epochs);
  const std::size_t batch = std::max<std::size_t>(1, opts.batch_size);

  for (std::size_t e = 0; e < opts.epochs; ++e) {
    rng.shuffle(order);
    double total = 0.0;
    for (std::size_t start = 0; start < n; start += batch) {
      const std::size_t end = std::min(n, start + batch);
      std::fill(grad.begin(), grad.end(), 0.0);
      for (std::size_t b = start; b < end; ++b) {
        const std::size_t i = order[b];
        total += head.loss_and_grad(data.inputs.row(i), data.labels[i], grad);
      }
      const double inv = 1.0 / static_cast<double>(end - start);
      for (double& g : grad) g *= inv;
      opt.step(head.params(), grad);
    }
    const double mean = total / static_cast<double>(n);
    if (!std::isfinite(mean)) {
      throw NumericError("train_head: loss diverged at epoch " + std::to_string(epoch_losses.size() + 1));
    }
    epoch_losses.push_back(mean);
  }
  return epoch_losses;
}

double mean_loss(const ClassifierHead& head, const LatentDataset& data) {
  double total = 0.0;
  for (std::size_t i = 0; i < data.labels.size(); ++i)
    total += cross_entropy(head.logits(data.inputs.row(i)), data.labels[i]);
  return data.labels.empty() ? 0.0 : total / static_cast<double>(data.labels.size());
}

double accuracy(const ClassifierHead& head, const LatentDataset& data) {
  std::size_t correct = 0;
  for (std::size_t i = 0; i < data.labels.size(); ++i)
    correct += classify_relation(head, data.inputs.row(i)) == data.labels[i];
  return data.labels.empty() ? 0.0 : static_cast<double>(correct) / static_cast<double>(data.labels.size());
}

namespace {

LatentDataset sample_dataset(const LatentGaussianStore& store, const RelationTaskMap& map,
                             std::size_t per_relation, Rng& rng, bool query_space) {
  if (store.empty()) throw InvalidArgument("replay: empty generative store");
  if (map.num_relations() == 0) throw InvalidArgument("replay: no relations registered");
  if (per_relation == 0) throw InvalidArgument("replay: samples_per_relation must be positive");
  std::vector<Vector> rows;
  LatentDataset data;
  rows.reserve(per_relation * map.num_relations());
  for (std::size_t slot = 0; slot < map.num_relations(); ++slot) {
    const RelationId r = map.relation_at(slot);
    if (!store.contains(r)) {
      throw InvalidArgument("replay: store has no model for relation " + std::to_string(r));
    }
    const auto& models = store.at(r);
    auto drawn = sample(query_space ? models.query : models.prompted, per_relation, rng);
    for (auto& v : drawn) {
      rows.push_back(std::move(v));
      data.labels.push_back(slot);
    }
  }
  data.inputs = Matrix::from_rows(rows);
  return data;
}

}  // namespace

LatentDataset sample_query_dataset(const LatentGaussianStore& store, const RelationTaskMap& map,
                                   std::size_t samples_per_relation, Rng& rng) {
  return sample_dataset(store, map, samples_per_relation, rng, true);
}

LatentDataset sample_relation_dataset(const LatentGaussianStore& store, const RelationTaskMap& map,
                                      std::size_t samples_per_relation, Rng& rng) {
  return sample_dataset(store, map, samples_per_relation, rng, false);
}

std::vector<double> train_task_predictor(ClassifierHead& head, const LatentGaussianStore& store,
                                         const RelationTaskMap& map, const HeadTrainOptions& opts,
                                         Rng& rng) {
  const LatentDataset data = sample_query_dataset(store, map, opts.samples_per_relation, rng);
  return train_head(head, data, opts, rng);
}

std::vector<double> train_relation_classifier(ClassifierHead& head,
                                              const LatentGaussianStore& store,
                                              const RelationTaskMap& map,
                                              const HeadTrainOptions& opts, Rng& rng) {
  const LatentDataset data = sample_relation_dataset(store, map, opts.samples_per_relation, rng);
  return train_head(head, data, opts, rng);
}

std::size_t predict_task(const ClassifierHead& head, const RelationTaskMap& map,
                         std::span<const double> q) {
  return map.task_of_slot(argmax(head.logits(q)));
}

std::size_t classify_relation(const ClassifierHead& head, std::span<const double> z) {
  return argmax(head.logits(z));
}

}  // namespace relpool
