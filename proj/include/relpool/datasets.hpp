// Continual relation-extraction task streams.
//
// The synthetic generator builds one template per relation: a bag of context
// tokens, part unique to the relation and part drawn from a pool shared by all
// relations (context_overlap), so that different relations can look nearly
// alike. A sample is
//   [SENT] ctx.. [E1] ent [/E1] ctx.. [E2] ent [/E2] ctx..
// with context drawn from the template and entity tokens drawn at random.
// Relations are shuffled into disjoint tasks by seed.

#pragma once

#include <cstddef>
#include <cstdint>
#include <filesystem>
#include <iosfwd>
#include <span>
#include <string>
#include <string_view>
#include <vector>

#include "relpool/token_sequence.hpp"

namespace relpool {

struct StreamConfig {
  std::size_t num_tasks = 5;
  std::size_t relations_per_task = 4;
  std::size_t train_per_relation = 100;
  std::size_t test_per_relation = 40;
  std::size_t vocab_size = 120;
  std::size_t seq_len = 16;
  std::size_t template_tokens = 6;
  std::size_t entity_tokens = 16;
  double context_overlap = 0.5;
  /// Skews per-relation training counts geometrically down to
  /// imbalance_min_fraction of train_per_relation.
  bool imbalanced = false;
  double imbalance_min_fraction = 0.2;

  bool operator==(const StreamConfig&) const = default;
};

struct TaskSplit {
  std::vector<RelationId> relations;
  std::vector<TokenSequence> train;
  std::vector<TokenSequence> test;
};

struct TaskStream {
  std::vector<TaskSplit> tasks;
  std::vector<std::string> vocab;  // id -> surface form
  std::uint64_t seed = 0;

  std::size_t vocab_size() const { return vocab.size(); }
  std::size_t num_relations() const;
  std::size_t max_sequence_length() const;
};

/// Throws InvalidArgument for zero counts, seq_len too short for the entity
/// blocks, an overlap outside [0, 1], or a vocabulary too small for the
/// requested number of templates.
TaskStream generate_stream(const StreamConfig& config, std::uint64_t seed);

struct IngestOptions {
  std::size_t max_len = 64;
  double test_fraction = 0.2;
};

/// FewRel layout: {"<relation>": [{"tokens": [...], "h": [name, id, [[i, ...]]],
///                                 "t": [name, id, [[j, ...]]]}, ...], ...}.
/// Throws ParseError (with line/column for syntax errors, relation and
/// instance index otherwise).
TaskStream parse_fewrel_json(std::string_view text, std::size_t num_tasks, std::uint64_t seed,
                             const IngestOptions& opts = {});
TaskStream ingest_fewrel_json(const std::filesystem::path& path, std::size_t num_tasks,
                              std::uint64_t seed, const IngestOptions& opts = {});

/// One header line followed by one JSON object per sample.
void write_stream_jsonl(const TaskStream& stream, std::ostream& out);

/// Read-only window onto one task's training split, handed to the trainer
/// for that task. Earlier tasks' instances are never reachable through it.
class TaskFeed {
 public:
  TaskFeed(std::size_t task, std::span<const RelationId> relations,
           std::span<const TokenSequence> train)
      : task_(task), relations_(relations), train_(train) {}

  std::size_t task() const { return task_; }
  std::span<const RelationId> relations() const { return relations_; }
  std::span<const TokenSequence> train() const { return train_; }

 private:
  std::size_t task_;
  std::span<const RelationId> relations_;
  std::span<const TokenSequence> train_;
};

}  // namespace relpool
