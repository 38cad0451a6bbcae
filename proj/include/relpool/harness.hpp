// Continual-learning orchestration: per-task training in three stages,
// routed inference, stage-wise evaluation and ablation grids.
//
// Stage 1 trains a fresh prompt pool for the task jointly with a relation
// head. Stage 2 fits G_q and G_z for every new relation. Stage 3 samples a
// pseudo-dataset for every known relation and retrains the relation head and
// the task predictor from it. No raw instance outlives its own task.

#pragma once

#include <cstddef>
#include <cstdint>
#include <functional>
#include <iosfwd>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include "relpool/attention.hpp"
#include "relpool/datasets.hpp"
#include "relpool/heads.hpp"
#include "relpool/prompt_pool.hpp"
#include "relpool/replay.hpp"

namespace relpool {

struct HarnessConfig {
  EncoderConfig encoder;
  PoolConfig pool;
  PoolTrainOptions pool_train;
  ReplayOptions replay;
  HeadTrainOptions relation_head;
  HeadTrainOptions task_head;
  std::size_t head_hidden = 64;
  /// Stage 3 continues from the previous heads (widened) instead of a fresh init.
  bool head_warm_start = false;
  /// Skip stage 3: heads are fine-tuned on current-task real latents only.
  bool no_replay = false;

  void validate() const;
  bool operator==(const HarnessConfig&) const = default;
};

struct StageReport {
  std::size_t stage = 0;  // 1-based
  std::vector<std::size_t> test_sizes;
  std::vector<double> task_accuracy;
  /// Mean of task_accuracy weighted by test_sizes.
  double average_accuracy = 0.0;
  /// Unweighted mean of task_accuracy.
  double uniform_average_accuracy = 0.0;
  /// Per true task: fraction of its test instances routed to its own pool.
  std::vector<double> task_prediction_precision;
  /// Per predicted task: fraction of instances routed there that belong there
  /// (0 when nothing was routed to it).
  std::vector<double> routed_precision;
  /// Not written to the byte-stable report files.
  double wall_clock_seconds = 0.0;

  bool operator==(const StageReport& o) const {
    return stage == o.stage && test_sizes == o.test_sizes && task_accuracy == o.task_accuracy &&
           average_accuracy == o.average_accuracy &&
           uniform_average_accuracy == o.uniform_average_accuracy &&
           task_prediction_precision == o.task_prediction_precision &&
           routed_precision == o.routed_precision;
  }
};

class ContinualState {
 public:
  ContinualState() = default;
  /// Draws and freezes a random encoder from `seed`.
  ContinualState(const HarnessConfig& config, std::uint64_t seed);

  const HarnessConfig& config() const { return config_; }
  std::uint64_t seed() const { return seed_; }
  const EncoderParams& encoder() const { return encoder_; }
  const std::vector<PromptPool>& pools() const { return pools_; }
  const LatentGaussianStore& store() const { return store_; }
  const RelationTaskMap& map() const { return map_; }
  const ClassifierHead& relation_head() const { return relation_head_; }
  const ClassifierHead& task_head() const { return task_head_; }
  const std::vector<StageReport>& history() const { return history_; }
  std::size_t tasks_trained() const { return pools_.size(); }

  void record(StageReport report) { history_.push_back(std::move(report)); }

  std::vector<std::uint8_t> serialize() const;
  static ContinualState deserialize(std::span<const std::uint8_t> payload);

 private:
  friend struct TaskTrainer;

  HarnessConfig config_;
  std::uint64_t seed_ = 0;
  EncoderParams encoder_;
  std::vector<PromptPool> pools_;
  LatentGaussianStore store_;
  RelationTaskMap map_;
  ClassifierHead relation_head_;
  ClassifierHead task_head_;
  std::vector<StageReport> history_;
};

struct TaskTrainReport {
  std::size_t task = 0;
  PoolTrainReport pool;
  std::vector<double> relation_head_losses;
  std::vector<double> task_head_losses;
};

/// Runs the three stages for one task. `feed` is the only view of raw data.
/// Throws InvalidArgument if a relation is already known, the feed is empty,
/// a label lies outside feed.relations(), or feed.task() != tasks_trained().
TaskTrainReport train_task(ContinualState& state, const TaskFeed& feed);

struct Prediction {
  std::size_t task = 0;
  std::size_t slot = 0;
  RelationId relation = 0;
};

/// Routed inference. With `oracle_task` the task predictor is skipped and the
/// relation argmax is restricted to that task's slots.
Prediction infer(const ContinualState& state, const TokenSequence& x,
                 std::optional<std::size_t> oracle_task = std::nullopt);

struct EvalOptions {
  bool task_incremental = false;
};

/// Runs infer over the test splits of tasks 1..upto_stage.
StageReport evaluate(const ContinualState& state, const TaskStream& stream, std::size_t upto_stage,
                     const EvalOptions& opts = {});

struct RunHooks {
  /// Called with each feed right before it is handed to train_task.
  std::function<void(const TaskFeed&)> on_feed;
  /// Called after every stage has been trained and evaluated.
  std::function<void(const ContinualState&)> on_stage;
};

struct RunResult {
  ContinualState state;
  std::vector<StageReport> reports;             // class-incremental routing
  std::vector<StageReport> oracle_reports;      // filled if requested
  std::vector<TaskTrainReport> training;
};

/// Trains every task of `stream` in order, evaluating after each stage.
RunResult run_stream(const HarnessConfig& config, const TaskStream& stream, std::uint64_t seed,
                     bool also_task_incremental = false, const RunHooks& hooks = {});

struct GridPoint {
  std::optional<std::size_t> pool_size;      // M
  std::optional<std::size_t> top_k;          // K
  std::optional<std::size_t> prompt_length;  // L
  bool no_replay = false;
  bool task_incremental = false;

  std::string label() const;
  bool operator==(const GridPoint&) const = default;
};

struct AblationRow {
  GridPoint point;
  HarnessConfig config;
  /// Seed-mean size-weighted average accuracy after each stage.
  std::vector<double> stage_accuracy;
  std::vector<double> stage_uniform_accuracy;
  /// Per seed, per stage.
  std::vector<std::vector<StageReport>> per_seed;
};

/// Applies a grid point to a base config. Throws ConfigError if the result
/// is invalid (e.g. K > M).
HarnessConfig apply_grid_point(const HarnessConfig& base, const GridPoint& point);

/// Runs every grid point over `seeds`. Points that differ only in routing
/// share their training runs. Throws ConfigError on an empty or invalid grid.
std::vector<AblationRow> run_ablation(const HarnessConfig& base,
                                      const std::function<TaskStream(std::uint64_t)>& make_stream,
                                      std::span<const GridPoint> grid,
                                      std::span<const std::uint64_t> seeds);

// ---- report files ------------------------------------------------------------

/// stage,T1..Tn,average,uniform_average; accuracies as fixed 6-decimal numbers.
void write_reports_csv(std::span<const StageReport> reports, std::size_t num_tasks, std::ostream& out);
/// Full per-task breakdown, one object per stage.
void write_reports_json(std::span<const StageReport> reports, std::ostream& out);
/// One row per grid point: label,M,K,L,no_replay,task_incremental,S1..Sn.
void write_ablation_csv(std::span<const AblationRow> rows, std::ostream& out);

}  // namespace relpool
