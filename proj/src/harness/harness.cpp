#include "relpool/harness.hpp"

#include <algorithm>
#include <chrono>
#include <string>

#include "relpool/errors.hpp"
#include "relpool/io/binary.hpp"
#include "relpool/numeric/ops.hpp"

namespace relpool {

namespace {

constexpr std::uint64_t kEncoderStream = 1;
constexpr std::uint64_t kTaskStreamBase = 1000;

void write_head_opts(io::Writer& w, const HeadTrainOptions& o) {
  w.u64(o.epochs);
  w.f64(o.lr);
  w.u64(o.batch_size);
  w.u64(o.samples_per_relation);
  w.u8(static_cast<std::uint8_t>(o.optimizer));
}

HeadTrainOptions read_head_opts(io::Reader& r) {
  HeadTrainOptions o;
  o.epochs = r.u64();
  o.lr = r.f64();
  o.batch_size = r.u64();
  o.samples_per_relation = r.u64();
  o.optimizer = static_cast<OptimizerKind>(r.u8());
  return o;
}

// Everything except the encoder config, which travels inside the encoder blob.
void write_harness_config(io::Writer& w, const HarnessConfig& c) {
  w.u64(c.pool.pool_size);
  w.u64(c.pool.top_k);
  w.u64(c.pool.prompt_length);
  w.f64(c.pool.lambda);
  w.f64(c.pool.prompt_init_std);
  w.u64(c.pool_train.epochs);
  w.f64(c.pool_train.lr);
  w.u64(c.pool_train.batch_size);
  w.u8(static_cast<std::uint8_t>(c.pool_train.optimizer));
  w.f64(c.pool_train.head_lr);
  w.u8(static_cast<std::uint8_t>(c.pool_train.head_optimizer));
  w.f64(c.replay.ridge);
  w.u8(c.replay.diagonal ? 1 : 0);
  w.u64(c.replay.n_components);
  w.u64(c.replay.max_iterations);
  w.f64(c.replay.tolerance);
  write_head_opts(w, c.relation_head);
  write_head_opts(w, c.task_head);
  w.u64(c.head_hidden);
  w.u8(c.head_warm_start ? 1 : 0);
  w.u8(c.no_replay ? 1 : 0);
}

HarnessConfig read_harness_config(io::Reader& r) {
  HarnessConfig c;
  c.pool.pool_size = r.u64();
  c.pool.top_k = r.u64();
  c.pool.prompt_length = r.u64();
  c.pool.lambda = r.f64();
  c.pool.prompt_init_std = r.f64();
  c.pool_train.epochs = r.u64();
  c.pool_train.lr = r.f64();
  c.pool_train.batch_size = r.u64();
  c.pool_train.optimizer = static_cast<OptimizerKind>(r.u8());
  c.pool_train.head_lr = r.f64();
  c.pool_train.head_optimizer = static_cast<OptimizerKind>(r.u8());
  c.replay.ridge = r.f64();
  c.replay.diagonal = r.u8() != 0;
  c.replay.n_components = r.u64();
  c.replay.max_iterations = r.u64();
  c.replay.tolerance = r.f64();
  c.relation_head = read_head_opts(r);
  c.task_head = read_head_opts(r);
  c.head_hidden = r.u64();
  c.head_warm_start = r.u8() != 0;
  c.no_replay = r.u8() != 0;
  return c;
}

void write_sizes(io::Writer& w, const std::vector<std::size_t>& v) {
  w.u64(v.size());
  for (std::size_t x : v) w.u64(x);
}

std::vector<std::size_t> read_sizes(io::Reader& r) {
  std::vector<std::size_t> v(r.u64());
  for (auto& x : v) x = r.u64();
  return v;
}

void write_report(io::Writer& w, const StageReport& s) {
  w.u64(s.stage);
  write_sizes(w, s.test_sizes);
  w.vec(s.task_accuracy);
  w.f64(s.average_accuracy);
  w.f64(s.uniform_average_accuracy);
  w.vec(s.task_prediction_precision);
  w.vec(s.routed_precision);
}

StageReport read_report(io::Reader& r) {
  StageReport s;
  s.stage = r.u64();
  s.test_sizes = read_sizes(r);
  s.task_accuracy = r.vec();
  s.average_accuracy = r.f64();
  s.uniform_average_accuracy = r.f64();
  s.task_prediction_precision = r.vec();
  s.routed_precision = r.vec();
  return s;
}

void put_blob(io::Writer& w, const std::vector<std::uint8_t>& b) {
  w.u64(b.size());
  w.bytes(b);
}

ClassifierHead fresh_or_widened(const ClassifierHead& prev, bool warm, std::size_t in,
                                std::size_t hidden, std::size_t out, Rng& rng) {
  if (warm && prev.output_dim() > 0) {
    ClassifierHead h = prev;
    if (out > h.output_dim()) h.expand(out - h.output_dim(), rng);
    return h;
  }
  return ClassifierHead(in, hidden, out, rng);
}

}  // namespace

void HarnessConfig::validate() const {
  encoder.validate();
  pool.validate();
  if (replay.n_components < 1) throw InvalidArgument("config: n_components must be >= 1");
  if (!(replay.ridge > 0.0)) throw InvalidArgument("config: ridge must be positive");
  if (head_hidden < 1) throw InvalidArgument("config: head_hidden must be >= 1");
  if (relation_head.samples_per_relation < replay.n_components ||
      task_head.samples_per_relation < 1) {
    throw InvalidArgument("config: samples_per_relation must be >= 1");
  }
  for (double lr : {pool_train.lr, pool_train.head_lr, relation_head.lr, task_head.lr}) {
    if (!(lr > 0.0)) throw InvalidArgument("config: learning rates must be positive");
  }
}

ContinualState::ContinualState(const HarnessConfig& config, std::uint64_t seed)
    : config_(config), seed_(seed) {
  config_.validate();
  Rng rng = Rng(seed).fork(kEncoderStream);
  encoder_ = EncoderParams::random(config_.encoder, rng);
  encoder_.freeze();
}

std::vector<std::uint8_t> ContinualState::serialize() const {
  io::Writer w;
  w.u64(seed_);
  write_harness_config(w, config_);
  put_blob(w, encoder_.serialize());
  w.u64(pools_.size());
  for (const auto& p : pools_) put_blob(w, p.serialize());
  put_blob(w, store_.serialize());
  w.u64(map_.num_tasks());
  for (std::size_t t = 0; t < map_.num_tasks(); ++t) {
    const auto& rels = map_.relations_of(t);
    w.u64(rels.size());
    for (RelationId r : rels) w.u32(r);
  }
  put_blob(w, relation_head_.serialize());
  put_blob(w, task_head_.serialize());
  w.u64(history_.size());
  for (const auto& s : history_) write_report(w, s);
  return w.take();
}

ContinualState ContinualState::deserialize(std::span<const std::uint8_t> payload) {
  io::Reader r(payload);
  ContinualState s;
  s.seed_ = r.u64();
  s.config_ = read_harness_config(r);
  auto blob = [&r] {
    const std::size_t n = r.u64();
    return r.bytes(n);
  };
  s.encoder_ = EncoderParams::deserialize(blob());
  s.config_.encoder = s.encoder_.config();
  s.pools_.resize(r.u64());
  for (auto& p : s.pools_) p = PromptPool::deserialize(blob());
  s.store_ = LatentGaussianStore::deserialize(blob());
  const std::size_t tasks = r.u64();
  try {
    for (std::size_t t = 0; t < tasks; ++t) {
      std::vector<RelationId> rels(r.u64());
      for (auto& x : rels) x = r.u32();
      s.map_.add_task(rels);
    }
  } catch (const InvalidArgument& e) {
    throw ParseError(std::string("state blob: ") + e.what());
  }
  s.relation_head_ = ClassifierHead::deserialize(blob());
  s.task_head_ = ClassifierHead::deserialize(blob());
  s.history_.resize(r.u64());
  for (auto& h : s.history_) h = read_report(r);
  if (!r.at_end()) throw ParseError("state blob: trailing bytes");
  if (s.pools_.size() != s.map_.num_tasks() || s.store_.size() != s.map_.num_relations()) {
    throw ParseError("state blob: pools, store and relation map disagree");
  }
  return s;
}

struct TaskTrainer {
  static TaskTrainReport run(ContinualState& s, const TaskFeed& feed) {
    const auto& cfg = s.config_;
    if (feed.task() != s.tasks_trained()) {
      throw InvalidArgument("train_task: feed for task " + std::to_string(feed.task()) +
                            " but " + std::to_string(s.tasks_trained()) + " tasks trained");
    }
    if (feed.train().empty()) throw InvalidArgument("train_task: empty training split");
    std::vector<RelationId> relations(feed.relations().begin(), feed.relations().end());
    for (const auto& x : feed.train()) {
      if (std::find(relations.begin(), relations.end(), x.label) == relations.end()) {
        throw InvalidArgument("train_task: label " + std::to_string(x.label) +
                              " outside the task's relation set");
      }
    }
    const std::size_t t = s.map_.add_task(relations);
    const std::size_t dim = cfg.encoder.dim;
    const std::size_t n_slots = s.map_.num_relations();

    Rng rng = Rng(s.seed_).fork(kTaskStreamBase + t);
    Rng init_rng = rng.fork(1);
    Rng pool_rng = rng.fork(2);
    Rng fit_rng = rng.fork(3);
    Rng relation_rng = rng.fork(4);
    Rng task_rng = rng.fork(5);

    TaskTrainReport report;
    report.task = t;
    const auto data = feed.train();
    std::vector<Vector> queries;
    queries.reserve(data.size());
    for (const auto& x : data) queries.push_back(encode_query(x, s.encoder_));

    // Stage 1: new pool with a jointly trained relation head.
    ClassifierHead pool_head = fresh_or_widened(s.relation_head_, cfg.no_replay, 2 * dim,
                                                cfg.head_hidden, n_slots, init_rng);
    PromptPool pool(t, cfg.pool, dim, init_rng);
    report.pool = train_pool(pool, data, queries, s.encoder_, pool_head, s.map_, cfg.pool_train, pool_rng);
    pool.freeze();

    std::vector<Vector> latents;
    latents.reserve(data.size());
    for (std::size_t i = 0; i < data.size(); ++i) {
      const auto chosen = selected_prompts(pool, select(pool, queries[i]));
      latents.push_back(encode_prompted(data[i], s.encoder_, chosen));
    }
    s.pools_.push_back(std::move(pool));

    // Stage 2: per-relation generative models.
    for (RelationId r : relations) {
      std::vector<Vector> q_r, z_r;
      for (std::size_t i = 0; i < data.size(); ++i) {
        if (data[i].label != r) continue;
        q_r.push_back(queries[i]);
        z_r.push_back(latents[i]);
      }
      RelationModels m;
      m.query = fit_mixture(q_r, cfg.replay.n_components, fit_rng, cfg.replay).model;
      m.prompted = fit_mixture(z_r, cfg.replay.n_components, fit_rng, cfg.replay).model;
      s.store_.add(r, std::move(m));
    }

    // Stage 3: heads from pseudo-data over every known relation.
    if (!cfg.no_replay) {
      s.relation_head_ = fresh_or_widened(s.relation_head_, cfg.head_warm_start, 2 * dim,
                                          cfg.head_hidden, n_slots, relation_rng);
      report.relation_head_losses =
          train_relation_classifier(s.relation_head_, s.store_, s.map_, cfg.relation_head, relation_rng);
      s.task_head_ = fresh_or_widened(s.task_head_, cfg.head_warm_start, dim, cfg.head_hidden,
                                      n_slots, task_rng);
      report.task_head_losses =
          train_task_predictor(s.task_head_, s.store_, s.map_, cfg.task_head, task_rng);
    } else {
      // Without replay the heads only ever see the current task.
      s.relation_head_ = std::move(pool_head);
      s.task_head_ = fresh_or_widened(s.task_head_, true, dim, cfg.head_hidden, n_slots, task_rng);
      LatentDataset current{Matrix(data.size(), dim), {}};
      for (std::size_t i = 0; i < data.size(); ++i) {
        std::copy(queries[i].begin(), queries[i].end(), current.inputs.row(i).begin());
        current.labels.push_back(s.map_.slot_of(data[i].label));
      }
      report.task_head_losses = train_head(s.task_head_, current, cfg.task_head, task_rng);
    }
    return report;
  }
};

TaskTrainReport train_task(ContinualState& state, const TaskFeed& feed) {
  return TaskTrainer::run(state, feed);
}

Prediction infer(const ContinualState& state, const TokenSequence& x,
                 std::optional<std::size_t> oracle_task) {
  const std::size_t n_pools = state.pools().size();
  if (n_pools == 0) throw InvalidArgument("infer: no task trained");
  if (oracle_task && *oracle_task >= n_pools) throw InvalidArgument("infer: oracle task out of range");
  const Vector q = encode_query(x, state.encoder());

  Prediction p;
  if (oracle_task) {
    p.task = *oracle_task;
  } else if (n_pools > 1) {
    p.task = predict_task(state.task_head(), state.map(), q);
  }
  const PromptPool& pool = state.pools()[p.task];
  const Vector z = encode_prompted(x, state.encoder(), selected_prompts(pool, select(pool, q)));

  if (oracle_task) {
    const Vector logits = state.relation_head().logits(z);
    bool first = true;
    for (RelationId r : state.map().relations_of(p.task)) {
      const std::size_t s = state.map().slot_of(r);
      if (first || logits[s] > logits[p.slot] || (logits[s] == logits[p.slot] && s < p.slot)) p.slot = s;
      first = false;
    }
  } else {
    p.slot = classify_relation(state.relation_head(), z);
  }
  p.relation = state.map().relation_at(p.slot);
  return p;
}

StageReport evaluate(const ContinualState& state, const TaskStream& stream, std::size_t upto_stage,
                     const EvalOptions& opts) {
  if (upto_stage < 1 || upto_stage > state.tasks_trained() || upto_stage > stream.tasks.size()) {
    throw InvalidArgument("evaluate: stage " + std::to_string(upto_stage) + " not trained");
  }
  StageReport rep;
  rep.stage = upto_stage;
  std::vector<std::size_t> routed(upto_stage, 0), routed_right(upto_stage, 0);
  std::size_t total = 0, total_correct = 0;
  for (std::size_t j = 0; j < upto_stage; ++j) {
    const auto& test = stream.tasks[j].test;
    std::size_t correct = 0, own = 0;
    for (const auto& x : test) {
      const Prediction p = infer(state, x, opts.task_incremental ? std::optional(j) : std::nullopt);
      correct += p.relation == x.label;
      own += p.task == j;
      if (p.task < upto_stage) {
        ++routed[p.task];
        routed_right[p.task] += p.task == j;
      }
    }
    const double n = static_cast<double>(test.size());
    rep.test_sizes.push_back(test.size());
    rep.task_accuracy.push_back(test.empty() ? 0.0 : static_cast<double>(correct) / n);
    rep.task_prediction_precision.push_back(test.empty() ? 0.0 : static_cast<double>(own) / n);
    total += test.size();
    total_correct += correct;
  }
  for (std::size_t j = 0; j < upto_stage; ++j) {
    rep.routed_precision.push_back(
        routed[j] == 0 ? 0.0 : static_cast<double>(routed_right[j]) / static_cast<double>(routed[j]));
  }
  rep.average_accuracy = total == 0 ? 0.0 : static_cast<double>(total_correct) / static_cast<double>(total);
  double sum = 0.0;
  for (double a : rep.task_accuracy) sum += a;
  rep.uniform_average_accuracy = sum / static_cast<double>(upto_stage);
  return rep;
}

RunResult run_stream(const HarnessConfig& config, const TaskStream& stream, std::uint64_t seed,
                     bool also_task_incremental, const RunHooks& hooks) {
  if (stream.tasks.empty()) throw InvalidArgument("run_stream: empty stream");
  if (stream.vocab_size() > config.encoder.vocab_size) {
    throw ConfigError("stream vocabulary (" + std::to_string(stream.vocab_size()) +
                      ") exceeds encoder vocab_size " + std::to_string(config.encoder.vocab_size));
  }
  if (stream.max_sequence_length() > config.encoder.max_len) {
    throw ConfigError("stream sequences (" + std::to_string(stream.max_sequence_length()) +
                      " tokens) exceed encoder max_len " + std::to_string(config.encoder.max_len));
  }
  RunResult out;
  out.state = ContinualState(config, seed);
  for (std::size_t t = 0; t < stream.tasks.size(); ++t) {
    const auto& task = stream.tasks[t];
    const TaskFeed feed(t, task.relations, task.train);
    if (hooks.on_feed) hooks.on_feed(feed);
    const auto start = std::chrono::steady_clock::now();
    out.training.push_back(train_task(out.state, feed));
    StageReport rep = evaluate(out.state, stream, t + 1);
    rep.wall_clock_seconds =
        std::chrono::duration<double>(std::chrono::steady_clock::now() - start).count();
    out.state.record(rep);
    out.reports.push_back(std::move(rep));
    if (also_task_incremental) out.oracle_reports.push_back(evaluate(out.state, stream, t + 1, {true}));
    if (hooks.on_stage) hooks.on_stage(out.state);
  }
  return out;
}

std::string GridPoint::label() const {
  std::string s;
  auto part = [&s](const std::string& p) { s += (s.empty() ? "" : " ") + p; };
  if (pool_size) part("M=" + std::to_string(*pool_size));
  if (top_k) part("K=" + std::to_string(*top_k));
  if (prompt_length) part("L=" + std::to_string(*prompt_length));
  if (no_replay) part("no_replay");
  if (task_incremental) part("task_incremental");
  return s.empty() ? "base" : s;
}

HarnessConfig apply_grid_point(const HarnessConfig& base, const GridPoint& point) {
  HarnessConfig c = base;
  if (point.pool_size) c.pool.pool_size = *point.pool_size;
  if (point.top_k) c.pool.top_k = *point.top_k;
  if (point.prompt_length) c.pool.prompt_length = *point.prompt_length;
  c.no_replay = point.no_replay;
  try {
    c.validate();
  } catch (const InvalidArgument& e) {
    throw ConfigError("grid point '" + point.label() + "': " + e.what());
  }
  return c;
}

std::vector<AblationRow> run_ablation(const HarnessConfig& base,
                                      const std::function<TaskStream(std::uint64_t)>& make_stream,
                                      std::span<const GridPoint> grid,
                                      std::span<const std::uint64_t> seeds) {
  if (grid.empty()) throw ConfigError("ablation: empty grid");
  if (seeds.empty()) throw ConfigError("ablation: no seeds");
  std::vector<AblationRow> rows;
  for (const auto& p : grid) rows.push_back({p, apply_grid_point(base, p), {}, {}, {}});

  // Routing-only variants reuse the training run of their configuration.
  std::vector<HarnessConfig> distinct;
  std::vector<std::size_t> run_of(rows.size());
  for (std::size_t i = 0; i < rows.size(); ++i) {
    auto it = std::find(distinct.begin(), distinct.end(), rows[i].config);
    run_of[i] = static_cast<std::size_t>(it - distinct.begin());
    if (it == distinct.end()) distinct.push_back(rows[i].config);
  }
  for (std::uint64_t seed : seeds) {
    const TaskStream stream = make_stream(seed);
    for (std::size_t c = 0; c < distinct.size(); ++c) {
      bool wants_oracle = false;
      for (std::size_t i = 0; i < rows.size(); ++i)
        wants_oracle |= run_of[i] == c && rows[i].point.task_incremental;
      const RunResult res = run_stream(distinct[c], stream, seed, wants_oracle);
      for (std::size_t i = 0; i < rows.size(); ++i) {
        if (run_of[i] != c) continue;
        rows[i].per_seed.push_back(rows[i].point.task_incremental ? res.oracle_reports : res.reports);
      }
    }
  }
  for (auto& row : rows) {
    const std::size_t stages = row.per_seed.front().size();
    row.stage_accuracy.assign(stages, 0.0);
    row.stage_uniform_accuracy.assign(stages, 0.0);
    for (const auto& run : row.per_seed) {
      for (std::size_t s = 0; s < stages; ++s) {
        row.stage_accuracy[s] += run[s].average_accuracy / static_cast<double>(seeds.size());
        row.stage_uniform_accuracy[s] += run[s].uniform_average_accuracy / static_cast<double>(seeds.size());
      }
    }
  }
  return rows;
}

}  // namespace relpool
