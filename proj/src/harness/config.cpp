#include "relpool/config.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <set>
#include <sstream>

#include "json.hpp"

#include "relpool/errors.hpp"

namespace relpool {

namespace {

using Json = nlohmann::ordered_json;

std::string pooling_name(QueryPooling p) { return p == QueryPooling::kMean ? "mean" : "sentinel"; }

QueryPooling parse_pooling(const std::string& s) {
  if (s == "sentinel") return QueryPooling::kSentinel;
  if (s == "mean") return QueryPooling::kMean;
  throw ConfigError("model.query_pooling: expected \"sentinel\" or \"mean\", got \"" + s + "\"");
}

// Reads the keys of one section, rejecting anything it does not know.
class Section {
 public:
  Section(const Json& doc, std::string name) : name_(std::move(name)) {
    if (!doc.contains(name_)) return;
    obj_ = &doc.at(name_);
    if (!obj_->is_object()) throw ConfigError(name_ + ": expected an object");
  }
  Section(const Json* obj, std::string name) : obj_(obj), name_(std::move(name)) {
    if (obj_ && !obj_->is_object()) throw ConfigError(name_ + ": expected an object");
  }

  template <typename T>
  void get(const char* key, T& out) {
    seen_.insert(key);
    if (!obj_ || !obj_->contains(key)) return;
    try {
      const Json& v = obj_->at(key);
      if constexpr (std::is_same_v<T, bool>) {
        if (!v.is_boolean()) throw ConfigError("expected a boolean");
      } else if constexpr (std::is_integral_v<T>) {
        if (!v.is_number_unsigned()) throw ConfigError("expected a non-negative integer");
      } else if constexpr (std::is_floating_point_v<T>) {
        if (!v.is_number()) throw ConfigError("expected a number");
      } else if constexpr (std::is_same_v<T, std::string>) {
        if (!v.is_string()) throw ConfigError("expected a string");
      }
      out = v.get<T>();
    } catch (const std::exception& e) {
      throw ConfigError(name_ + "." + key + ": " + e.what());
    }
  }

  const Json* child(const char* key) {
    seen_.insert(key);
    return obj_ && obj_->contains(key) ? &obj_->at(key) : nullptr;
  }

  void finish() const {
    if (!obj_) return;
    for (const auto& [k, v] : obj_->items()) {
      if (!seen_.contains(k)) throw ConfigError(name_ + ": unknown key \"" + k + "\"");
    }
  }

 private:
  const Json* obj_ = nullptr;
  std::string name_;
  std::set<std::string> seen_;
};

Json to_json(const RunConfig& c) {
  const auto& h = c.harness;
  const auto& s = c.synthetic;
  Json doc;
  doc["dataset"] = {
      {"source", c.source == DatasetSource::kFewRel ? "fewrel" : "synthetic"},
      {"synthetic",
       {{"num_tasks", s.num_tasks},
        {"relations_per_task", s.relations_per_task},
        {"train_per_relation", s.train_per_relation},
        {"test_per_relation", s.test_per_relation},
        {"vocab_size", s.vocab_size},
        {"seq_len", s.seq_len},
        {"template_tokens", s.template_tokens},
        {"entity_tokens", s.entity_tokens},
        {"context_overlap", s.context_overlap},
        {"imbalanced", s.imbalanced},
        {"imbalance_min_fraction", s.imbalance_min_fraction}}},
      {"fewrel",
       {{"path", c.fewrel.path},
        {"num_tasks", c.fewrel.num_tasks},
        {"max_len", c.fewrel.ingest.max_len},
        {"test_fraction", c.fewrel.ingest.test_fraction}}}};
  doc["model"] = {{"dim", h.encoder.dim},
                  {"heads", h.encoder.heads},
                  {"layers", h.encoder.layers},
                  {"ffn_hidden", h.encoder.ffn_hidden},
                  {"max_len", h.encoder.max_len},
                  {"query_pooling", pooling_name(h.encoder.pooling)},
                  {"prefix_layers", h.encoder.prefix_layers},
                  {"pool_size", h.pool.pool_size},
                  {"top_k", h.pool.top_k},
                  {"prompt_length", h.pool.prompt_length},
                  {"lambda", h.pool.lambda},
                  {"prompt_init_std", h.pool.prompt_init_std},
                  {"head_hidden", h.head_hidden}};
  doc["replay"] = {{"n_components", h.replay.n_components},
                   {"ridge", h.replay.ridge},
                   {"diagonal", h.replay.diagonal},
                   {"samples_per_relation", h.relation_head.samples_per_relation},
                   {"max_iterations", h.replay.max_iterations},
                   {"tolerance", h.replay.tolerance}};
  doc["training"] = {{"prompt_pool_lr", h.pool_train.lr},
                     {"prompt_pool_optimizer", std::string(optimizer_name(h.pool_train.optimizer))},
                     {"pool_epochs", h.pool_train.epochs},
                     {"pool_batch_size", h.pool_train.batch_size},
                     {"pool_head_lr", h.pool_train.head_lr},
                     {"classifier_lr", h.relation_head.lr},
                     {"classifier_epochs", h.relation_head.epochs},
                     {"classifier_batch_size", h.relation_head.batch_size},
                     {"task_predictor_lr", h.task_head.lr},
                     {"task_predictor_epochs", h.task_head.epochs},
                     {"head_warm_start", h.head_warm_start},
                     {"seeds", c.seeds}};
  doc["modes"] = {{"task_incremental", c.task_incremental}, {"no_replay", h.no_replay}};
  doc["off_grid"] = c.off_grid;
  return doc;
}

RunConfig from_json(const Json& doc) {
  if (!doc.is_object()) throw ConfigError("config: top level must be an object");
  RunConfig c;
  auto& h = c.harness;

  Section dataset(doc, "dataset");
  std::string source = "synthetic";
  dataset.get("source", source);
  if (source == "synthetic") {
    c.source = DatasetSource::kSynthetic;
  } else if (source == "fewrel") {
    c.source = DatasetSource::kFewRel;
  } else {
    throw ConfigError("dataset.source: expected \"synthetic\" or \"fewrel\", got \"" + source + "\"");
  }
  {
    Section s(dataset.child("synthetic"), "dataset.synthetic");
    auto& g = c.synthetic;
    s.get("num_tasks", g.num_tasks);
    s.get("relations_per_task", g.relations_per_task);
    s.get("train_per_relation", g.train_per_relation);
    s.get("test_per_relation", g.test_per_relation);
    s.get("vocab_size", g.vocab_size);
    s.get("seq_len", g.seq_len);
    s.get("template_tokens", g.template_tokens);
    s.get("entity_tokens", g.entity_tokens);
    s.get("context_overlap", g.context_overlap);
    s.get("imbalanced", g.imbalanced);
    s.get("imbalance_min_fraction", g.imbalance_min_fraction);
    s.finish();
  }
  {
    Section s(dataset.child("fewrel"), "dataset.fewrel");
    s.get("path", c.fewrel.path);
    s.get("num_tasks", c.fewrel.num_tasks);
    s.get("max_len", c.fewrel.ingest.max_len);
    s.get("test_fraction", c.fewrel.ingest.test_fraction);
    s.finish();
  }
  dataset.finish();

  Section model(doc, "model");
  model.get("dim", h.encoder.dim);
  model.get("heads", h.encoder.heads);
  model.get("layers", h.encoder.layers);
  model.get("ffn_hidden", h.encoder.ffn_hidden);
  model.get("max_len", h.encoder.max_len);
  std::string pooling = pooling_name(h.encoder.pooling);
  model.get("query_pooling", pooling);
  h.encoder.pooling = parse_pooling(pooling);
  model.get("prefix_layers", h.encoder.prefix_layers);
  model.get("pool_size", h.pool.pool_size);
  model.get("top_k", h.pool.top_k);
  model.get("prompt_length", h.pool.prompt_length);
  model.get("lambda", h.pool.lambda);
  model.get("prompt_init_std", h.pool.prompt_init_std);
  model.get("head_hidden", h.head_hidden);
  model.finish();

  Section replay(doc, "replay");
  replay.get("n_components", h.replay.n_components);
  replay.get("ridge", h.replay.ridge);
  replay.get("diagonal", h.replay.diagonal);
  replay.get("samples_per_relation", h.relation_head.samples_per_relation);
  replay.get("max_iterations", h.replay.max_iterations);
  replay.get("tolerance", h.replay.tolerance);
  replay.finish();
  h.task_head.samples_per_relation = h.relation_head.samples_per_relation;

  Section training(doc, "training");
  training.get("prompt_pool_lr", h.pool_train.lr);
  std::string opt(optimizer_name(h.pool_train.optimizer));
  training.get("prompt_pool_optimizer", opt);
  h.pool_train.optimizer = parse_optimizer(opt);
  training.get("pool_epochs", h.pool_train.epochs);
  training.get("pool_batch_size", h.pool_train.batch_size);
  training.get("pool_head_lr", h.pool_train.head_lr);
  training.get("classifier_lr", h.relation_head.lr);
  training.get("classifier_epochs", h.relation_head.epochs);
  training.get("classifier_batch_size", h.relation_head.batch_size);
  training.get("task_predictor_lr", h.task_head.lr);
  training.get("task_predictor_epochs", h.task_head.epochs);
  training.get("head_warm_start", h.head_warm_start);
  training.get("seeds", c.seeds);
  training.finish();
  h.task_head.batch_size = h.relation_head.batch_size;

  Section modes(doc, "modes");
  modes.get("task_incremental", c.task_incremental);
  modes.get("no_replay", h.no_replay);
  modes.finish();

  if (doc.contains("off_grid")) {
    try {
      c.off_grid = doc.at("off_grid").get<std::vector<std::string>>();
    } catch (const std::exception& e) {
      throw ConfigError(std::string("off_grid: expected a list of keys: ") + e.what());
    }
  }
  for (const auto& [k, v] : doc.items()) {
    static const std::set<std::string> known{"dataset", "model", "replay", "training", "modes", "off_grid"};
    if (!known.contains(k)) throw ConfigError("config: unknown section \"" + k + "\"");
  }
  c.validate();
  return c;
}

double lookup_number(const Json& doc, const std::string& dotted) {
  const Json* node = &doc;
  std::stringstream ss(dotted);
  std::string part;
  while (std::getline(ss, part, '.')) node = &node->at(part);
  return node->get<double>();
}

Json parse_json(std::string_view text, const std::string& what) {
  try {
    return Json::parse(text, nullptr, true, true);
  } catch (const Json::parse_error& e) {
    throw ConfigError(what + ": " + e.what());
  }
}

}  // namespace

const std::vector<GridCheck>& grid_checks() {
  static const std::vector<GridCheck> checks{
      {"replay.n_components", {1, 3, 5}},
      {"training.pool_epochs", {10, 20, 50}},
      {"training.prompt_pool_lr", {2e-5, 5e-5, 1e-4}},
      {"training.classifier_epochs", {100, 300, 500}},
  };
  return checks;
}

void RunConfig::validate() const {
  try {
    harness.validate();
  } catch (const InvalidArgument& e) {
    throw ConfigError(e.what());
  }
  if (seeds.empty()) throw ConfigError("training.seeds: at least one seed required");
  if (source == DatasetSource::kFewRel && fewrel.path.empty()) {
    throw ConfigError("dataset.fewrel.path: required when dataset.source is \"fewrel\"");
  }
  const Json doc = to_json(*this);
  for (const auto& check : grid_checks()) {
    const double v = lookup_number(doc, check.key);
    const bool on_grid = std::any_of(check.allowed.begin(), check.allowed.end(),
                                     [v](double a) { return std::abs(v - a) <= 1e-12 * std::abs(a); });
    const bool overridden = std::find(off_grid.begin(), off_grid.end(), check.key) != off_grid.end();
    if (!on_grid && !overridden) {
      std::ostringstream msg;
      msg << check.key << " = " << v << " is outside its tuning grid {";
      for (std::size_t i = 0; i < check.allowed.size(); ++i) msg << (i ? ", " : "") << check.allowed[i];
      msg << "}; list \"" << check.key << "\" in off_grid to use it anyway";
      throw ConfigError(msg.str());
    }
  }
  for (const auto& key : off_grid) {
    const bool known = std::any_of(grid_checks().begin(), grid_checks().end(),
                                   [&key](const GridCheck& g) { return g.key == key; });
    if (!known) throw ConfigError("off_grid: \"" + key + "\" has no tuning grid");
  }
}

TaskStream RunConfig::make_stream(std::uint64_t seed) const {
  if (source == DatasetSource::kFewRel) return ingest_fewrel_json(fewrel.path, fewrel.num_tasks, seed, fewrel.ingest);
  return generate_stream(synthetic, seed);
}

HarnessConfig RunConfig::harness_for(const TaskStream& stream) const {
  HarnessConfig h = harness;
  h.encoder.vocab_size = stream.vocab_size();
  return h;
}

RunConfig parse_run_config(std::string_view text) { return from_json(parse_json(text, "config")); }

RunConfig load_run_config(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw ConfigError("cannot read config " + path.string());
  std::ostringstream ss;
  ss << in.rdbuf();
  try {
    return parse_run_config(ss.str());
  } catch (const ConfigError& e) {
    throw ConfigError(path.string() + ": " + e.what());
  }
}

std::string dump_run_config(const RunConfig& config) { return to_json(config).dump(2) + "\n"; }

RunConfig apply_override(const RunConfig& config, std::string_view assignment) {
  const auto eq = assignment.find('=');
  if (eq == std::string_view::npos || eq == 0) {
    throw ConfigError("override \"" + std::string(assignment) + "\": expected key=value");
  }
  const std::string key(assignment.substr(0, eq));
  const std::string raw(assignment.substr(eq + 1));
  Json value;
  try {
    value = Json::parse(raw);
  } catch (const Json::parse_error&) {
    value = raw;
  }
  Json doc = to_json(config);
  Json* node = &doc;
  std::stringstream ss(key);
  std::string part;
  std::vector<std::string> parts;
  while (std::getline(ss, part, '.')) parts.push_back(part);
  for (std::size_t i = 0; i < parts.size(); ++i) {
    if (!node->is_object() || !node->contains(parts[i])) {
      throw ConfigError("override: unknown key \"" + key + "\"");
    }
    node = &(*node)[parts[i]];
  }
  *node = value;
  return from_json(doc);
}

}  // namespace relpool
