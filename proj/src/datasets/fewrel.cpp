#include <algorithm>
#include <cmath>
#include <fstream>
#include <map>
#include <numeric>
#include <sstream>
#include <string>

#include "json.hpp"

#include "relpool/datasets.hpp"
#include "relpool/errors.hpp"
#include "relpool/numeric/rng.hpp"

namespace relpool {
namespace {

using nlohmann::json;

struct RawInstance {
  std::vector<std::string> tokens;
  Span head;
  Span tail;
};

std::string where(const std::string& rel, std::size_t idx) {
  return "relation '" + rel + "', instance " + std::to_string(idx);
}

std::pair<std::size_t, std::size_t> line_col(std::string_view text, std::size_t byte) {
  std::size_t line = 1, col = 1;
  for (std::size_t i = 0; i < std::min(byte, text.size()); ++i) {
    if (text[i] == '\n') {
      ++line;
      col = 1;
    } else {
      ++col;
    }
  }
  return {line, col};
}

// Entity entries are [name, id, [[i0, i1, ...], ...]]; the first mention is used.
Span parse_span(const json& e, std::size_t n_tokens, const std::string& ctx, const char* which) {
  if (!e.is_array() || e.size() < 3 || !e[2].is_array() || e[2].empty() || !e[2][0].is_array() ||
      e[2][0].empty()) {
    throw ParseError(ctx + ": missing or malformed '" + which + "' span");
  }
  std::vector<std::size_t> idx;
  for (const auto& v : e[2][0]) {
    if (!v.is_number_unsigned()) throw ParseError(ctx + ": non-integer position in '" + which + "'");
    idx.push_back(v.get<std::size_t>());
  }
  std::sort(idx.begin(), idx.end());
  for (std::size_t i = 1; i < idx.size(); ++i) {
    if (idx[i] != idx[i - 1] + 1) throw ParseError(ctx + ": '" + which + "' positions are not contiguous");
  }
  if (idx.back() >= n_tokens) throw ParseError(ctx + ": '" + which + "' span out of bounds");
  return {idx.front(), idx.back() + 1};
}

// Inserts entity markers and a leading sentinel, then crops to max_len while
// keeping both marked spans. Returns false if no window fits.
bool build_sequence(const RawInstance& raw, const std::map<std::string, TokenId>& vocab,
                    RelationId label, std::size_t max_len, TokenSequence& out) {
  std::vector<TokenId> body;
  Span e1{}, e2{};
  for (std::size_t i = 0; i <= raw.tokens.size(); ++i) {
    if (i == raw.head.end) body.push_back(special::kE1Close), e1.end = body.size();
    if (i == raw.tail.end) body.push_back(special::kE2Close), e2.end = body.size();
    if (i == raw.head.start) e1.start = body.size(), body.push_back(special::kE1Open);
    if (i == raw.tail.start) e2.start = body.size(), body.push_back(special::kE2Open);
    if (i < raw.tokens.size()) body.push_back(vocab.at(raw.tokens[i]));
  }
  const std::size_t budget = max_len - 1;
  std::size_t lo = 0;
  if (body.size() > budget) {
    const std::size_t first = std::min(e1.start, e2.start);
    const std::size_t last = std::max(e1.end, e2.end);
    if (last - first > budget) return false;
    // Center the entity region in the window where possible.
    const std::size_t slack = budget - (last - first);
    lo = first > slack / 2 ? first - slack / 2 : 0;
    lo = std::min(lo, body.size() - budget);
  }
  const std::size_t hi = std::min(body.size(), lo + budget);
  out.tokens.assign(1, special::kSentinel);
  out.tokens.insert(out.tokens.end(), body.begin() + static_cast<std::ptrdiff_t>(lo),
                    body.begin() + static_cast<std::ptrdiff_t>(hi));
  out.e1 = {e1.start - lo + 1, e1.end - lo + 1};
  out.e2 = {e2.start - lo + 1, e2.end - lo + 1};
  out.label = label;
  return true;
}

}  // namespace

TaskStream parse_fewrel_json(std::string_view text, std::size_t num_tasks, std::uint64_t seed,
                             const IngestOptions& opts) {
  if (num_tasks < 1) throw InvalidArgument("ingest: num_tasks must be >= 1");
  if (opts.max_len < 8) throw InvalidArgument("ingest: max_len must be >= 8");
  if (!(opts.test_fraction >= 0.0 && opts.test_fraction < 1.0)) {
    throw InvalidArgument("ingest: test_fraction must be in [0, 1)");
  }
  json doc;
  try {
    doc = json::parse(text);
  } catch (const json::parse_error& e) {
    const auto [line, col] = line_col(text, e.byte > 0 ? e.byte - 1 : 0);
    throw ParseError("fewrel json: line " + std::to_string(line) + ", column " + std::to_string(col) +
                     ": " + e.what());
  }
  if (!doc.is_object()) throw ParseError("fewrel json: top level must be an object of relations");
  if (doc.empty()) throw ParseError("fewrel json: empty relation list");

  // json objects iterate in key order, so relation ids follow sorted names.
  std::vector<std::string> names;
  std::vector<std::vector<RawInstance>> raw;
  std::map<std::string, TokenId> vocab;
  for (const auto& [name, items] : doc.items()) {
    if (!items.is_array() || items.empty()) {
      throw ParseError("fewrel json: relation '" + name + "' must be a non-empty list");
    }
    names.push_back(name);
    auto& list = raw.emplace_back();
    for (std::size_t i = 0; i < items.size(); ++i) {
      const auto ctx = where(name, i);
      const auto& it = items[i];
      if (!it.is_object() || !it.contains("tokens") || !it["tokens"].is_array() || it["tokens"].empty()) {
        throw ParseError(ctx + ": missing 'tokens'");
      }
      RawInstance inst;
      for (const auto& t : it["tokens"]) {
        if (!t.is_string()) throw ParseError(ctx + ": token is not a string");
        inst.tokens.push_back(t.get<std::string>());
      }
      if (!it.contains("h") || !it.contains("t")) throw ParseError(ctx + ": missing 'h' or 't'");
      inst.head = parse_span(it["h"], inst.tokens.size(), ctx, "h");
      inst.tail = parse_span(it["t"], inst.tokens.size(), ctx, "t");
      if (inst.head.start < inst.tail.end && inst.tail.start < inst.head.end) {
        throw ParseError(ctx + ": head and tail spans overlap");
      }
      for (const auto& t : inst.tokens) vocab.emplace(t, 0);
      list.push_back(std::move(inst));
    }
  }
  if (num_tasks > names.size()) {
    throw InvalidArgument("ingest: " + std::to_string(num_tasks) + " tasks requested but only " +
                          std::to_string(names.size()) + " relations");
  }

  TaskStream stream;
  stream.seed = seed;
  stream.vocab = {"[SENT]", "[E1]", "[/E1]", "[E2]", "[/E2]"};
  for (auto& [tok, id] : vocab) {
    id = static_cast<TokenId>(stream.vocab.size());
    stream.vocab.push_back(tok);
  }

  Rng rng(seed);
  Rng split_rng = rng.fork(1);
  Rng sample_rng = rng.fork(2);
  std::vector<RelationId> order(names.size());
  std::iota(order.begin(), order.end(), RelationId{0});
  split_rng.shuffle(order);

  stream.tasks.resize(num_tasks);
  const std::size_t base = names.size() / num_tasks;
  const std::size_t extra = names.size() % num_tasks;
  std::size_t pos = 0;
  for (std::size_t t = 0; t < num_tasks; ++t) {
    auto& task = stream.tasks[t];
    const std::size_t count = base + (t < extra ? 1 : 0);
    task.relations.assign(order.begin() + static_cast<std::ptrdiff_t>(pos),
                          order.begin() + static_cast<std::ptrdiff_t>(pos + count));
    pos += count;
    std::sort(task.relations.begin(), task.relations.end());
    for (RelationId r : task.relations) {
      std::vector<TokenSequence> seqs;
      for (const auto& inst : raw[r]) {
        TokenSequence x;
        if (build_sequence(inst, vocab, r, opts.max_len, x)) seqs.push_back(std::move(x));
      }
      if (seqs.empty()) {
        throw ParseError("fewrel json: relation '" + names[r] + "' has no instance fitting max_len " +
                         std::to_string(opts.max_len));
      }
      sample_rng.shuffle(seqs);
      std::size_t n_test = static_cast<std::size_t>(std::lround(opts.test_fraction * static_cast<double>(seqs.size())));
      if (opts.test_fraction > 0.0 && seqs.size() > 1) n_test = std::max<std::size_t>(n_test, 1);
      n_test = std::min(n_test, seqs.size() - 1);
      task.test.insert(task.test.end(), seqs.begin(), seqs.begin() + static_cast<std::ptrdiff_t>(n_test));
      task.train.insert(task.train.end(), seqs.begin() + static_cast<std::ptrdiff_t>(n_test), seqs.end());
    }
  }
  return stream;
}

TaskStream ingest_fewrel_json(const std::filesystem::path& path, std::size_t num_tasks,
                              std::uint64_t seed, const IngestOptions& opts) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw ParseError("fewrel json: cannot open " + path.string());
  std::ostringstream ss;
  ss << in.rdbuf();
  try {
    return parse_fewrel_json(ss.str(), num_tasks, seed, opts);
  } catch (const ParseError& e) {
    throw ParseError(path.string() + ": " + e.what());
  }
}

void write_stream_jsonl(const TaskStream& stream, std::ostream& out) {
  json header = {{"format", "relpool-stream"},
                 {"version", 1},
                 {"seed", stream.seed},
                 {"num_tasks", stream.tasks.size()},
                 {"vocab", stream.vocab}};
  out << header.dump() << '\n';
  for (std::size_t t = 0; t < stream.tasks.size(); ++t) {
    const auto& task = stream.tasks[t];
    for (const char* split : {"train", "test"}) {
      const auto& list = std::string_view(split) == "train" ? task.train : task.test;
      for (const auto& x : list) {
        json row = {{"task", t},
                    {"split", split},
                    {"label", x.label},
                    {"tokens", x.tokens},
                    {"e1", {x.e1.start, x.e1.end}},
                    {"e2", {x.e2.start, x.e2.end}}};
        out << row.dump() << '\n';
      }
    }
  }
}

}  // namespace relpool
