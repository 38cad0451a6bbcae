#include <cmath>
#include <fstream>
#include <map>
#include <set>
#include <sstream>

#include "doctest.h"
#include "json.hpp"

#include "relpool/datasets.hpp"
#include "relpool/errors.hpp"

using namespace relpool;

namespace {

constexpr TokenId kFirstContext = special::kCount + 16;

std::set<TokenId> context_tokens(const TaskStream& s, RelationId r) {
  std::set<TokenId> out;
  for (const auto& t : s.tasks)
    for (const auto& x : t.train)
      if (x.label == r)
        for (TokenId tok : x.tokens)
          if (tok >= kFirstContext) out.insert(tok);
  return out;
}

std::vector<std::string> surface(const TaskStream& s, const TokenSequence& x) {
  std::vector<std::string> out;
  for (TokenId t : x.tokens) out.push_back(s.vocab.at(t));
  return out;
}

std::string read_fixture(const std::string& name) {
  std::ifstream in(std::string(RELPOOL_FIXTURE_DIR) + "/" + name);
  std::stringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

}  // namespace

TEST_CASE("stream shape follows the configuration") {
  StreamConfig c;
  c.num_tasks = 10;
  c.relations_per_task = 8;
  c.train_per_relation = 5;
  c.test_per_relation = 3;
  c.vocab_size = 400;
  const TaskStream s = generate_stream(c, 1);
  REQUIRE(s.tasks.size() == 10);
  CHECK(s.num_relations() == 80);
  CHECK(s.vocab_size() == 400);
  std::set<RelationId> seen;
  for (const auto& t : s.tasks) {
    CHECK(t.relations.size() == 8);
    CHECK(std::is_sorted(t.relations.begin(), t.relations.end()));
    for (RelationId r : t.relations) CHECK(seen.insert(r).second);
    CHECK(t.train.size() == 40);
    CHECK(t.test.size() == 24);
    const std::set<RelationId> own(t.relations.begin(), t.relations.end());
    for (const auto& x : t.train) CHECK(own.contains(x.label));
    for (const auto& x : t.test) CHECK(own.contains(x.label));
  }
  CHECK(*seen.rbegin() == 79);
}

TEST_CASE("samples are well formed and disjoint between splits") {
  const TaskStream s = generate_stream(StreamConfig{}, 2);
  CHECK(s.max_sequence_length() == 16);
  for (const auto& t : s.tasks) {
    std::set<std::vector<TokenId>> train;
    for (const auto& x : t.train) {
      CHECK(spans_valid(x));
      CHECK(x.tokens.size() == 16);
      CHECK(x.tokens[0] == special::kSentinel);
      CHECK(x.tokens[x.e1.start] == special::kE1Open);
      CHECK(x.tokens[x.e1.end - 1] == special::kE1Close);
      CHECK(x.tokens[x.e2.start] == special::kE2Open);
      CHECK(x.tokens[x.e2.end - 1] == special::kE2Close);
      for (TokenId tok : x.tokens) CHECK(tok < s.vocab_size());
      train.insert(x.tokens);
    }
    for (const auto& x : t.test) CHECK_FALSE(train.contains(x.tokens));
  }
  CHECK(s.vocab[0] == "[SENT]");
  CHECK(s.vocab[special::kE2Close] == "[/E2]");
}

TEST_CASE("generation is deterministic per seed") {
  const TaskStream a = generate_stream(StreamConfig{}, 7);
  const TaskStream b = generate_stream(StreamConfig{}, 7);
  const TaskStream c = generate_stream(StreamConfig{}, 8);
  std::ostringstream sa, sb, sc;
  write_stream_jsonl(a, sa);
  write_stream_jsonl(b, sb);
  write_stream_jsonl(c, sc);
  CHECK(sa.str() == sb.str());
  CHECK(sa.str() != sc.str());
}

TEST_CASE("context overlap controls shared template tokens") {
  StreamConfig c;
  c.context_overlap = 0.0;
  c.vocab_size = 160;
  const TaskStream disjoint = generate_stream(c, 3);
  for (RelationId r = 0; r < 20; ++r)
    for (RelationId q = r + 1; q < 20; ++q) {
      const auto a = context_tokens(disjoint, r), b = context_tokens(disjoint, q);
      for (TokenId t : a) CHECK_FALSE(b.contains(t));
    }
  c.context_overlap = 1.0;
  const TaskStream shared = generate_stream(c, 3);
  CHECK(context_tokens(shared, 0) == context_tokens(shared, 11));
}

TEST_CASE("imbalanced streams shrink counts geometrically") {
  StreamConfig c;
  c.imbalanced = true;
  const TaskStream s = generate_stream(c, 4);
  std::map<RelationId, std::size_t> counts;
  for (const auto& t : s.tasks)
    for (const auto& x : t.train) ++counts[x.label];
  std::size_t lo = 1000, hi = 0;
  for (auto [r, n] : counts) lo = std::min(lo, n), hi = std::max(hi, n);
  CHECK(hi == 100);
  CHECK(lo == 20);
}

TEST_CASE("invalid configurations are rejected") {
  StreamConfig c;
  c.num_tasks = 0;
  CHECK_THROWS_AS(generate_stream(c, 1), InvalidArgument);
  c = StreamConfig{};
  c.seq_len = 6;
  CHECK_THROWS_AS(generate_stream(c, 1), InvalidArgument);
  c = StreamConfig{};
  c.context_overlap = 1.5;
  CHECK_THROWS_AS(generate_stream(c, 1), InvalidArgument);
  c = StreamConfig{};
  c.vocab_size = 40;
  CHECK_THROWS_AS(generate_stream(c, 1), InvalidArgument);
}

TEST_CASE("relations are learnable from context tokens") {
  // Multinomial naive Bayes over context-token counts, fitted on train.
  const TaskStream s = generate_stream(StreamConfig{}, 5);
  const std::size_t v = s.vocab_size(), r = s.num_relations();
  std::vector<std::vector<double>> counts(r, std::vector<double>(v, 1.0));
  std::vector<double> totals(r, static_cast<double>(v));
  for (const auto& t : s.tasks)
    for (const auto& x : t.train)
      for (TokenId tok : x.tokens)
        if (tok >= kFirstContext) counts[x.label][tok] += 1, totals[x.label] += 1;
  std::size_t correct = 0, total = 0;
  for (const auto& t : s.tasks)
    for (const auto& x : t.test) {
      std::size_t best = 0;
      double best_score = -1e300;
      for (std::size_t c = 0; c < r; ++c) {
        double score = 0;
        for (TokenId tok : x.tokens)
          if (tok >= kFirstContext) score += std::log(counts[c][tok] / totals[c]);
        if (score > best_score) best_score = score, best = c;
      }
      correct += best == x.label;
      ++total;
    }
  CHECK(static_cast<double>(correct) / total > 0.9);
}

TEST_CASE("FewRel fixture ingests with markers in place") {
  const TaskStream s = parse_fewrel_json(read_fixture("fewrel_sample.json"), 2, 1);
  REQUIRE(s.tasks.size() == 2);
  CHECK(s.num_relations() == 2);
  std::size_t n = 0;
  bool found = false;
  for (const auto& t : s.tasks) {
    CHECK(t.relations.size() == 1);
    n += t.train.size() + t.test.size();
    CHECK(t.test.size() >= 1);
    for (const auto* split : {&t.train, &t.test})
      for (const auto& x : *split) {
        CHECK(spans_valid(x));
        const auto words = surface(s, x);
        if (words[2] == "Acme") {
          found = true;
          CHECK(x.label == 0);
          CHECK(words == std::vector<std::string>{"[SENT]", "[E1]", "Acme", "[/E1]", "was", "founded", "by",
                                                  "[E2]", "Alice", "Smith", "[/E2]", "."});
          CHECK(x.e1 == Span{1, 4});
          CHECK(x.e2 == Span{7, 11});
        }
        if (words[1] == "[E2]" && words[2] == "Bob") {
          CHECK(x.e1 == Span{5, 8});
          CHECK(x.e2 == Span{1, 4});
        }
      }
  }
  CHECK(found);
  CHECK(n == 6);
  CHECK(s.vocab[5] < s.vocab[6]);
}

TEST_CASE("FewRel cropping keeps both entities") {
  const std::string text = R"({"r": [{"tokens": ["a","b","c","d","e","f","g","h","i","j","k","l"],
                                      "h": ["x", "Q", [[5]]], "t": ["y", "Q", [[7]]]}]})";
  IngestOptions opts;
  opts.max_len = 8;
  opts.test_fraction = 0.0;
  const TaskStream s = parse_fewrel_json(text, 1, 1, opts);
  REQUIRE(s.tasks[0].train.size() == 1);
  const auto& x = s.tasks[0].train[0];
  CHECK(x.tokens.size() == 8);
  const auto words = surface(s, x);
  CHECK(words[x.e1.start + 1] == "f");
  CHECK(words[x.e2.start + 1] == "h");
}

TEST_CASE("FewRel errors are reported precisely") {
  CHECK_THROWS_AS(parse_fewrel_json("{}", 1, 1), ParseError);
  CHECK_THROWS_AS(parse_fewrel_json(R"({"r": []})", 1, 1), ParseError);
  try {
    parse_fewrel_json("{\n  \"r\": [\n    {\"tokens\": [\"a\",, ]}\n  ]\n}", 1, 1);
    FAIL("expected ParseError");
  } catch (const ParseError& e) {
    CHECK(std::string(e.what()).find("line 3") != std::string::npos);
  }
  try {
    parse_fewrel_json(R"({"r": [{"tokens": ["a","b"], "h": ["x","Q",[[0]]], "t": ["y","Q",[[5]]]}]})", 1, 1);
    FAIL("expected ParseError");
  } catch (const ParseError& e) {
    const std::string msg = e.what();
    CHECK(msg.find("'r'") != std::string::npos);
    CHECK(msg.find("out of bounds") != std::string::npos);
  }
  CHECK_THROWS_AS(parse_fewrel_json(R"({"r": [{"tokens": ["a","b","c"], "h": ["x","Q",[[0, 2]]], "t": ["y","Q",[[1]]]}]})", 1, 1),
                  ParseError);
  CHECK_THROWS_AS(parse_fewrel_json(R"({"r": [{"tokens": ["a","b","c"], "h": ["x","Q",[[0, 1]]], "t": ["y","Q",[[1]]]}]})", 1, 1),
                  ParseError);
  CHECK_THROWS_AS(parse_fewrel_json(read_fixture("fewrel_sample.json"), 3, 1), InvalidArgument);
  CHECK_THROWS(ingest_fewrel_json("/nonexistent/fewrel.json", 1, 1));
}

TEST_CASE("JSONL export carries a header and every sample") {
  StreamConfig c;
  c.num_tasks = 2;
  c.relations_per_task = 2;
  c.train_per_relation = 3;
  c.test_per_relation = 2;
  const TaskStream s = generate_stream(c, 9);
  std::ostringstream out;
  write_stream_jsonl(s, out);
  std::istringstream in(out.str());
  std::string line;
  std::getline(in, line);
  const auto header = nlohmann::json::parse(line);
  CHECK(header["format"] == "relpool-stream");
  CHECK(header["version"] == 1);
  CHECK(header["num_tasks"] == 2);
  CHECK(header["vocab"].size() == s.vocab_size());
  std::size_t rows = 0;
  while (std::getline(in, line)) {
    const auto row = nlohmann::json::parse(line);
    const auto& split = row["split"] == "train" ? s.tasks[row["task"].get<std::size_t>()].train
                                                 : s.tasks[row["task"].get<std::size_t>()].test;
    CHECK(row["tokens"].size() == split[0].tokens.size());
    ++rows;
  }
  CHECK(rows == 2 * 2 * (3 + 2));
}
