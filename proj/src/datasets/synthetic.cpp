#include <algorithm>
#include <cmath>
#include <numeric>
#include <set>
#include <string>

#include "relpool/datasets.hpp"
#include "relpool/errors.hpp"
#include "relpool/numeric/rng.hpp"

namespace relpool {
namespace {

constexpr std::size_t kEntityBlockTokens = 6;  // [E1] e [/E1] [E2] e [/E2]

struct Template {
  std::vector<TokenId> context;
};

TokenSequence make_sample(const Template& tpl, RelationId label, const StreamConfig& cfg,
                          TokenId entity_base, Rng& rng) {
  const std::size_t n_ctx = cfg.seq_len - 1 - kEntityBlockTokens;
  std::vector<TokenId> ctx(n_ctx);
  for (auto& t : ctx) t = tpl.context[rng.below(tpl.context.size())];
  // Gaps a <= b in [0, n_ctx]: E1 block goes before ctx[a], E2 before ctx[b].
  std::size_t a = rng.below(n_ctx + 1);
  std::size_t b = rng.below(n_ctx + 1);
  if (a > b) std::swap(a, b);
  const TokenId ent1 = entity_base + static_cast<TokenId>(rng.below(cfg.entity_tokens));
  const TokenId ent2 = entity_base + static_cast<TokenId>(rng.below(cfg.entity_tokens));

  TokenSequence x;
  x.label = label;
  x.tokens.reserve(cfg.seq_len);
  x.tokens.push_back(special::kSentinel);
  for (std::size_t i = 0; i <= n_ctx; ++i) {
    if (i == a) {
      x.e1.start = x.tokens.size();
      x.tokens.insert(x.tokens.end(), {special::kE1Open, ent1, special::kE1Close});
      x.e1.end = x.tokens.size();
    }
    if (i == b) {
      x.e2.start = x.tokens.size();
      x.tokens.insert(x.tokens.end(), {special::kE2Open, ent2, special::kE2Close});
      x.e2.end = x.tokens.size();
    }
    if (i < n_ctx) x.tokens.push_back(ctx[i]);
  }
  return x;
}

}  // namespace

std::size_t TaskStream::num_relations() const {
  std::size_t n = 0;
  for (const auto& t : tasks) n += t.relations.size();
  return n;
}

std::size_t TaskStream::max_sequence_length() const {
  std::size_t m = 0;
  for (const auto& t : tasks) {
    for (const auto& x : t.train) m = std::max(m, x.tokens.size());
    for (const auto& x : t.test) m = std::max(m, x.tokens.size());
  }
  return m;
}

TaskStream generate_stream(const StreamConfig& cfg, std::uint64_t seed) {
  if (cfg.num_tasks < 1 || cfg.relations_per_task < 1 || cfg.train_per_relation < 1 ||
      cfg.test_per_relation < 1 || cfg.template_tokens < 1 || cfg.entity_tokens < 1) {
    throw InvalidArgument("generate_stream: all counts must be >= 1");
  }
  if (cfg.seq_len < 2 + kEntityBlockTokens) {
    throw InvalidArgument("generate_stream: seq_len " + std::to_string(cfg.seq_len) +
                          " too short for two entity blocks");
  }
  if (!(cfg.context_overlap >= 0.0 && cfg.context_overlap <= 1.0)) {
    throw InvalidArgument("generate_stream: context_overlap must be in [0, 1]");
  }
  const std::size_t num_relations = cfg.num_tasks * cfg.relations_per_task;
  const auto shared_per_relation =
      static_cast<std::size_t>(std::lround(cfg.template_tokens * cfg.context_overlap));
  const std::size_t unique_per_relation = cfg.template_tokens - shared_per_relation;
  const std::size_t shared_pool = shared_per_relation > 0 ? cfg.template_tokens : 0;
  const std::size_t context_base = special::kCount + cfg.entity_tokens;
  const std::size_t needed = context_base + shared_pool + num_relations * unique_per_relation;
  if (needed > cfg.vocab_size) {
    throw InvalidArgument("generate_stream: vocab_size " + std::to_string(cfg.vocab_size) +
                          " too small; " + std::to_string(num_relations) + " templates need " +
                          std::to_string(needed));
  }

  Rng rng(seed);
  Rng template_rng = rng.fork(1);
  Rng split_rng = rng.fork(2);
  Rng sample_rng = rng.fork(3);

  TaskStream stream;
  stream.seed = seed;
  stream.vocab.resize(cfg.vocab_size);
  stream.vocab[special::kSentinel] = "[SENT]";
  stream.vocab[special::kE1Open] = "[E1]";
  stream.vocab[special::kE1Close] = "[/E1]";
  stream.vocab[special::kE2Open] = "[E2]";
  stream.vocab[special::kE2Close] = "[/E2]";
  for (std::size_t i = 0; i < cfg.entity_tokens; ++i)
    stream.vocab[special::kCount + i] = "ent" + std::to_string(i);
  for (std::size_t i = context_base; i < cfg.vocab_size; ++i)
    stream.vocab[i] = "w" + std::to_string(i - context_base);

  // Unique context tokens are handed out in a seeded order; shared ones come
  // from a common block at the front of the context range.
  std::vector<TokenId> unique_tokens(num_relations * unique_per_relation);
  std::iota(unique_tokens.begin(), unique_tokens.end(), static_cast<TokenId>(context_base + shared_pool));
  template_rng.shuffle(unique_tokens);
  std::vector<Template> templates(num_relations);
  for (std::size_t r = 0; r < num_relations; ++r) {
    auto& ctx = templates[r].context;
    for (std::size_t i = 0; i < unique_per_relation; ++i) ctx.push_back(unique_tokens[r * unique_per_relation + i]);
    if (shared_per_relation > 0) {
      std::vector<TokenId> pool(shared_pool);
      std::iota(pool.begin(), pool.end(), static_cast<TokenId>(context_base));
      template_rng.shuffle(pool);
      ctx.insert(ctx.end(), pool.begin(), pool.begin() + static_cast<std::ptrdiff_t>(shared_per_relation));
    }
  }

  std::vector<RelationId> order(num_relations);
  std::iota(order.begin(), order.end(), RelationId{0});
  split_rng.shuffle(order);

  // Imbalance: training count shrinks geometrically with a seeded rank.
  std::vector<std::size_t> train_count(num_relations, cfg.train_per_relation);
  if (cfg.imbalanced && num_relations > 1) {
    std::vector<std::size_t> rank(num_relations);
    std::iota(rank.begin(), rank.end(), std::size_t{0});
    split_rng.shuffle(rank);
    for (std::size_t r = 0; r < num_relations; ++r) {
      const double frac = std::pow(cfg.imbalance_min_fraction,
                                   static_cast<double>(rank[r]) / static_cast<double>(num_relations - 1));
      train_count[r] = std::max<std::size_t>(
          1, static_cast<std::size_t>(std::lround(static_cast<double>(cfg.train_per_relation) * frac)));
    }
  }

  const TokenId entity_base = special::kCount;
  stream.tasks.resize(cfg.num_tasks);
  for (std::size_t t = 0; t < cfg.num_tasks; ++t) {
    auto& task = stream.tasks[t];
    task.relations.assign(order.begin() + static_cast<std::ptrdiff_t>(t * cfg.relations_per_task),
                          order.begin() + static_cast<std::ptrdiff_t>((t + 1) * cfg.relations_per_task));
    std::sort(task.relations.begin(), task.relations.end());
    for (RelationId r : task.relations) {
      std::set<std::vector<TokenId>> seen;
      for (std::size_t i = 0; i < train_count[r]; ++i) {
        auto x = make_sample(templates[r], r, cfg, entity_base, sample_rng);
        seen.insert(x.tokens);
        task.train.push_back(std::move(x));
      }
      for (std::size_t i = 0; i < cfg.test_per_relation; ++i) {
        // Test instances never duplicate a training instance.
        TokenSequence x;
        do {
          x = make_sample(templates[r], r, cfg, entity_base, sample_rng);
        } while (seen.contains(x.tokens));
        task.test.push_back(std::move(x));
      }
    }
  }
  return stream;
}

}  // namespace relpool
