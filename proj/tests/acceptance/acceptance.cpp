// Acceptance run: one PASS/FAIL line per criterion, non-zero exit if any fails.
// The end-to-end criteria share five full-pipeline runs and five no-replay
// runs on the default synthetic stream.

#include <algorithm>
#include <bit>
#include <chrono>
#include <cmath>
#include <cstdio>
#include <functional>
#include <map>
#include <optional>
#include <sstream>
#include <string>
#include <vector>

#include "relpool/attention.hpp"
#include "relpool/config.hpp"
#include "relpool/harness.hpp"
#include "relpool/heads.hpp"
#include "relpool/numeric/linalg.hpp"
#include "relpool/numeric/ops.hpp"
#include "relpool/prompt_pool.hpp"
#include "relpool/replay.hpp"

using namespace relpool;

namespace {

using Clock = std::chrono::steady_clock;

double seconds_since(Clock::time_point t0) {
  return std::chrono::duration<double>(Clock::now() - t0).count();
}

struct Outcome {
  std::string name;
  bool passed = true;
  std::string detail;
};

std::vector<Outcome> g_outcomes;

void report(const Outcome& o) {
  std::printf("[%s] %s: %s\n", o.passed ? "PASS" : "FAIL", o.name.c_str(), o.detail.c_str());
  std::fflush(stdout);
  g_outcomes.push_back(o);
}

Matrix gaussian(std::size_t r, std::size_t c, double sd, Rng& rng) {
  Matrix m(r, c);
  for (double& v : m.flat()) v = rng.normal(0.0, sd);
  return m;
}

EncoderLayer random_layer(std::size_t d, std::size_t heads, Rng& rng) {
  const std::size_t dv = d / heads;
  const double s = 1.0 / std::sqrt(static_cast<double>(d));
  EncoderLayer layer;
  for (std::size_t h = 0; h < heads; ++h)
    layer.heads.push_back({gaussian(d, dv, s, rng), gaussian(d, dv, s, rng), gaussian(d, dv, s, rng)});
  layer.wo = gaussian(d, d, s, rng);
  return layer;
}

double max_abs(const Matrix& a, const Matrix& b) {
  if (a.rows() != b.rows() || a.cols() != b.cols()) return INFINITY;
  double m = 0.0;
  for (std::size_t i = 0; i < a.size(); ++i) m = std::max(m, std::abs(a.data()[i] - b.data()[i]));
  return m;
}

double l2(const std::vector<double>& v) {
  long double s = 0;
  for (double x : v) s += static_cast<long double>(x) * x;
  return static_cast<double>(std::sqrt(s));
}

// ||a - n|| / max(||a||, ||n||), zero when both vanish.
double rel_err(const std::vector<double>& a, const std::vector<double>& n) {
  std::vector<double> d(a.size());
  for (std::size_t i = 0; i < a.size(); ++i) d[i] = a[i] - n[i];
  const double scale = std::max(l2(a), l2(n));
  return scale == 0.0 ? 0.0 : l2(d) / scale;
}

std::vector<double> central_diff(const std::function<double(const std::vector<double>&)>& f,
                                 std::vector<double> x, double eps) {
  std::vector<double> g(x.size());
  for (std::size_t i = 0; i < x.size(); ++i) {
    const double x0 = x[i];
    x[i] = x0 + eps;
    const double up = f(x);
    x[i] = x0 - eps;
    const double down = f(x);
    x[i] = x0;
    g[i] = (up - down) / (2.0 * eps);
  }
  return g;
}

std::string fmt(const char* f, auto... args) {
  char buf[256];
  std::snprintf(buf, sizeof buf, f, args...);
  return buf;
}

// ---- 1 ---------------------------------------------------------------------

void moe_duality() {
  const auto t0 = Clock::now();
  Rng rng(101);
  constexpr std::size_t kDims[] = {8, 16, 32};
  constexpr std::size_t kHeads[] = {1, 2, 4};
  constexpr std::size_t kLens[] = {0, 1, 2, 4};
  double worst = 0.0;
  for (std::size_t c = 0; c < 1000; ++c) {
    const std::size_t n = 1 + rng.below(8);
    const std::size_t d = kDims[rng.below(3)];
    const std::size_t m = kHeads[rng.below(3)];
    const std::size_t len = kLens[rng.below(4)];
    const EncoderLayer layer = random_layer(d, m, rng);
    const Matrix x = gaussian(n, d, 1.0, rng);
    std::vector<Prompt> prompts;
    if (len > 0)
      for (std::size_t k = 0, np = 1 + rng.below(2); k < np; ++k)
        prompts.push_back({gaussian(len, d, 1.0, rng), gaussian(len, d, 1.0, rng)});
    worst = std::max(worst, max_abs(moe_view_forward(x, layer), msa_forward(x, layer)));
    worst = std::max(worst, max_abs(prefix_moe_view_forward(x, layer, prompts), prefix_msa_forward(x, layer, prompts)));
  }
  const double secs = seconds_since(t0);
  report({"moe_duality", worst < 1e-10 && secs < 10.0,
          fmt("1000 configs, max |moe - msa| = %.3e (< 1e-10), %.2f s (< 10 s)", worst, secs)});
}

// ---- 2 ---------------------------------------------------------------------

TokenSequence random_instance(std::size_t vocab, Rng& rng) {
  TokenSequence x;
  const std::size_t n = 8 + rng.below(4);
  x.tokens.push_back(special::kSentinel);
  while (x.tokens.size() < n)
    x.tokens.push_back(special::kCount + static_cast<TokenId>(rng.below(vocab - special::kCount)));
  x.e1 = {1, 3};
  x.e2 = {4, 6};
  x.tokens[1] = special::kE1Open;
  x.tokens[2] = special::kE1Close;
  x.tokens[4] = special::kE2Open;
  x.tokens[5] = special::kE2Close;
  return x;
}

void gradient_fidelity() {
  const auto t0 = Clock::now();
  Rng rng(202);
  constexpr double kEps = 1e-5;
  double worst = 0.0;
  std::size_t fixtures = 0;
  bool sparse = true;
  for (; fixtures < 60; ++fixtures) {
    EncoderConfig ec;
    ec.vocab_size = 24;
    ec.dim = 8;
    ec.heads = 1 + rng.below(2);
    ec.layers = 1 + rng.below(2);
    ec.ffn_hidden = 12;
    ec.max_len = 12;
    EncoderParams enc = EncoderParams::random(ec, rng);
    enc.freeze();

    PoolConfig pc;
    pc.pool_size = 3 + rng.below(4);
    pc.top_k = 1 + rng.below(pc.pool_size);
    pc.prompt_length = 1 + rng.below(2);
    pc.prompt_init_std = 0.3;
    const PromptPool pool(0, pc, ec.dim, rng);
    RelationTaskMap map;
    map.add_task({0, 1, 2});
    const ClassifierHead head(2 * ec.dim, 6, 3, rng);

    TokenSequence x = random_instance(ec.vocab_size, rng);
    x.label = static_cast<RelationId>(rng.below(3));
    const Vector q = encode_query(x, enc);

    std::vector<double> pool_grad(pool.parameter_count(), 0.0), head_grad(head.params().size(), 0.0);
    const PoolLoss base = pool_loss(pool, x, q, enc, head, map, pool_grad, head_grad);

    // Selected keys and their prompt blocks, in the flat parameter layout.
    const std::size_t d = ec.dim, block = 2 * pc.prompt_length * d;
    std::vector<std::size_t> active;
    for (std::size_t s : base.selection.indices) {
      for (std::size_t c = 0; c < d; ++c) active.push_back(s * d + c);
      for (std::size_t c = 0; c < block; ++c) active.push_back(pc.pool_size * d + s * block + c);
    }
    std::vector<bool> is_active(pool_grad.size(), false);
    for (std::size_t i : active) is_active[i] = true;
    for (std::size_t i = 0; i < pool_grad.size(); ++i) sparse &= is_active[i] || pool_grad[i] == 0.0;

    const Vector flat = pool.parameters();
    std::vector<double> sub, analytic;
    for (std::size_t i : active) sub.push_back(flat[i]), analytic.push_back(pool_grad[i]);
    const auto numeric_pool = central_diff(
        [&](const std::vector<double>& s) {
          Vector p = flat;
          for (std::size_t k = 0; k < active.size(); ++k) p[active[k]] = s[k];
          PromptPool probe = pool;
          probe.set_parameters(p);
          return pool_loss(probe, x, q, enc, head, map).total;
        },
        sub, kEps);
    worst = std::max(worst, rel_err(analytic, numeric_pool));

    const std::vector<double> hp(head.params().begin(), head.params().end());
    const auto numeric_head = central_diff(
        [&](const std::vector<double>& p) {
          ClassifierHead probe = head;
          std::copy(p.begin(), p.end(), probe.params().begin());
          return pool_loss(pool, x, q, enc, probe, map).total;
        },
        hp, kEps);
    worst = std::max(worst, rel_err(head_grad, numeric_head));

    // Relation and task heads on replayed latents: softmax cross-entropy
    // written out here rather than taken from the library.
    for (std::size_t in : {d, 2 * d}) {
      const std::size_t out = 2 + rng.below(6);
      const ClassifierHead lh(in, 4 + rng.below(8), out, rng);
      Vector latent(in);
      for (double& v : latent) v = rng.normal();
      const std::size_t label = rng.below(out);
      std::vector<double> g(lh.params().size(), 0.0);
      lh.loss_and_grad(latent, label, g);
      const auto numeric = central_diff(
          [&](const std::vector<double>& p) {
            ClassifierHead probe = lh;
            std::copy(p.begin(), p.end(), probe.params().begin());
            const Vector z = probe.logits(latent);
            long double mx = *std::max_element(z.begin(), z.end()), s = 0;
            for (double v : z) s += std::exp(static_cast<long double>(v) - mx);
            return static_cast<double>(mx + std::log(s) - z[label]);
          },
          std::vector<double>(lh.params().begin(), lh.params().end()), kEps);
      worst = std::max(worst, rel_err(g, numeric));
    }
  }
  const double secs = seconds_since(t0);
  report({"gradient_fidelity", worst < 1e-4 && sparse && secs < 60.0,
          fmt("%zu fixtures, worst relative error %.3e (< 1e-4), unselected grads zero: %s, %.2f s (< 60 s)",
              fixtures, worst, sparse ? "yes" : "no", secs)});
}

// ---- 3 ---------------------------------------------------------------------

void replay_statistics() {
  Rng rng(303);
  double worst_mu = 0.0, worst_sigma = 0.0;
  for (std::size_t dim = 2; dim <= 8; ++dim) {
    Vector mu(dim);
    for (double& v : mu) v = (rng.uniform() < 0.5 ? -1.0 : 1.0) * rng.uniform(2.0, 5.0);
    const Matrix a = gaussian(dim, dim, 0.5, rng);
    Matrix cov(dim, dim);
    for (std::size_t i = 0; i < dim; ++i)
      for (std::size_t j = 0; j < dim; ++j) {
        double s = i == j ? 1.0 : 0.0;
        for (std::size_t k = 0; k < dim; ++k) s += a(i, k) * a(j, k);
        cov(i, j) = s;
      }
    const LatentGaussian truth(mu, cov, 0.0);
    std::vector<Vector> data;
    for (std::size_t i = 0; i < 2000; ++i) data.push_back(truth.draw(rng));
    const LatentGaussian fitted = fit_gaussian(data);
    const LatentMixture model{{{1.0, fitted}}};
    const auto big = sample(model, 50000, rng);

    // Moments of the 50k draws, accumulated independently of the library fit.
    std::vector<long double> m(dim, 0.0L);
    for (const auto& v : big)
      for (std::size_t i = 0; i < dim; ++i) m[i] += v[i];
    for (auto& v : m) v /= big.size();
    std::vector<long double> c(dim * dim, 0.0L);
    for (const auto& v : big)
      for (std::size_t i = 0; i < dim; ++i)
        for (std::size_t j = 0; j < dim; ++j) c[i * dim + j] += (v[i] - m[i]) * (v[j] - m[j]);
    const LatentGaussian refit = fit_gaussian(big);

    std::vector<double> dmu(dim), ref_mu(dim), dsig(dim * dim), ref_sig(dim * dim);
    for (std::size_t i = 0; i < dim; ++i) {
      dmu[i] = refit.mean()[i] - fitted.mean()[i];
      ref_mu[i] = fitted.mean()[i];
      for (std::size_t j = 0; j < dim; ++j) {
        const double own = static_cast<double>(c[i * dim + j] / big.size());
        // The library refit must agree with the independent accumulation.
        if (std::abs(own - refit.covariance()(i, j)) > 1e-9 * (1.0 + std::abs(own))) worst_sigma = INFINITY;
        dsig[i * dim + j] = refit.covariance()(i, j) - fitted.covariance()(i, j);
        ref_sig[i * dim + j] = fitted.covariance()(i, j);
      }
    }
    for (std::size_t i = 0; i < dim; ++i)
      if (std::abs(static_cast<double>(m[i]) - refit.mean()[i]) > 1e-9 * (1.0 + std::abs(refit.mean()[i])))
        worst_mu = INFINITY;
    worst_mu = std::max(worst_mu, l2(dmu) / l2(ref_mu));
    worst_sigma = std::max(worst_sigma, l2(dsig) / l2(ref_sig));
  }

  double worst_drop = 0.0;
  std::size_t em_fits = 0;
  for (std::size_t k : {1, 3, 5}) {
    for (std::size_t dim = 2; dim <= 5; ++dim) {
      std::vector<Vector> data;
      for (std::size_t c = 0; c < 3; ++c) {
        Vector center(dim);
        for (double& v : center) v = rng.uniform(-6.0, 6.0);
        for (std::size_t i = 0; i < 150; ++i) {
          Vector x(dim);
          for (std::size_t j = 0; j < dim; ++j) x[j] = center[j] + rng.normal(0.0, 0.5 + 0.5 * c);
          data.push_back(std::move(x));
        }
      }
      const MixtureFit fit = fit_mixture(data, k, rng);
      for (std::size_t i = 1; i < fit.objective_trace.size(); ++i)
        worst_drop = std::max(worst_drop, fit.objective_trace[i - 1] - fit.objective_trace[i]);
      ++em_fits;
    }
  }
  report({"replay_statistics", worst_mu < 0.01 && worst_sigma < 0.05 && worst_drop <= 1e-9,
          fmt("dims 2..8: mu rel err %.3e (< 1e-2), sigma rel Frobenius %.3e (< 5e-2); "
              "%zu EM fits, largest objective decrease %.3e (<= 1e-9)",
              worst_mu, worst_sigma, em_fits, worst_drop)});
}

// ---- 4 ---------------------------------------------------------------------

void selection_oracle() {
  Rng rng(404);
  std::size_t mismatches = 0;
  for (std::size_t c = 0; c < 500; ++c) {
    PoolConfig pc;
    pc.pool_size = 1 + rng.below(8);
    pc.top_k = 1 + rng.below(pc.pool_size);
    const std::size_t d = 2 + rng.below(7);
    const PromptPool pool(0, pc, d, rng);
    Vector q(d);
    for (double& v : q) v = rng.normal();
    const Selection sel = select(pool, q);

    // Cosine distance from first principles.
    std::vector<double> dist(pc.pool_size);
    for (std::size_t i = 0; i < pc.pool_size; ++i) {
      const auto key = pool.keys().row(i);
      double dot = 0, nq = 0, nk = 0;
      for (std::size_t j = 0; j < d; ++j) dot += q[j] * key[j], nq += q[j] * q[j], nk += key[j] * key[j];
      dist[i] = 1.0 - dot / (std::sqrt(nq) * std::sqrt(nk));
    }
    double best = INFINITY;
    for (std::uint32_t mask = 0; mask < (1u << pc.pool_size); ++mask) {
      if (static_cast<std::size_t>(std::popcount(mask)) != pc.top_k) continue;
      double s = 0;
      for (std::size_t i = 0; i < pc.pool_size; ++i)
        if (mask >> i & 1u) s += dist[i];
      best = std::min(best, s);
    }
    double got = 0;
    std::vector<std::size_t> idx(sel.indices.begin(), sel.indices.end());
    std::sort(idx.begin(), idx.end());
    const bool distinct = std::adjacent_find(idx.begin(), idx.end()) == idx.end();
    for (std::size_t i : idx) got += dist[i];
    if (idx.size() != pc.top_k || !distinct || got > best + 1e-12) ++mismatches;
  }
  report({"selection_oracle", mismatches == 0,
          fmt("500 pools with M <= 8: %zu selections worse than the exhaustive optimum", mismatches)});
}

// ---- 5..9 ------------------------------------------------------------------

struct SeedRun {
  RunResult full;
  RunResult no_replay;
  bool frozen_ok = true;
  bool feeds_ok = true;
  std::string frozen_detail;
  std::string feeds_detail;
  std::string csv, json;
};

std::string report_bytes_csv(const RunResult& r, std::size_t num_tasks) {
  std::ostringstream out;
  write_reports_csv(r.reports, num_tasks, out);
  return out.str();
}

std::string report_bytes_json(const RunResult& r) {
  std::ostringstream out;
  write_reports_json(r.reports, out);
  return out.str();
}

// Full run with hooks that enforce the frozen-encoder, frozen-pool and
// rehearsal-free contracts at the API boundary.
RunResult guarded_run(const HarnessConfig& hc, const TaskStream& stream, std::uint64_t seed, SeedRun& sr) {
  std::size_t feeds = 0;
  std::optional<std::uint64_t> encoder_sum;
  std::vector<std::uint64_t> pool_sums;
  RunHooks hooks;
  hooks.on_feed = [&](const TaskFeed& feed) {
    const std::size_t t = feed.task();
    if (t != feeds) {
      sr.feeds_ok = false;
      sr.feeds_detail = fmt("feed %zu reported task %zu", feeds, t);
    }
    // The feed must view exactly the current task's training split and
    // nothing stored for any earlier task.
    const auto& own = stream.tasks[t].train;
    if (feed.train().data() != own.data() || feed.train().size() != own.size()) {
      sr.feeds_ok = false;
      sr.feeds_detail = fmt("task %zu feed is not its own train split", t);
    }
    for (std::size_t p = 0; p < t; ++p) {
      const auto& old = stream.tasks[p].train;
      const auto* lo = old.data();
      const auto* hi = old.data() + old.size();
      if (feed.train().data() < hi && feed.train().data() + feed.train().size() > lo) {
        sr.feeds_ok = false;
        sr.feeds_detail = fmt("task %zu feed overlaps task %zu data", t, p);
      }
    }
    const std::vector<RelationId> rels(feed.relations().begin(), feed.relations().end());
    if (rels != stream.tasks[t].relations) {
      sr.feeds_ok = false;
      sr.feeds_detail = fmt("task %zu feed exposes foreign relations", t);
    }
    ++feeds;
  };
  hooks.on_stage = [&](const ContinualState& st) {
    const std::uint64_t enc = st.encoder().checksum();
    if (!encoder_sum) encoder_sum = enc;
    if (enc != *encoder_sum) {
      sr.frozen_ok = false;
      sr.frozen_detail = fmt("encoder checksum changed at stage %zu", st.tasks_trained());
    }
    for (std::size_t p = 0; p < pool_sums.size(); ++p)
      if (st.pools()[p].checksum() != pool_sums[p]) {
        sr.frozen_ok = false;
        sr.frozen_detail = fmt("pool %zu checksum changed at stage %zu", p + 1, st.tasks_trained());
      }
    pool_sums.push_back(st.pools().back().checksum());
  };
  RunResult r = run_stream(hc, stream, seed, true, hooks);
  if (feeds != stream.tasks.size()) {
    sr.feeds_ok = false;
    sr.feeds_detail = fmt("%zu feeds for %zu tasks", feeds, stream.tasks.size());
  }
  if (r.state.encoder().checksum() != *encoder_sum) sr.frozen_ok = false;
  return r;
}

void end_to_end() {
  const RunConfig cfg;  // default synthetic stream: T=5, 4 relations per task
  const std::vector<std::uint64_t> seeds{1, 2, 3, 4, 5};
  const std::size_t num_tasks = cfg.synthetic.num_tasks;
  std::map<std::uint64_t, SeedRun> runs;
  const auto t0 = Clock::now();
  for (std::uint64_t seed : seeds) {
    const TaskStream stream = cfg.make_stream(seed);
    HarnessConfig hc = cfg.harness_for(stream);
    SeedRun& sr = runs[seed];
    const auto ts = Clock::now();
    sr.full = guarded_run(hc, stream, seed, sr);
    hc.no_replay = true;
    sr.no_replay = run_stream(hc, stream, seed);
    sr.csv = report_bytes_csv(sr.full, num_tasks);
    sr.json = report_bytes_json(sr.full);
    std::printf("  seed %llu: full %.4f (T1 %.4f), no_replay %.4f (T1 %.4f), oracle %.4f, %.1f s\n",
                static_cast<unsigned long long>(seed), sr.full.reports.back().average_accuracy,
                sr.full.reports.back().task_accuracy[0], sr.no_replay.reports.back().average_accuracy,
                sr.no_replay.reports.back().task_accuracy[0], sr.full.oracle_reports.back().average_accuracy,
                seconds_since(ts));
    std::fflush(stdout);
  }
  const double secs = seconds_since(t0);

  // 5: forgetting mitigation, seed-averaged.
  constexpr double kMinTask1GapPoints = 10.0;
  double full_avg = 0, nr_avg = 0, full_t1 = 0, nr_t1 = 0;
  for (auto& [seed, sr] : runs) {
    full_avg += sr.full.reports.back().average_accuracy / seeds.size();
    nr_avg += sr.no_replay.reports.back().average_accuracy / seeds.size();
    full_t1 += sr.full.reports.back().task_accuracy[0] / seeds.size();
    nr_t1 += sr.no_replay.reports.back().task_accuracy[0] / seeds.size();
  }
  const double gap = 100.0 * (full_t1 - nr_t1);
  report({"forgetting_mitigation", full_avg > nr_avg && gap >= kMinTask1GapPoints && secs < 900.0,
          fmt("final average %.4f vs no_replay %.4f; task-1 gap %.1f pp (>= %.0f); %.0f s (< 900 s)", full_avg,
              nr_avg, gap, kMinTask1GapPoints, secs)});

  // 6: oracle routing never loses to predicted routing.
  bool routing_ok = true;
  std::string routing;
  for (auto& [seed, sr] : runs) {
    const double til = sr.full.oracle_reports.back().average_accuracy;
    const double cil = sr.full.reports.back().average_accuracy;
    routing_ok &= til >= cil;
    routing += fmt("%sseed %llu %.4f >= %.4f", routing.empty() ? "" : ", ", static_cast<unsigned long long>(seed), til, cil);
  }
  report({"routing_ordering", routing_ok, routing});

  // 7: task prediction beats chance by three binomial standard deviations.
  bool pred_ok = true;
  double worst_margin = INFINITY;
  const double chance = 1.0 / static_cast<double>(num_tasks);
  for (auto& [seed, sr] : runs) {
    const StageReport& last = sr.full.reports.back();
    for (std::size_t t = 0; t < num_tasks; ++t) {
      const double sd = std::sqrt(chance * (1.0 - chance) / static_cast<double>(last.test_sizes[t]));
      for (double p : {last.task_prediction_precision[t], last.routed_precision[t]}) {
        const double margin = (p - chance) / sd;
        worst_margin = std::min(worst_margin, margin);
        pred_ok &= margin >= 3.0;
      }
    }
  }
  report({"task_prediction_quality", pred_ok,
          fmt("chance %.2f; smallest margin over seeds and tasks %.1f sd (>= 3)", chance, worst_margin)});

  // 8: frozen and rehearsal-free contracts.
  bool frozen = true, feeds = true;
  std::string why;
  for (auto& [seed, sr] : runs) {
    frozen &= sr.frozen_ok;
    feeds &= sr.feeds_ok;
    if (!sr.frozen_ok) why += " " + sr.frozen_detail;
    if (!sr.feeds_ok) why += " " + sr.feeds_detail;
  }
  report({"frozen_and_rehearsal_free", frozen && feeds,
          frozen && feeds ? "encoder and prior-pool checksums stable; each feed views only its own task" : why});

  // 9: determinism of the report files.
  const TaskStream stream = cfg.make_stream(seeds.front());
  const RunResult again = run_stream(cfg.harness_for(stream), stream, seeds.front());
  const SeedRun& first = runs[seeds.front()];
  const bool same = report_bytes_csv(again, num_tasks) == first.csv && report_bytes_json(again) == first.json;
  report({"determinism", same, fmt("seed %llu rerun: CSV %zu bytes, JSON %zu bytes, identical: %s",
                                   static_cast<unsigned long long>(seeds.front()), first.csv.size(),
                                   first.json.size(), same ? "yes" : "no")});
}

}  // namespace

int main() {
  try {
    moe_duality();
    gradient_fidelity();
    replay_statistics();
    selection_oracle();
    end_to_end();
  } catch (const std::exception& e) {
    std::printf("[FAIL] acceptance aborted: %s\n", e.what());
    return 1;
  }
  std::size_t failed = 0;
  for (const auto& o : g_outcomes) failed += !o.passed;
  std::printf("%zu/%zu criteria passed\n", g_outcomes.size() - failed, g_outcomes.size());
  return failed == 0 ? 0 : 1;
}
