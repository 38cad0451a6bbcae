#include "relpool/cli.hpp"

#include <cstdlib>
#include <fstream>
#include <functional>
#include <iostream>
#include <sstream>

#include "CLI11.hpp"
#include "json.hpp"

#include "relpool/config.hpp"
#include "relpool/errors.hpp"
#include "relpool/io/binary.hpp"
#include "relpool/numeric/kernels.hpp"

namespace relpool::cli {

namespace {

namespace fs = std::filesystem;
using Json = nlohmann::ordered_json;

void write_text(const fs::path& path, const std::string& text) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw ConfigError("cannot write " + path.string());
  out << text;
}

template <typename Fn>
std::string render(Fn&& fn) {
  std::ostringstream ss;
  fn(ss);
  return ss.str();
}

RunConfig effective_config(const CommonArgs& args) {
  RunConfig c = args.config_path.empty() ? RunConfig{} : load_run_config(args.config_path);
  for (const auto& o : args.overrides) c = apply_override(c, o);
  if (args.seed) c.seeds = {*args.seed};
  c.validate();
  return c;
}

fs::path prepare_out(const CommonArgs& args) {
  const fs::path out = resolve_out_dir(args.out_dir);
  std::error_code ec;
  fs::create_directories(out, ec);
  if (ec) throw ConfigError("cannot create output directory " + out.string() + ": " + ec.message());
  return out;
}

void write_stage_files(const fs::path& dir, std::span<const StageReport> reports, std::size_t tasks) {
  for (std::size_t t = 0; t < reports.size(); ++t) {
    const auto one = reports.subspan(t, 1);
    const std::string stem = "stage_" + std::to_string(t + 1);
    write_text(dir / (stem + ".csv"), render([&](std::ostream& o) { write_reports_csv(one, tasks, o); }));
    write_text(dir / (stem + ".json"), render([&](std::ostream& o) { write_reports_json(one, o); }));
  }
  write_text(dir / "reports.csv", render([&](std::ostream& o) { write_reports_csv(reports, tasks, o); }));
  write_text(dir / "reports.json", render([&](std::ostream& o) { write_reports_json(reports, o); }));
}

// Maps library exceptions onto the exit-code contract.
int guarded(const std::function<int()>& body) {
  try {
    return body();
  } catch (const ConfigError& e) {
    std::cerr << "config error: " << e.what() << '\n';
    return kConfigError;
  } catch (const ParseError& e) {
    std::cerr << "parse error: " << e.what() << '\n';
    return kConfigError;
  } catch (const InvalidArgument& e) {
    std::cerr << "invalid argument: " << e.what() << '\n';
    return kConfigError;
  } catch (const NumericError& e) {
    std::cerr << "numeric error: " << e.what() << '\n';
    return kNumericError;
  } catch (const DegenerateInput& e) {
    std::cerr << "numeric error: " << e.what() << '\n';
    return kNumericError;
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << '\n';
    return kConfigError;
  }
}

}  // namespace

fs::path resolve_out_dir(const std::optional<std::string>& flag) {
  if (flag && !flag->empty()) return *flag;
  if (const char* env = std::getenv(kOutDirEnv); env && *env) return env;
  return kDefaultOutDir;
}

std::vector<GridPoint> parse_grid(std::string_view grid_text) {
  std::string text(grid_text);
  if (!text.empty() && text.front() != '[') {
    std::ifstream in(text, std::ios::binary);
    if (!in) throw ConfigError("grid: cannot read " + text);
    std::ostringstream ss;
    ss << in.rdbuf();
    text = ss.str();
  }
  Json doc;
  try {
    doc = Json::parse(text, nullptr, true, true);
  } catch (const Json::parse_error& e) {
    throw ConfigError(std::string("grid: ") + e.what());
  }
  if (!doc.is_array() || doc.empty()) throw ConfigError("grid: expected a non-empty array of points");
  std::vector<GridPoint> grid;
  for (std::size_t i = 0; i < doc.size(); ++i) {
    const auto& p = doc[i];
    const std::string where = "grid[" + std::to_string(i) + "]";
    if (!p.is_object()) throw ConfigError(where + ": expected an object");
    GridPoint g;
    for (const auto& [k, v] : p.items()) {
      if (k == "M" || k == "K" || k == "L") {
        if (!v.is_number_unsigned() || v.get<std::size_t>() == 0) {
          throw ConfigError(where + "." + k + ": expected a positive integer");
        }
        const auto n = v.get<std::size_t>();
        (k == "M" ? g.pool_size : k == "K" ? g.top_k : g.prompt_length) = n;
      } else if (k == "no_replay" || k == "task_incremental") {
        if (!v.is_boolean()) throw ConfigError(where + "." + k + ": expected a boolean");
        (k == "no_replay" ? g.no_replay : g.task_incremental) = v.get<bool>();
      } else {
        throw ConfigError(where + ": unknown key \"" + k + "\"");
      }
    }
    grid.push_back(g);
  }
  return grid;
}

int cmd_train(const CommonArgs& args, std::ostream& log) {
  return guarded([&] {
    const RunConfig cfg = effective_config(args);
    const fs::path out = prepare_out(args);
    write_text(out / "effective_config.json", dump_run_config(cfg));
    for (std::uint64_t seed : cfg.seeds) {
      const TaskStream stream = cfg.make_stream(seed);
      const HarnessConfig hc = cfg.harness_for(stream);
      const RunResult res = run_stream(hc, stream, seed, cfg.task_incremental);
      const fs::path dir = out / ("seed-" + std::to_string(seed));
      fs::create_directories(dir);
      io::write_file(dir / "state.rlpl", io::BlobKind::kContinualState, res.state.serialize());
      write_stage_files(dir, res.reports, stream.tasks.size());
      if (cfg.task_incremental) {
        const fs::path til = dir / "task_incremental";
        fs::create_directories(til);
        write_stage_files(til, res.oracle_reports, stream.tasks.size());
      }
      Json timing = Json::array();
      for (const auto& r : res.reports) timing.push_back({{"stage", r.stage}, {"seconds", r.wall_clock_seconds}});
      write_text(dir / "timing.json", timing.dump(2) + "\n");
      log << "seed " << seed << ": final average accuracy " << res.reports.back().average_accuracy
          << " (" << stream.tasks.size() << " stages) -> " << dir.string() << '\n';
    }
    return static_cast<int>(kOk);
  });
}

int cmd_eval(const CommonArgs& args, const std::string& state_path, bool task_incremental,
             std::ostream& log) {
  return guarded([&] {
    const RunConfig cfg = effective_config(args);
    const auto payload = io::read_file(state_path, io::BlobKind::kContinualState);
    const ContinualState state = ContinualState::deserialize(payload);
    if (state.tasks_trained() == 0) throw ConfigError("state has no trained task");
    const TaskStream stream = cfg.make_stream(args.seed.value_or(state.seed()));
    const bool til = task_incremental || cfg.task_incremental;
    const StageReport rep = evaluate(state, stream, state.tasks_trained(), {til});
    const fs::path out = prepare_out(args);
    write_text(out / "effective_config.json", dump_run_config(cfg));
    const std::span<const StageReport> one(&rep, 1);
    write_text(out / "eval.csv", render([&](std::ostream& o) { write_reports_csv(one, stream.tasks.size(), o); }));
    write_text(out / "eval.json", render([&](std::ostream& o) { write_reports_json(one, o); }));
    log << "stage " << rep.stage << (til ? " (task-incremental)" : "") << ": average accuracy "
        << rep.average_accuracy << '\n';
    return static_cast<int>(kOk);
  });
}

int cmd_ablate(const CommonArgs& args, const std::string& grid_spec, std::ostream& log) {
  return guarded([&] {
    const RunConfig cfg = effective_config(args);
    const std::vector<GridPoint> grid = parse_grid(grid_spec);
    const fs::path out = prepare_out(args);
    write_text(out / "effective_config.json", dump_run_config(cfg));
    // All seeds share the encoder vocabulary of the first stream.
    const HarnessConfig base = cfg.harness_for(cfg.make_stream(cfg.seeds.front()));
    const auto rows = run_ablation(base, [&cfg](std::uint64_t s) { return cfg.make_stream(s); }, grid, cfg.seeds);
    write_text(out / "ablation.csv", render([&](std::ostream& o) { write_ablation_csv(rows, o); }));
    Json doc = {{"format", "relpool-ablation"}, {"version", 1}, {"seeds", cfg.seeds}, {"points", Json::array()}};
    for (const auto& row : rows) {
      Json per_seed = Json::array();
      for (const auto& run : row.per_seed) {
        per_seed.push_back(Json::parse(render([&](std::ostream& o) { write_reports_json(run, o); })));
      }
      doc["points"].push_back({{"label", row.point.label()},
                               {"M", row.config.pool.pool_size},
                               {"K", row.config.pool.top_k},
                               {"L", row.config.pool.prompt_length},
                               {"no_replay", row.point.no_replay},
                               {"task_incremental", row.point.task_incremental},
                               {"stage_accuracy", row.stage_accuracy},
                               {"stage_uniform_accuracy", row.stage_uniform_accuracy},
                               {"runs", std::move(per_seed)}});
    }
    write_text(out / "ablation.json", doc.dump(2) + "\n");
    for (const auto& row : rows) log << row.point.label() << ": final " << row.stage_accuracy.back() << '\n';
    return static_cast<int>(kOk);
  });
}

int cmd_verify(const CommonArgs& args, const VerifyOptions& opts, std::ostream& log) {
  return guarded([&] {
    VerifyOptions o = opts;
    if (args.seed) o.seed = *args.seed;
    const auto results = run_verify(o);
    print_verify_table(results, log);
    bool ok = true;
    Json doc = {{"seed", o.seed}, {"kernels", std::string(kernels::active().name)}, {"checks", Json::array()}};
    for (const auto& r : results) {
      ok &= r.passed;
      Json row = {{"name", r.name}, {"passed", r.passed}, {"cases", r.cases}, {"worst", r.worst},
                  {"threshold", r.threshold}};
      if (!r.passed) row["failing_case"] = Json::parse(r.failing_case);
      doc["checks"].push_back(std::move(row));
    }
    if (args.out_dir || std::getenv(kOutDirEnv)) {
      const fs::path out = prepare_out(args);
      write_text(out / "verify.json", doc.dump(2) + "\n");
    }
    return static_cast<int>(ok ? kOk : kPropertyFailure);
  });
}

int cmd_gen_data(const CommonArgs& args, std::ostream& log) {
  return guarded([&] {
    const RunConfig cfg = effective_config(args);
    const fs::path out = prepare_out(args);
    write_text(out / "effective_config.json", dump_run_config(cfg));
    for (std::uint64_t seed : cfg.seeds) {
      const TaskStream stream = cfg.make_stream(seed);
      const fs::path file = out / ("stream-seed-" + std::to_string(seed) + ".jsonl");
      write_text(file, render([&](std::ostream& o) { write_stream_jsonl(stream, o); }));
      log << "seed " << seed << ": " << stream.tasks.size() << " tasks, " << stream.num_relations()
          << " relations -> " << file.string() << '\n';
    }
    return static_cast<int>(kOk);
  });
}

int cmd_ingest_fewrel(const CommonArgs& args, const std::string& input, std::size_t tasks,
                      std::size_t max_len, std::ostream& log) {
  return guarded([&] {
    RunConfig cfg = effective_config(args);
    cfg.source = DatasetSource::kFewRel;
    cfg.fewrel.path = input;
    cfg.fewrel.num_tasks = tasks;
    cfg.fewrel.ingest.max_len = max_len;
    const std::uint64_t seed = cfg.seeds.front();
    cfg.seeds = {seed};
    const TaskStream stream = cfg.make_stream(seed);
    const fs::path out = prepare_out(args);
    write_text(out / "effective_config.json", dump_run_config(cfg));
    write_text(out / "stream.jsonl", render([&](std::ostream& o) { write_stream_jsonl(stream, o); }));
    log << input << ": " << stream.num_relations() << " relations in " << stream.tasks.size()
        << " tasks, vocabulary " << stream.vocab_size() << '\n';
    return static_cast<int>(kOk);
  });
}

int run(int argc, char** argv) {
  CLI::App app{"relpool: continual relation extraction with prompt pools and latent replay"};
  app.require_subcommand(1);
  CommonArgs common;
  std::uint64_t seed = 0;

  auto add_common = [&](CLI::App* sub, bool with_config) {
    if (with_config) {
      sub->add_option("-c,--config", common.config_path, "Run config (JSON with comments)");
      sub->add_option("--set", common.overrides, "Override a config key: section.key=value");
    }
    sub->add_option("--seed", seed, "Seed override");
    sub->add_option("-o,--out", common.out_dir, std::string("Output directory (default $") + kOutDirEnv + " or ./" + kDefaultOutDir + ")");
  };

  auto* train = app.add_subcommand("train", "Train on the full task stream and write state + stage reports");
  add_common(train, true);

  std::string state_path;
  bool til = false;
  auto* eval = app.add_subcommand("eval", "Evaluate a saved state on its stream");
  add_common(eval, true);
  eval->add_option("--state", state_path, "State file written by train")->required();
  eval->add_flag("--task-incremental", til, "Route with the oracle task id");

  std::string grid;
  auto* ablate = app.add_subcommand("ablate", "Run an ablation grid over the configured seeds");
  add_common(ablate, true);
  ablate->add_option("--grid", grid, "Grid JSON (inline array or file path)")->required();

  VerifyOptions vopts;
  auto* verify = app.add_subcommand("verify", "Run the numerical self-checks");
  add_common(verify, false);
  verify->add_flag("--inject-wv-fault", vopts.inject_wv_fault, "Perturb W_V between attention views")
      ->group("");

  auto* gen = app.add_subcommand("gen-data", "Export the configured stream as JSONL");
  add_common(gen, true);

  std::string input;
  std::size_t tasks = 5, max_len = 32;
  auto* ingest = app.add_subcommand("ingest-fewrel", "Read a FewRel-format JSON file and export it as JSONL");
  add_common(ingest, true);
  ingest->add_option("--input", input, "FewRel JSON file")->required();
  ingest->add_option("--tasks", tasks, "Number of tasks")->check(CLI::PositiveNumber);
  ingest->add_option("--max-len", max_len, "Maximum sequence length after marking")->check(CLI::Range(8, 4096));

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int code = app.exit(e);
    return code == 0 ? kOk : kConfigError;
  }

  for (auto* sub : {train, eval, ablate, verify, gen, ingest}) {
    if (sub->parsed() && sub->count("--seed") > 0) common.seed = seed;
  }
  if (const char* isa = std::getenv("RELPOOL_KERNELS"); isa && *isa) {
    std::cerr << "kernels: " << kernels::active().name << '\n';
  }

  if (train->parsed()) return cmd_train(common, std::cout);
  if (eval->parsed()) return cmd_eval(common, state_path, til, std::cout);
  if (ablate->parsed()) return cmd_ablate(common, grid, std::cout);
  if (verify->parsed()) return cmd_verify(common, vopts, std::cout);
  if (gen->parsed()) return cmd_gen_data(common, std::cout);
  return cmd_ingest_fewrel(common, input, tasks, max_len, std::cout);
}

}  // namespace relpool::cli
