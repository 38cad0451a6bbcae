// Command-line front end. Each command returns a process exit code:
// 0 ok, 1 property failure, 2 config/input error, 3 numeric error.

#pragma once

#include <cstdint>
#include <filesystem>
#include <iosfwd>
#include <optional>
#include <string>
#include <string_view>
#include <vector>

#include "relpool/harness.hpp"
#include "relpool/verify.hpp"

namespace relpool::cli {

enum ExitCode : int {
  kOk = 0,
  kPropertyFailure = 1,
  kConfigError = 2,
  kNumericError = 3,
};

/// Environment variable that supplies the output directory when --out is absent.
inline constexpr const char* kOutDirEnv = "RELPOOL_OUT_DIR";
inline constexpr const char* kDefaultOutDir = "relpool-out";

struct CommonArgs {
  std::string config_path;  // empty: built-in defaults
  std::optional<std::uint64_t> seed;
  std::vector<std::string> overrides;  // "section.key=value"
  std::optional<std::string> out_dir;
};

/// --out, else $RELPOOL_OUT_DIR, else ./relpool-out.
std::filesystem::path resolve_out_dir(const std::optional<std::string>& flag);

/// JSON array of {"M", "K", "L", "no_replay", "task_incremental"} objects,
/// given inline or as a file path. Throws ConfigError.
std::vector<GridPoint> parse_grid(std::string_view grid_text);

int cmd_train(const CommonArgs& args, std::ostream& log);
int cmd_eval(const CommonArgs& args, const std::string& state_path, bool task_incremental,
             std::ostream& log);
int cmd_ablate(const CommonArgs& args, const std::string& grid_spec, std::ostream& log);
int cmd_verify(const CommonArgs& args, const VerifyOptions& opts, std::ostream& log);
int cmd_gen_data(const CommonArgs& args, std::ostream& log);
int cmd_ingest_fewrel(const CommonArgs& args, const std::string& input, std::size_t tasks,
                      std::size_t max_len, std::ostream& log);

/// Parses argv and dispatches to a subcommand.
int run(int argc, char** argv);

}  // namespace relpool::cli
