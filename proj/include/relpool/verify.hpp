// Self-checks run by `relpool verify`: the attention/MoE identity, analytic
// gradients against central differences, replay moment recovery, EM
// monotonicity and top-K selection against exhaustive search.

#pragma once

#include <cstddef>
#include <cstdint>
#include <iosfwd>
#include <span>
#include <string>
#include <vector>

namespace relpool {

struct VerifyOptions {
  std::uint64_t seed = 20240601;
  std::size_t moe_configs = 1000;
  std::size_t gradient_fixtures = 50;
  std::size_t moment_fixtures = 7;  // dims 2..8
  std::size_t selection_pools = 500;
  /// Test-only fault: nudges one W_V entry between the two attention views.
  bool inject_wv_fault = false;
};

struct CheckResult {
  std::string name;
  bool passed = false;
  std::size_t cases = 0;
  double worst = 0.0;      // largest observed error statistic
  double threshold = 0.0;  // pass iff worst < threshold (or <= for exact checks)
  /// JSON describing the first failing case, enough to replay it.
  std::string failing_case;
};

CheckResult check_moe_duality(const VerifyOptions& opts);
CheckResult check_gradients(const VerifyOptions& opts);
CheckResult check_replay_moments(const VerifyOptions& opts);
CheckResult check_em_monotone(const VerifyOptions& opts);
CheckResult check_selection_oracle(const VerifyOptions& opts);

std::vector<CheckResult> run_verify(const VerifyOptions& opts);
void print_verify_table(std::span<const CheckResult> results, std::ostream& out);

}  // namespace relpool
