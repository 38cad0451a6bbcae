#include <cstdio>
#include <ostream>
#include <string>

#include "json.hpp"

#include "relpool/harness.hpp"

namespace relpool {

namespace {

std::string fixed6(double v) {
  char buf[64];
  std::snprintf(buf, sizeof buf, "%.6f", v);
  return buf;
}

}  // namespace

void write_reports_csv(std::span<const StageReport> reports, std::size_t num_tasks, std::ostream& out) {
  out << "stage";
  for (std::size_t t = 0; t < num_tasks; ++t) out << ",T" << t + 1;
  out << ",average,uniform_average\n";
  for (const auto& r : reports) {
    out << r.stage;
    for (std::size_t t = 0; t < num_tasks; ++t) {
      out << ',';
      if (t < r.task_accuracy.size()) out << fixed6(r.task_accuracy[t]);
    }
    out << ',' << fixed6(r.average_accuracy) << ',' << fixed6(r.uniform_average_accuracy) << '\n';
  }
}

void write_reports_json(std::span<const StageReport> reports, std::ostream& out) {
  nlohmann::ordered_json stages = nlohmann::ordered_json::array();
  for (const auto& r : reports) {
    nlohmann::ordered_json tasks = nlohmann::ordered_json::array();
    for (std::size_t t = 0; t < r.task_accuracy.size(); ++t) {
      tasks.push_back({{"task", t + 1},
                       {"test_size", r.test_sizes[t]},
                       {"accuracy", r.task_accuracy[t]},
                       {"task_prediction_precision", r.task_prediction_precision[t]},
                       {"routed_precision", r.routed_precision[t]}});
    }
    stages.push_back({{"stage", r.stage},
                      {"average_accuracy", r.average_accuracy},
                      {"uniform_average_accuracy", r.uniform_average_accuracy},
                      {"weighting", "test-split size"},
                      {"tasks", std::move(tasks)}});
  }
  nlohmann::ordered_json doc = {{"format", "relpool-stage-reports"}, {"version", 1}, {"stages", std::move(stages)}};
  out << doc.dump(2) << '\n';
}

void write_ablation_csv(std::span<const AblationRow> rows, std::ostream& out) {
  std::size_t stages = 0;
  for (const auto& r : rows) stages = std::max(stages, r.stage_accuracy.size());
  out << "label,M,K,L,no_replay,task_incremental";
  for (std::size_t s = 0; s < stages; ++s) out << ",S" << s + 1;
  out << ",final_uniform_average\n";
  for (const auto& r : rows) {
    out << '"' << r.point.label() << '"' << ',' << r.config.pool.pool_size << ',' << r.config.pool.top_k
        << ',' << r.config.pool.prompt_length << ',' << (r.point.no_replay ? 1 : 0) << ','
        << (r.point.task_incremental ? 1 : 0);
    for (std::size_t s = 0; s < stages; ++s) {
      out << ',';
      if (s < r.stage_accuracy.size()) out << fixed6(r.stage_accuracy[s]);
    }
    out << ',' << (r.stage_uniform_accuracy.empty() ? std::string() : fixed6(r.stage_uniform_accuracy.back()))
        << '\n';
  }
}

}  // namespace relpool
