#pragma once

#include "hiermodel/report.hpp"
#include "hiermodel/sem.hpp"

#include <cstdint>
#include <optional>
#include <string>
#include <vector>

namespace hiermodel {

// One CLI invocation, already parsed.  Exactly one of `input` / `fixture`
// supplies the data for analysis commands.
struct AnalysisRequest {
  std::string command;  // describe | regress | anova | manova | sem |
                        // mlm-fit | mlm-decompose | simulate
  std::string input;    // CSV, summary-moments JSON, or simulator config JSON
  std::string fixture;  // "gender-achievement"
  std::string outcome;
  std::string group;
  std::string cluster;
  std::vector<std::string> vars;
  std::string model_path;  // SEM model-specification JSON
  std::string reference;   // dummy-0 group override for regress
  ReportFormat format = ReportFormat::Text;
  std::optional<std::uint64_t> seed;
  std::optional<int> reps;
  std::optional<int> clusters;
  std::optional<int> cluster_size;
  int threads = 1;
  bool emit_csv = false;  // simulate: write one generated replication as CSV
};

struct RunOutcome {
  Report report;
  int exit_code = 0;          // 0 ok, 2 input error, 3 numerical failure
  std::string raw_output;     // non-empty replaces the rendered report
};

RunOutcome run(const AnalysisRequest& request);

// SEM external interfaces: model-specification JSON and FitReport JSON.
PathModel model_from_json_text(const std::string& json_text);
std::string fit_report_to_json(const FitReport& report);

} // namespace hiermodel
