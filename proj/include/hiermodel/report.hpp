#pragma once

#include <string>
#include <vector>

namespace hiermodel {

// Labeled numeric table; cells are kept at full double precision and only
// rounded at text-render time.
struct ReportTable {
  std::string title;
  std::vector<std::string> column_headers;  // excludes the row-label column
  std::vector<std::string> row_labels;
  std::vector<std::vector<double>> cells;   // rows x columns
};

struct Report {
  std::vector<ReportTable> tables;
  std::vector<std::string> notes;
};

enum class ReportFormat { Text, Json };

// Text: column-aligned tables, `precision` decimals (HIERMODEL_PRECISION
// overrides when precision < 0 is passed through the CLI).  JSON: full
// double precision, schema {"tables":[...],"notes":[...]}.
std::string render(const Report& report, ReportFormat format, int precision = 3);

} // namespace hiermodel
