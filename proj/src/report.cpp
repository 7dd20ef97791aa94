#include "hiermodel/report.hpp"

#include <json.hpp>

#include <iomanip>
#include <sstream>

namespace hiermodel {

namespace {

std::string format_cell(double v, int precision) {
  std::ostringstream os;
  os << std::fixed << std::setprecision(precision) << v;
  return os.str();
}

void render_table_text(const ReportTable& t, int precision, std::ostream& os) {
  if (!t.title.empty()) os << t.title << "\n";
  const std::size_t ncols = t.column_headers.size();
  std::vector<std::size_t> widths(ncols + 1, 0);
  for (const auto& label : t.row_labels)
    widths[0] = std::max(widths[0], label.size());
  std::vector<std::vector<std::string>> cells;
  for (const auto& row : t.cells) {
    std::vector<std::string> r;
    for (double v : row) r.push_back(format_cell(v, precision));
    cells.push_back(std::move(r));
  }
  for (std::size_t c = 0; c < ncols; ++c) {
    widths[c + 1] = t.column_headers[c].size();
    for (const auto& row : cells)
      if (c < row.size()) widths[c + 1] = std::max(widths[c + 1], row[c].size());
  }
  os << std::left << std::setw(static_cast<int>(widths[0]) + 2) << "";
  for (std::size_t c = 0; c < ncols; ++c)
    os << std::right << std::setw(static_cast<int>(widths[c + 1]) + 2)
       << t.column_headers[c];
  os << "\n";
  for (std::size_t r = 0; r < cells.size(); ++r) {
    os << std::left << std::setw(static_cast<int>(widths[0]) + 2)
       << (r < t.row_labels.size() ? t.row_labels[r] : "");
    for (std::size_t c = 0; c < ncols; ++c)
      os << std::right << std::setw(static_cast<int>(widths[c + 1]) + 2)
         << (c < cells[r].size() ? cells[r][c] : "");
    os << "\n";
  }
}

} // namespace

std::string render(const Report& report, ReportFormat format, int precision) {
  if (format == ReportFormat::Json) {
    nlohmann::ordered_json j;
    j["tables"] = nlohmann::ordered_json::array();
    for (const auto& t : report.tables) {
      nlohmann::ordered_json jt;
      jt["title"] = t.title;
      jt["columns"] = t.column_headers;
      jt["rows"] = t.row_labels;
      jt["cells"] = t.cells;
      j["tables"].push_back(jt);
    }
    j["notes"] = report.notes;
    return j.dump();
  }
  std::ostringstream os;
  bool first = true;
  for (const auto& t : report.tables) {
    if (!first) os << "\n";
    first = false;
    render_table_text(t, precision, os);
  }
  for (const auto& n : report.notes) os << "note: " << n << "\n";
  return os.str();
}

} // namespace hiermodel
