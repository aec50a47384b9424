#pragma once

#include <string>
#include <utility>
#include <vector>

namespace leap {

struct ReportRow {
  std::string label;
  std::vector<double> values;
};

/// One results table: named rows, metric columns.
struct Report {
  std::string title;
  std::vector<std::string> columns;
  std::vector<ReportRow> rows;
  std::vector<std::pair<std::string, std::string>> notes;  // e.g. averaging mode
};

enum class ReportLayout { json, table };

/// Keys in insertion order; values rounded to 4 decimals.
std::string report_to_json(const Report& report);
/// Aligned columns, values printed with 4 decimals.
std::string report_to_text(const Report& report);

/// Throws std::invalid_argument for a report without rows (no file is
/// created) and std::runtime_error on I/O failure.
void write_report(const Report& report, ReportLayout layout, const std::string& path);

}  // namespace leap
