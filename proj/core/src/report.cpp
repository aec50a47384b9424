#include "leap/report.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <fstream>
#include <stdexcept>

#include "json.hpp"

namespace leap {

namespace {

double round4(double v) { return std::round(v * 1e4) / 1e4; }

std::string fixed4(double v) {
  char buf[64];
  std::snprintf(buf, sizeof buf, "%.4f", v);
  return buf;
}

void check(const Report& report) {
  if (report.rows.empty()) throw std::invalid_argument("report '" + report.title + "' has no rows");
  for (const auto& row : report.rows) {
    if (row.values.size() != report.columns.size()) {
      throw std::invalid_argument("report row '" + row.label + "' does not match the column count");
    }
  }
}

}  // namespace

std::string report_to_json(const Report& report) {
  check(report);
  nlohmann::ordered_json j;
  j["title"] = report.title;
  j["columns"] = report.columns;
  auto& rows = j["rows"] = nlohmann::ordered_json::array();
  for (const auto& row : report.rows) {
    nlohmann::ordered_json r;
    r["label"] = row.label;
    for (std::size_t c = 0; c < report.columns.size(); ++c) r[report.columns[c]] = round4(row.values[c]);
    rows.push_back(std::move(r));
  }
  if (!report.notes.empty()) {
    auto& notes = j["notes"] = nlohmann::ordered_json::object();
    for (const auto& [k, v] : report.notes) notes[k] = v;
  }
  return j.dump(2) + "\n";
}

std::string report_to_text(const Report& report) {
  check(report);
  std::size_t label_width = 0;
  for (const auto& row : report.rows) label_width = std::max(label_width, row.label.size());
  std::vector<std::size_t> widths;
  for (const auto& c : report.columns) widths.push_back(std::max<std::size_t>(c.size(), 6));

  auto pad = [](std::string s, std::size_t w) { return s.size() >= w ? s : s + std::string(w - s.size(), ' '); };
  auto end_line = [](std::string& out) {
    while (!out.empty() && out.back() == ' ') out.pop_back();
    out += "\n";
  };
  std::string out;
  if (!report.title.empty()) out += report.title + "\n";
  out += pad("", label_width);
  for (std::size_t c = 0; c < report.columns.size(); ++c) out += " " + pad(report.columns[c], widths[c]);
  end_line(out);
  for (const auto& row : report.rows) {
    out += pad(row.label, label_width);
    for (std::size_t c = 0; c < row.values.size(); ++c) out += " " + pad(fixed4(row.values[c]), widths[c]);
    end_line(out);
  }
  for (const auto& [k, v] : report.notes) out += k + ": " + v + "\n";
  return out;
}

void write_report(const Report& report, ReportLayout layout, const std::string& path) {
  const std::string body = layout == ReportLayout::json ? report_to_json(report) : report_to_text(report);
  std::ofstream out(path, std::ios::binary);
  if (!out) throw std::runtime_error("cannot open " + path + " for writing");
  out << body;
  if (!out) throw std::runtime_error("write failed for " + path);
}

}  // namespace leap
