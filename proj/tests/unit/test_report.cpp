#include <gtest/gtest.h>

#include <filesystem>

#include "fixtures.hpp"
#include "json.hpp"
#include "leap/report.hpp"

using namespace leap;

namespace {

Report hits_report() {
  Report r;
  r.title = "Object prediction (ranking)";
  r.columns = {"Hits@1", "Hits@3", "Hits@10"};
  r.rows = {{"LEAP_OP1", {0.25, 0.5, 0.75}}};
  r.notes = {{"split", "test"}};
  return r;
}

}  // namespace

TEST(ReportText, FourDecimalRow) {
  const auto text = report_to_text(hits_report());
  EXPECT_NE(text.find("0.2500 0.5000 0.7500"), std::string::npos) << text;
  EXPECT_NE(text.find("split: test"), std::string::npos);
  for (std::size_t pos = text.find('\n'); pos != std::string::npos; pos = text.find('\n', pos + 1)) {
    if (pos > 0) EXPECT_NE(text[pos - 1], ' ');
  }
}

TEST(ReportJson, OrderedAndRounded) {
  auto r = hits_report();
  r.rows.push_back({"other", {1.0 / 3, 0.123456, 1}});
  const auto j = nlohmann::ordered_json::parse(report_to_json(r));
  std::vector<std::string> keys;
  for (auto it = j.begin(); it != j.end(); ++it) keys.push_back(it.key());
  EXPECT_EQ(keys, (std::vector<std::string>{"title", "columns", "rows", "notes"}));
  EXPECT_EQ(j["rows"][1]["label"], "other");
  EXPECT_DOUBLE_EQ(j["rows"][1]["Hits@1"].get<double>(), 0.3333);
  EXPECT_DOUBLE_EQ(j["rows"][1]["Hits@3"].get<double>(), 0.1235);
  EXPECT_EQ(report_to_json(r), report_to_json(r));
}

TEST(ReportFile, RoundTripsThroughParser) {
  const auto path = ::testing::TempDir() + "/leap_report.json";
  write_report(hits_report(), ReportLayout::json, path);
  const auto j = nlohmann::json::parse(leap::testing::read_text(path));
  EXPECT_DOUBLE_EQ(j["rows"][0]["Hits@10"].get<double>(), 0.75);
  EXPECT_EQ(j["notes"]["split"], "test");
  const auto table = ::testing::TempDir() + "/leap_report.txt";
  write_report(hits_report(), ReportLayout::table, table);
  EXPECT_EQ(leap::testing::read_text(table), report_to_text(hits_report()));
}

TEST(ReportFile, EmptyReportLeavesNoFile) {
  const auto path = ::testing::TempDir() + "/leap_empty_report.json";
  std::filesystem::remove(path);
  Report empty = hits_report();
  empty.rows.clear();
  EXPECT_THROW(write_report(empty, ReportLayout::json, path), std::invalid_argument);
  EXPECT_FALSE(std::filesystem::exists(path));
  Report ragged = hits_report();
  ragged.rows[0].values.pop_back();
  EXPECT_THROW(write_report(ragged, ReportLayout::table, path), std::invalid_argument);
  EXPECT_FALSE(std::filesystem::exists(path));
}
