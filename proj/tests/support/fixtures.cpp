#include "fixtures.hpp"

#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <random>
#include <sstream>

#include "leap/hashing.hpp"

namespace leap::testing {

namespace fs = std::filesystem;

Dataset make_dataset(const std::vector<Row>& rows) {
  std::string tsv;
  for (const auto& r : rows) tsv += r.subject + "\t" + r.relation + "\t" + r.object + "\t" + r.date + "\t" + r.text + "\n";
  std::istringstream in(tsv);
  return parse_dataset(in, DatasetFormat::tsv);
}

namespace {

std::string date_plus(int days) {
  const auto d = std::chrono::year_month_day{std::chrono::sys_days{std::chrono::year{2018} / 1 / 1} + std::chrono::days{days}};
  char buf[16];
  std::snprintf(buf, sizeof buf, "%04d-%02u-%02u", static_cast<int>(d.year()), static_cast<unsigned>(d.month()),
                static_cast<unsigned>(d.day()));
  return buf;
}

}  // namespace

Dataset functional_dataset(int days, int per_day, std::uint64_t seed) {
  std::mt19937_64 rng(seed);
  std::uniform_int_distribution<int> ent(0, 19), rel(0, 4);
  std::vector<Row> rows;
  for (int d = 0; d < days; ++d) {
    for (int i = 0; i < per_day; ++i) {
      const int s = ent(rng), r = rel(rng), o = (3 * s + 7 * r + 1) % 20;
      rows.push_back({"E" + std::to_string(s), "R" + std::to_string(r), "E" + std::to_string(o), date_plus(d),
                      "E" + std::to_string(s) + " acts on E" + std::to_string(o)});
    }
  }
  return make_dataset(rows);
}

Dataset periodic_dataset(int days) {
  std::vector<Row> rows;
  for (int d = 0; d < days; ++d) {
    for (int k = 0; k < 6; ++k) {
      if (d % 3 != k % 3) continue;
      rows.push_back({"A" + std::to_string(k), "R" + std::to_string(k), "B" + std::to_string((k + d) % 4), date_plus(d),
                      "event of kind " + std::to_string(k)});
    }
  }
  return make_dataset(rows);
}

EmbeddingStore relation_onehot_store(const Dataset& data, double noise, std::uint64_t seed) {
  EmbeddingStore store(8, "relation_onehot");
  for (const auto& q : data.events) {
    std::uint64_t state = seed ^ (q.uid * 0x9e3779b97f4a7c15ULL);
    std::vector<double> v(8);
    for (auto& x : v) x = noise * (static_cast<double>(splitmix64(state) >> 11) * 0x1.0p-52 - 1.0);
    v[static_cast<std::size_t>(q.relation) % 8] += 1.0;
    store.add(q.uid, std::span<const double>(v));
  }
  return store;
}

DatasetSplit train_only(const Dataset& data) {
  DatasetSplit s;
  s.train = data.events;
  Day last = 0;
  for (const auto& q : data.events) last = std::max(last, q.day);
  s.valid_start_day = s.test_start_day = last + 1;
  return s;
}

std::string read_text(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw std::runtime_error("cannot open " + path);
  std::ostringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

std::string fixture_dir() { return LEAP_FIXTURE_DIR; }

std::optional<std::string> india_data_path() {
  if (const char* env = std::getenv("LEAP_INDIA_DATA"); env && *env && fs::exists(env)) return std::string(env);
  const auto local = fs::path(fixture_dir()) / "india";
  if (fs::exists(local) && !fs::is_empty(local)) return local.string();
  return std::nullopt;
}

Dataset load_dataset_path(const std::string& path) {
  auto format_of = [](const fs::path& p) {
    return p.extension() == ".jsonl" || p.extension() == ".json" ? DatasetFormat::jsonl : DatasetFormat::tsv;
  };
  if (!fs::is_directory(path)) {
    std::ifstream in(path, std::ios::binary);
    return parse_dataset(in, format_of(path));
  }
  std::string merged;
  DatasetFormat fmt = DatasetFormat::tsv;
  for (const char* part : {"train", "valid", "test"}) {
    for (const char* ext : {".txt", ".tsv", ".jsonl", ".csv"}) {
      const auto p = fs::path(path) / (std::string(part) + ext);
      if (!fs::exists(p)) continue;
      fmt = format_of(p);
      merged += read_text(p.string());
      if (!merged.empty() && merged.back() != '\n') merged += '\n';
    }
  }
  std::istringstream in(merged);
  return parse_dataset(in, fmt);
}

}  // namespace leap::testing
