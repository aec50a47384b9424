#include "leap/events.hpp"

#include <algorithm>
#include <charconv>
#include <cmath>
#include <cstdio>
#include <istream>
#include <map>
#include <ostream>
#include <sstream>

#include "json.hpp"

namespace leap {

namespace {

using nlohmann::json;

std::vector<std::string_view> split_tabs(std::string_view line) {
  std::vector<std::string_view> fields;
  std::size_t start = 0;
  while (true) {
    const auto pos = line.find('\t', start);
    if (pos == std::string_view::npos) {
      fields.push_back(line.substr(start));
      break;
    }
    fields.push_back(line.substr(start, pos - start));
    start = pos + 1;
  }
  return fields;
}

struct RawRecord {
  std::string subject;
  std::string relation;
  std::string object;
  std::chrono::sys_days date;
  std::string text;
};

RawRecord make_record(std::size_t line_no, std::string_view subject, std::string_view relation,
                      std::string_view object, std::string_view date, std::string_view text) {
  if (subject.empty()) throw ParseError(line_no, "empty subject");
  if (relation.empty()) throw ParseError(line_no, "empty relation");
  if (object.empty()) throw ParseError(line_no, "empty object");
  const auto parsed = parse_iso_date(date);
  if (!parsed) throw ParseError(line_no, "unparseable date '" + std::string(date) + "'");
  return RawRecord{std::string(subject), std::string(relation), std::string(object), *parsed,
                   std::string(text)};
}

RawRecord parse_tsv_line(std::size_t line_no, std::string_view line) {
  const auto fields = split_tabs(line);
  if (fields.size() != 4 && fields.size() != 5) {
    throw ParseError(line_no, "expected 5 tab-separated fields, got " + std::to_string(fields.size()));
  }
  return make_record(line_no, fields[0], fields[1], fields[2], fields[3],
                     fields.size() == 5 ? fields[4] : std::string_view{});
}

std::string json_string_field(std::size_t line_no, const json& obj, const char* key, bool required) {
  const auto it = obj.find(key);
  if (it == obj.end() || it->is_null()) {
    if (required) throw ParseError(line_no, std::string("missing key '") + key + "'");
    return {};
  }
  if (!it->is_string()) throw ParseError(line_no, std::string("key '") + key + "' is not a string");
  return it->get<std::string>();
}

RawRecord parse_jsonl_line(std::size_t line_no, std::string_view line) {
  json obj;
  try {
    obj = json::parse(line);
  } catch (const json::parse_error& e) {
    throw ParseError(line_no, std::string("invalid JSON: ") + e.what());
  }
  if (!obj.is_object()) throw ParseError(line_no, "expected a JSON object");
  const auto subject = json_string_field(line_no, obj, "subject", true);
  const auto relation = json_string_field(line_no, obj, "relation", true);
  const auto object = json_string_field(line_no, obj, "object", true);
  const auto date = json_string_field(line_no, obj, "date", true);
  const auto text = json_string_field(line_no, obj, "text", false);
  return make_record(line_no, subject, relation, object, date, text);
}

bool is_blank(std::string_view line) {
  return std::all_of(line.begin(), line.end(), [](char c) { return c == ' ' || c == '\r'; });
}

PartStats part_stats(std::span<const Quintuple> part) {
  PartStats stats;
  stats.quintuples = part.size();
  std::vector<Day> days;
  days.reserve(part.size());
  for (const auto& q : part) days.push_back(q.day);
  std::sort(days.begin(), days.end());
  days.erase(std::unique(days.begin(), days.end()), days.end());
  stats.days = days.size();
  if (!days.empty()) {
    stats.first_day = days.front();
    stats.last_day = days.back();
  }
  return stats;
}

json part_json(const PartStats& s) {
  json j;
  j["quintuples"] = s.quintuples;
  j["days"] = s.days;
  j["first_day"] = s.first_day ? json(*s.first_day) : json(nullptr);
  j["last_day"] = s.last_day ? json(*s.last_day) : json(nullptr);
  return j;
}

}  // namespace

ParseError::ParseError(std::size_t line, const std::string& what)
    : std::runtime_error(line > 0 ? "line " + std::to_string(line) + ": " + what : what), line_(line) {}

EntityId Vocabulary::add_entity(std::string_view name) {
  std::string key(name);
  if (auto it = entity_index_.find(key); it != entity_index_.end()) return it->second;
  const auto id = static_cast<EntityId>(entities_.size());
  entities_.push_back(key);
  entity_index_.emplace(std::move(key), id);
  return id;
}

RelationId Vocabulary::add_relation(std::string_view name) {
  std::string key(name);
  if (auto it = relation_index_.find(key); it != relation_index_.end()) return it->second;
  const auto id = static_cast<RelationId>(relations_.size());
  relations_.push_back(key);
  relation_index_.emplace(std::move(key), id);
  return id;
}

std::optional<EntityId> Vocabulary::find_entity(std::string_view name) const {
  if (auto it = entity_index_.find(std::string(name)); it != entity_index_.end()) return it->second;
  return std::nullopt;
}

std::optional<RelationId> Vocabulary::find_relation(std::string_view name) const {
  if (auto it = relation_index_.find(std::string(name)); it != relation_index_.end()) return it->second;
  return std::nullopt;
}

const std::string& Vocabulary::entity(EntityId id) const {
  if (id < 0 || static_cast<std::size_t>(id) >= entities_.size()) {
    throw std::out_of_range("unknown entity id " + std::to_string(id));
  }
  return entities_[static_cast<std::size_t>(id)];
}

const std::string& Vocabulary::relation(RelationId id) const {
  if (id < 0 || static_cast<std::size_t>(id) >= relations_.size()) {
    throw std::out_of_range("unknown relation id " + std::to_string(id));
  }
  return relations_[static_cast<std::size_t>(id)];
}

Day Calendar::day_of(std::chrono::sys_days date) const {
  return static_cast<Day>((date - epoch_).count());
}

std::string Calendar::format(Day day, std::string_view pattern) const {
  const std::chrono::year_month_day ymd{date_of(day)};
  std::string out;
  char buf[16];
  for (std::size_t i = 0; i < pattern.size(); ++i) {
    if (pattern[i] != '%' || i + 1 == pattern.size()) {
      out.push_back(pattern[i]);
      continue;
    }
    switch (pattern[++i]) {
      case 'Y':
        std::snprintf(buf, sizeof buf, "%04d", static_cast<int>(ymd.year()));
        out += buf;
        break;
      case 'm':
        std::snprintf(buf, sizeof buf, "%02u", static_cast<unsigned>(ymd.month()));
        out += buf;
        break;
      case 'd':
        std::snprintf(buf, sizeof buf, "%02u", static_cast<unsigned>(ymd.day()));
        out += buf;
        break;
      case '%':
        out.push_back('%');
        break;
      default:
        out.push_back('%');
        out.push_back(pattern[i]);
    }
  }
  return out;
}

std::optional<std::chrono::sys_days> parse_iso_date(std::string_view text) {
  if (text.size() != 10 || text[4] != '-' || text[7] != '-') return std::nullopt;
  auto number = [&](std::size_t pos, std::size_t len) -> std::optional<int> {
    int value = 0;
    const char* first = text.data() + pos;
    const char* last = first + len;
    if (!std::all_of(first, last, [](char c) { return c >= '0' && c <= '9'; })) return std::nullopt;
    std::from_chars(first, last, value);
    return value;
  };
  const auto y = number(0, 4);
  const auto m = number(5, 2);
  const auto d = number(8, 2);
  if (!y || !m || !d) return std::nullopt;
  const std::chrono::year_month_day ymd{std::chrono::year{*y},
                                        std::chrono::month{static_cast<unsigned>(*m)},
                                        std::chrono::day{static_cast<unsigned>(*d)}};
  if (!ymd.ok()) return std::nullopt;
  return std::chrono::sys_days{ymd};
}

std::optional<DatasetFormat> dataset_format_from_string(std::string_view name) {
  if (name == "tsv") return DatasetFormat::tsv;
  if (name == "jsonl") return DatasetFormat::jsonl;
  return std::nullopt;
}

std::string_view to_string(DatasetFormat format) {
  return format == DatasetFormat::tsv ? "tsv" : "jsonl";
}

Dataset parse_dataset(std::istream& source, DatasetFormat format) {
  std::vector<RawRecord> records;
  std::string line;
  std::size_t line_no = 0;
  while (std::getline(source, line)) {
    ++line_no;
    if (!line.empty() && line.back() == '\r') line.pop_back();
    if (is_blank(line)) continue;
    records.push_back(format == DatasetFormat::tsv ? parse_tsv_line(line_no, line)
                                                   : parse_jsonl_line(line_no, line));
  }

  Dataset data;
  if (records.empty()) return data;
  auto epoch = records.front().date;
  for (const auto& r : records) epoch = std::min(epoch, r.date);
  data.calendar = Calendar(epoch);

  data.events.reserve(records.size());
  for (auto& r : records) {
    Quintuple q;
    q.subject = data.vocab.add_entity(r.subject);
    q.relation = data.vocab.add_relation(r.relation);
    q.object = data.vocab.add_entity(r.object);
    q.day = data.calendar.day_of(r.date);
    q.text = std::move(r.text);
    q.uid = data.events.size();
    data.events.push_back(std::move(q));
  }
  return data;
}

void write_dataset(std::ostream& sink, const Dataset& data, DatasetFormat format) {
  write_dataset(sink, data, data.events, format);
}

void write_dataset(std::ostream& sink, const Dataset& data, std::span<const Quintuple> events,
                   DatasetFormat format) {
  for (const auto& q : events) {
    const auto& s = data.vocab.entity(q.subject);
    const auto& r = data.vocab.relation(q.relation);
    const auto& o = data.vocab.entity(q.object);
    const auto date = data.calendar.format(q.day);
    if (format == DatasetFormat::tsv) {
      if (q.text.find_first_of("\t\n") != std::string::npos) {
        throw std::invalid_argument("text of uid " + std::to_string(q.uid) +
                                    " contains a tab or newline; use jsonl");
      }
      sink << s << '\t' << r << '\t' << o << '\t' << date << '\t' << q.text << '\n';
    } else {
      json obj;
      obj["subject"] = s;
      obj["relation"] = r;
      obj["object"] = o;
      obj["date"] = date;
      obj["text"] = q.text;
      sink << obj.dump() << '\n';
    }
  }
}

DatasetSplit chronological_split(std::span<const Quintuple> data, const SplitRatios& ratios) {
  if (data.empty()) throw std::invalid_argument("chronological_split: empty dataset");
  if (!(ratios.train > 0 && ratios.valid > 0 && ratios.test > 0)) {
    throw std::invalid_argument("chronological_split: ratios must be positive");
  }
  std::vector<Day> days;
  days.reserve(data.size());
  for (const auto& q : data) days.push_back(q.day);
  std::sort(days.begin(), days.end());
  days.erase(std::unique(days.begin(), days.end()), days.end());
  const auto total_days = static_cast<long>(days.size());
  if (total_days < 3) {
    throw std::invalid_argument("chronological_split: need at least 3 distinct days, got " +
                                std::to_string(total_days));
  }

  const double sum = ratios.train + ratios.valid + ratios.test;
  // Round to nearest with a small guard so 0.8 * 10 lands on 8.
  auto count_for = [&](double ratio) {
    return static_cast<long>(std::floor(static_cast<double>(total_days) * ratio / sum + 0.5 + 1e-9));
  };
  long n_train = std::max(1L, count_for(ratios.train));
  long n_valid = std::max(1L, count_for(ratios.valid));
  n_train = std::min(n_train, total_days - 2);
  n_valid = std::min(n_valid, total_days - n_train - 1);

  const Day valid_start = days[static_cast<std::size_t>(n_train)];
  const Day test_start = days[static_cast<std::size_t>(n_train + n_valid)];
  return split_at_days(data, valid_start, test_start);
}

DatasetSplit split_at_days(std::span<const Quintuple> data, Day valid_start, Day test_start) {
  if (test_start < valid_start) {
    throw std::invalid_argument("split_at_days: test boundary precedes valid boundary");
  }
  DatasetSplit split;
  split.valid_start_day = valid_start;
  split.test_start_day = test_start;
  for (const auto& q : data) {
    if (q.day < valid_start) {
      split.train.push_back(q);
    } else if (q.day < test_start) {
      split.valid.push_back(q);
    } else {
      split.test.push_back(q);
    }
  }
  return split;
}

std::vector<DailyGraph> group_by_day(std::span<const Quintuple> data) {
  std::map<Day, std::vector<DailyGraph::Edge>> by_day;
  for (const auto& q : data) {
    by_day[q.day].push_back({q.subject, q.relation, q.object, q.uid});
  }
  std::vector<DailyGraph> graphs;
  graphs.reserve(by_day.size());
  for (auto& [day, edges] : by_day) graphs.push_back({day, std::move(edges)});
  return graphs;
}

StatsReport dataset_stats(const DatasetSplit& split, const Vocabulary& vocab) {
  StatsReport report;
  report.num_entities = vocab.num_entities();
  report.num_relations = vocab.num_relations();
  report.train = part_stats(split.train);
  report.valid = part_stats(split.valid);
  report.test = part_stats(split.test);
  std::vector<Quintuple> all;
  all.reserve(split.train.size() + split.valid.size() + split.test.size());
  all.insert(all.end(), split.train.begin(), split.train.end());
  all.insert(all.end(), split.valid.begin(), split.valid.end());
  all.insert(all.end(), split.test.begin(), split.test.end());
  report.all = part_stats(all);
  return report;
}

std::string stats_to_json(const StatsReport& stats) {
  json j;
  j["num_entities"] = stats.num_entities;
  j["num_relations"] = stats.num_relations;
  j["train"] = part_json(stats.train);
  j["valid"] = part_json(stats.valid);
  j["test"] = part_json(stats.test);
  j["all"] = part_json(stats.all);
  return j.dump(2);
}

std::vector<Quintuple> sorted_by_time(std::span<const Quintuple> data) {
  std::vector<Quintuple> out(data.begin(), data.end());
  std::sort(out.begin(), out.end(), [](const Quintuple& a, const Quintuple& b) {
    return a.day != b.day ? a.day < b.day : a.uid < b.uid;
  });
  return out;
}

}  // namespace leap
