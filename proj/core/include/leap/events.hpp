#pragma once

#include <chrono>
#include <cstdint>
#include <iosfwd>
#include <optional>
#include <span>
#include <stdexcept>
#include <string>
#include <string_view>
#include <unordered_map>
#include <vector>

namespace leap {

using EntityId = std::int32_t;
using RelationId = std::int32_t;
using Day = std::int32_t;
using Uid = std::uint64_t;

/// One event: (subject, relation, object, day, text) plus a dataset-unique id.
struct Quintuple {
  EntityId subject = 0;
  RelationId relation = 0;
  EntityId object = 0;
  Day day = 0;
  std::string text;
  Uid uid = 0;

  friend bool operator==(const Quintuple&, const Quintuple&) = default;
};

/// Raised for malformed dataset input. `line()` is 1-based, 0 when unknown.
class ParseError : public std::runtime_error {
 public:
  ParseError(std::size_t line, const std::string& what);
  std::size_t line() const { return line_; }

 private:
  std::size_t line_;
};

/// Dense bidirectional string <-> index maps for entities and relations.
/// Indices follow first-appearance order and never change once assigned.
class Vocabulary {
 public:
  EntityId add_entity(std::string_view name);
  RelationId add_relation(std::string_view name);

  std::optional<EntityId> find_entity(std::string_view name) const;
  std::optional<RelationId> find_relation(std::string_view name) const;

  /// Throws std::out_of_range for unknown ids.
  const std::string& entity(EntityId id) const;
  const std::string& relation(RelationId id) const;

  std::size_t num_entities() const { return entities_.size(); }
  std::size_t num_relations() const { return relations_.size(); }
  const std::vector<std::string>& entities() const { return entities_; }
  const std::vector<std::string>& relations() const { return relations_; }

  friend bool operator==(const Vocabulary& a, const Vocabulary& b) {
    return a.entities_ == b.entities_ && a.relations_ == b.relations_;
  }

 private:
  std::vector<std::string> entities_;
  std::vector<std::string> relations_;
  std::unordered_map<std::string, EntityId> entity_index_;
  std::unordered_map<std::string, RelationId> relation_index_;
};

/// Maps day indices to calendar dates. Day 0 is the dataset epoch.
class Calendar {
 public:
  Calendar() = default;
  explicit Calendar(std::chrono::sys_days epoch) : epoch_(epoch) {}

  std::chrono::sys_days epoch() const { return epoch_; }
  std::chrono::sys_days date_of(Day day) const { return epoch_ + std::chrono::days{day}; }
  Day day_of(std::chrono::sys_days date) const;

  /// Renders `day` with a strftime-like pattern; supports %Y, %m, %d and %%.
  std::string format(Day day, std::string_view pattern = "%Y-%m-%d") const;

  friend bool operator==(const Calendar&, const Calendar&) = default;

 private:
  std::chrono::sys_days epoch_{};
};

/// Strict YYYY-MM-DD parser; returns nullopt for anything else, including
/// impossible dates such as 2011-02-30.
std::optional<std::chrono::sys_days> parse_iso_date(std::string_view text);

enum class DatasetFormat { tsv, jsonl };

std::optional<DatasetFormat> dataset_format_from_string(std::string_view name);
std::string_view to_string(DatasetFormat format);

struct Dataset {
  Vocabulary vocab;
  Calendar calendar;
  std::vector<Quintuple> events;  // file order, uid == position
};

Dataset parse_dataset(std::istream& source, DatasetFormat format);

/// Writes events back in the given format; parse_dataset(write) reproduces them.
void write_dataset(std::ostream& sink, const Dataset& data, DatasetFormat format);
void write_dataset(std::ostream& sink, const Dataset& data, std::span<const Quintuple> events,
                   DatasetFormat format);

struct SplitRatios {
  double train = 0.8;
  double valid = 0.1;
  double test = 0.1;
};

struct DatasetSplit {
  std::vector<Quintuple> train;
  std::vector<Quintuple> valid;
  std::vector<Quintuple> test;
  Day valid_start_day = 0;  // first day belonging to valid
  Day test_start_day = 0;   // first day belonging to test
};

/// Partitions the distinct observed days chronologically. Train and valid
/// receive round(D * ratio) days, test the remainder; each part gets at least
/// one day. Throws std::invalid_argument with fewer than 3 distinct days.
DatasetSplit chronological_split(std::span<const Quintuple> data, const SplitRatios& ratios);

/// Splits at explicit day boundaries: day < valid_start -> train,
/// valid_start <= day < test_start -> valid, otherwise test.
DatasetSplit split_at_days(std::span<const Quintuple> data, Day valid_start, Day test_start);

struct DailyGraph {
  struct Edge {
    EntityId subject;
    RelationId relation;
    EntityId object;
    Uid uid;
    friend bool operator==(const Edge&, const Edge&) = default;
  };
  Day day = 0;
  std::vector<Edge> edges;
};

/// One graph per distinct day, ascending; edges keep input order.
std::vector<DailyGraph> group_by_day(std::span<const Quintuple> data);

struct PartStats {
  std::size_t quintuples = 0;
  std::size_t days = 0;
  std::optional<Day> first_day;
  std::optional<Day> last_day;
};

struct StatsReport {
  std::size_t num_entities = 0;
  std::size_t num_relations = 0;
  PartStats train;
  PartStats valid;
  PartStats test;
  PartStats all;
};

StatsReport dataset_stats(const DatasetSplit& split, const Vocabulary& vocab);
std::string stats_to_json(const StatsReport& stats);

/// Events sorted by (day, uid); the canonical order for history lookups.
std::vector<Quintuple> sorted_by_time(std::span<const Quintuple> data);

}  // namespace leap
