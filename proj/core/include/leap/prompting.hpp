#pragma once

#include <optional>
#include <span>
#include <string>
#include <string_view>
#include <unordered_map>
#include <vector>

#include "leap/events.hpp"

namespace leap {

enum class PromptVariant { few_shot, zero_shot, no_text, simple };
enum class HistoryScope { same_subject_first, global_recent };

std::optional<PromptVariant> prompt_variant_from_string(std::string_view name);
std::string_view to_string(PromptVariant variant);
std::optional<HistoryScope> history_scope_from_string(std::string_view name);
std::string_view to_string(HistoryScope scope);

struct PromptConfig {
  PromptVariant variant = PromptVariant::few_shot;
  int shots = 5;  // in-context examples per query
  HistoryScope history_scope = HistoryScope::same_subject_first;
  std::string date_pattern = "%Y-%m-%d";

  /// Shot count actually used: zero_shot always renders none.
  int effective_shots() const { return variant == PromptVariant::zero_shot ? 0 : shots; }
};

/// A query quintuple with its object hidden. `uid` orders same-day history.
struct OpQuery {
  EntityId subject = 0;
  RelationId relation = 0;
  Day day = 0;
  std::string text;
  Uid uid = 0;
  std::optional<EntityId> true_object;

  static OpQuery from(const Quintuple& q);
};

inline constexpr std::string_view kMissingObject = "<MISSING OBJECT ENTITY>";

/// Picks in-context examples from a (day, uid)-sorted event list. Built once
/// per dataset; select() is a pure function of the query and config.
class HistorySelector {
 public:
  /// `sorted` must stay alive and be ordered by (day, uid).
  explicit HistorySelector(std::span<const Quintuple> sorted);

  std::vector<Quintuple> select(const OpQuery& query, const PromptConfig& cfg) const;

 private:
  std::span<const Quintuple> events_;
  std::unordered_map<EntityId, std::vector<std::size_t>> by_subject_;
};

std::vector<Quintuple> select_history_examples(const OpQuery& query, std::span<const Quintuple> sorted,
                                               const PromptConfig& cfg);

/// Object-prediction prompt for the few_shot, zero_shot and no_text variants.
std::string render_op_prompt(const OpQuery& query, std::span<const Quintuple> examples,
                             const PromptConfig& cfg, const Vocabulary& vocab, const Calendar& calendar);

/// Five-line "Subject: ...;" rendering of a single quintuple.
std::string render_simple_prompt(const Quintuple& q, const Vocabulary& vocab, const Calendar& calendar,
                                 const PromptConfig& cfg = {});

}  // namespace leap
