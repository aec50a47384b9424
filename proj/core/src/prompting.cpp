#include "leap/prompting.hpp"

#include <algorithm>
#include <stdexcept>

namespace leap {

namespace {

constexpr std::string_view kPreamble =
    "I ask you to perform an object prediction task after I provide you with five examples. "
    "Each example is a knowledge quintuple containing two entities, a relation, a timestamp, "
    "and a brief text summary. Each knowledge quintuple is strictly formatted as (subject entity, "
    "relation, object entity, timestamp, text summary). For the object prediction task, you should "
    "predict the missing object entity based on the other four available elements.";
constexpr std::string_view kExamplesAnnouncement = "Now I give you five examples.";
constexpr std::string_view kQueryAnnouncement = "Now I give you a query:";
constexpr std::string_view kClosing =
    "Please predict the missing object entity. You are allowed to predict new object entity which "
    "you have never seen in examples. The correct object entity is:";

bool earlier(const Quintuple& q, Day day, Uid uid) {
  return q.day != day ? q.day < day : q.uid < uid;
}

std::string tuple_line(EntityId subject, RelationId relation, Day day, const std::string& text,
                       bool with_text, const PromptConfig& cfg, const Vocabulary& vocab,
                       const Calendar& calendar) {
  std::string line = "(";
  line += vocab.entity(subject);
  line += ", ";
  line += vocab.relation(relation);
  line += ", ";
  line += kMissingObject;
  line += ", ";
  line += calendar.format(day, cfg.date_pattern);
  if (with_text) {
    line += ", ";
    line += text;
  }
  line += ")";
  return line;
}

}  // namespace

std::optional<PromptVariant> prompt_variant_from_string(std::string_view name) {
  if (name == "few_shot") return PromptVariant::few_shot;
  if (name == "zero_shot") return PromptVariant::zero_shot;
  if (name == "no_text") return PromptVariant::no_text;
  if (name == "simple") return PromptVariant::simple;
  return std::nullopt;
}

std::string_view to_string(PromptVariant variant) {
  switch (variant) {
    case PromptVariant::few_shot: return "few_shot";
    case PromptVariant::zero_shot: return "zero_shot";
    case PromptVariant::no_text: return "no_text";
    case PromptVariant::simple: return "simple";
  }
  return "unknown";
}

std::optional<HistoryScope> history_scope_from_string(std::string_view name) {
  if (name == "same_subject_first") return HistoryScope::same_subject_first;
  if (name == "global_recent") return HistoryScope::global_recent;
  return std::nullopt;
}

std::string_view to_string(HistoryScope scope) {
  return scope == HistoryScope::same_subject_first ? "same_subject_first" : "global_recent";
}

OpQuery OpQuery::from(const Quintuple& q) {
  return OpQuery{q.subject, q.relation, q.day, q.text, q.uid, q.object};
}

HistorySelector::HistorySelector(std::span<const Quintuple> sorted) : events_(sorted) {
  for (std::size_t i = 0; i < events_.size(); ++i) by_subject_[events_[i].subject].push_back(i);
}

std::vector<Quintuple> HistorySelector::select(const OpQuery& query, const PromptConfig& cfg) const {
  const auto shots = static_cast<std::size_t>(std::max(0, cfg.effective_shots()));
  if (shots == 0) return {};

  const auto cutoff = static_cast<std::size_t>(
      std::partition_point(events_.begin(), events_.end(),
                           [&](const Quintuple& q) { return earlier(q, query.day, query.uid); }) -
      events_.begin());

  std::vector<std::size_t> chosen;
  if (cfg.history_scope == HistoryScope::same_subject_first) {
    if (auto it = by_subject_.find(query.subject); it != by_subject_.end()) {
      const auto& positions = it->second;
      const auto end = std::lower_bound(positions.begin(), positions.end(), cutoff);
      const auto available = static_cast<std::size_t>(end - positions.begin());
      const auto take = std::min(shots, available);
      chosen.assign(end - static_cast<std::ptrdiff_t>(take), end);
    }
  }
  // Pad with the globally most recent events not already chosen. Under
  // same_subject_first every eligible same-subject event is already in
  // `chosen` whenever padding is needed.
  const bool skip_subject = cfg.history_scope == HistoryScope::same_subject_first;
  for (std::size_t pos = cutoff; pos > 0 && chosen.size() < shots; --pos) {
    const auto& q = events_[pos - 1];
    if (skip_subject && q.subject == query.subject) continue;
    chosen.push_back(pos - 1);
  }
  std::sort(chosen.begin(), chosen.end());

  std::vector<Quintuple> out;
  out.reserve(chosen.size());
  for (auto pos : chosen) out.push_back(events_[pos]);
  return out;
}

std::vector<Quintuple> select_history_examples(const OpQuery& query, std::span<const Quintuple> sorted,
                                               const PromptConfig& cfg) {
  return HistorySelector(sorted).select(query, cfg);
}

std::string render_op_prompt(const OpQuery& query, std::span<const Quintuple> examples,
                             const PromptConfig& cfg, const Vocabulary& vocab, const Calendar& calendar) {
  if (cfg.variant == PromptVariant::simple) {
    throw std::invalid_argument("render_op_prompt: the simple variant has no object-prediction form");
  }
  if (examples.size() > static_cast<std::size_t>(std::max(0, cfg.effective_shots()))) {
    throw std::invalid_argument("render_op_prompt: " + std::to_string(examples.size()) +
                                " examples exceed the configured shot count");
  }
  const bool with_text = cfg.variant != PromptVariant::no_text;

  std::string out(kPreamble);
  out += '\n';
  if (cfg.variant != PromptVariant::zero_shot) {
    out += kExamplesAnnouncement;
    out += '\n';
  }
  out += '\n';
  for (std::size_t k = 0; k < examples.size(); ++k) {
    const auto& ex = examples[k];
    out += "## Example ";
    out += std::to_string(k + 1);
    out += '\n';
    out += tuple_line(ex.subject, ex.relation, ex.day, ex.text, with_text, cfg, vocab, calendar);
    out += '\n';
    out += "The ";
    out += kMissingObject;
    out += " is: ";
    out += vocab.entity(ex.object);
    out += "\n\n";
  }
  out += kQueryAnnouncement;
  out += '\n';
  out += tuple_line(query.subject, query.relation, query.day, query.text, with_text, cfg, vocab, calendar);
  out += '\n';
  out += kClosing;
  return out;
}

std::string render_simple_prompt(const Quintuple& q, const Vocabulary& vocab, const Calendar& calendar,
                                 const PromptConfig& cfg) {
  std::string out = "Subject: ";
  out += vocab.entity(q.subject);
  out += ";\nRelation: ";
  out += vocab.relation(q.relation);
  out += ";\nObject: ";
  out += vocab.entity(q.object);
  out += ";\nTimestamp: ";
  out += calendar.format(q.day, cfg.date_pattern);
  out += ";\nText Summary: ";
  out += q.text;
  return out;
}

}  // namespace leap
