#pragma once

#include <cstdint>
#include <iosfwd>
#include <optional>
#include <span>
#include <stdexcept>
#include <string>
#include <string_view>
#include <utility>
#include <vector>

#include "leap/embedding.hpp"
#include "leap/events.hpp"
#include "leap/mef.hpp"
#include "leap/op_ranking.hpp"
#include "leap/prompting.hpp"

namespace leap::cli {

enum class Task { none, op1, op2, mef };

std::optional<Task> task_from_string(std::string_view name);
std::string_view to_string(Task task);

struct EmbedSettings {
  std::string provider = "encoder";  // encoder | store
  std::string store_path;
  std::uint32_t dim = 64;
  EmbedInput input = EmbedInput::simple_prompt;
};

struct RunConfig {
  std::string data_path;
  DatasetFormat format = DatasetFormat::tsv;
  SplitRatios ratios;
  std::string valid_start;  // ISO dates; both set means explicit boundaries
  std::string test_start;
  std::uint64_t seed = 0;
  Task task = Task::none;
  std::string out_dir = "leap_out";
  unsigned threads = 1;
  std::string checkpoint;  // defaults to <out>/<task>.ckpt
  std::string eval_part = "test";

  EmbedSettings embed;
  op1::Op1Config op1;
  bool op1_use_text = true;
  std::size_t op1_topk = 10;
  PromptConfig prompt;
  std::string generator = "baseline";  // baseline | bridge
  unsigned parallelism = 1;
  mef::MefConfig mef;
};

/// Bad flags, bad config values, missing paths. Exit status 2.
class UsageError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

struct KeySpec {
  std::string key;                   // dotted config key
  std::vector<std::string> aliases;  // extra long flags without dashes
  Task scope = Task::none;           // task the key belongs to, none = shared
  std::string help;
};

const std::vector<KeySpec>& config_keys();

/// The long flag for a key: dots become dashes ("mef.window" -> "mef-window").
std::string flag_for(std::string_view key);

void set_key(RunConfig& cfg, std::string_view key, std::string_view value);
std::string get_key(const RunConfig& cfg, std::string_view key);

/// Every key as "key=value\n" in table order.
std::string canonical_config(const RunConfig& cfg);
std::uint64_t config_hash(const RunConfig& cfg);

/// Flat "key = value" lines; "[section]" prefixes later keys with "section.".
/// '#' and ';' start comments; values may be double-quoted.
std::vector<std::pair<std::string, std::string>> parse_config_text(std::string_view text);
void apply_config_file(RunConfig& cfg, const std::string& path);

struct Invocation {
  std::string command;
  RunConfig config;
  std::vector<std::string> flags_given;  // keys set on the command line
};

/// Task implied by a subcommand, or Task::none for the shared ones.
Task task_of_command(std::string_view command);

/// Config file first, then flags. Throws UsageError for conflicting task
/// options, unknown flags and missing required paths.
Invocation parse_cli(int argc, const char* const* argv);

int run(const Invocation& inv, std::ostream& out, std::ostream& err);

/// parse_cli + run with exit codes: 0 ok, 1 stage failure, 2 usage error.
int main_entry(int argc, const char* const* argv, std::ostream& out, std::ostream& err);

}  // namespace leap::cli
