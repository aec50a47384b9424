#pragma once

#include <chrono>
#include <cstdint>
#include <iosfwd>
#include <memory>
#include <mutex>
#include <optional>
#include <span>
#include <string>
#include <string_view>
#include <vector>

#include "leap/events.hpp"
#include "leap/metrics.hpp"
#include "leap/prompting.hpp"

namespace leap::op2 {

struct GenerationTask {
  Uid uid = 0;
  std::string prompt;
  std::string reference;  // true object string
  PromptVariant variant = PromptVariant::few_shot;
  std::string query_text;
  std::vector<Quintuple> examples;  // in-context examples, oldest first
};

enum class GenerationSource { bridge, baseline };
std::string_view to_string(GenerationSource source);

struct GenerationResult {
  Uid uid = 0;
  std::string hypothesis;
  std::chrono::microseconds latency{0};
  GenerationSource source = GenerationSource::baseline;
  bool failed = false;
  std::string error;
};

/// One task per quintuple of `part`; examples come from `history`, which must
/// be sorted by (day, uid) and outlive the call.
std::vector<GenerationTask> build_tasks(std::span<const Quintuple> part, std::span<const Quintuple> history,
                                        const PromptConfig& cfg, const Vocabulary& vocab,
                                        const Calendar& calendar);

/// Object of the example whose text has the highest unigram F1 against the
/// query text; ties go to the most recent example. Throws on an empty list.
GenerationResult baseline_nearest_example(const GenerationTask& task, std::span<const Quintuple> examples,
                                          const Vocabulary& vocab);

/// Implementations must be callable from several threads at once.
class Generator {
 public:
  virtual ~Generator() = default;
  virtual GenerationSource source() const = 0;
  /// Raw generated text. Throws std::runtime_error on transport failure.
  virtual std::string generate(const GenerationTask& task) = 0;
};

class BaselineGenerator final : public Generator {
 public:
  explicit BaselineGenerator(const Vocabulary& vocab) : vocab_(&vocab) {}
  GenerationSource source() const override { return GenerationSource::baseline; }
  std::string generate(const GenerationTask& task) override;

 private:
  const Vocabulary* vocab_;
};

// ---- bridge protocol -----------------------------------------------------

struct BridgeAddress {
  std::string host;
  int port = 0;
};

inline constexpr const char* kBridgeEnvVar = "LEAP_BRIDGE_ADDR";

/// Accepts "host:port" or "http://host:port".
std::optional<BridgeAddress> parse_bridge_address(std::string_view text);
std::optional<BridgeAddress> bridge_address_from_env();

std::string encode_generate_request(Uid id, std::string_view prompt);
std::string encode_ping();

struct BridgeReply {
  std::optional<Uid> id;
  std::string text;
  std::optional<std::string> error;
  bool ok = false;  // set by ping replies
};

/// Parses one response object. Throws std::runtime_error on malformed JSON.
BridgeReply decode_reply(std::string_view json);

/// HTTP transport: POST /generate with the request object as body.
class HttpBridgeClient final : public Generator {
 public:
  explicit HttpBridgeClient(BridgeAddress address, std::chrono::seconds timeout = std::chrono::seconds(120));
  GenerationSource source() const override { return GenerationSource::bridge; }
  std::string generate(const GenerationTask& task) override;
  bool ping();

 private:
  std::string post(const std::string& body);

  BridgeAddress address_;
  std::chrono::seconds timeout_;
};

/// Newline-delimited JSON over a pair of streams (e.g. a child's pipes).
/// Requests are serialised; one reply line is read per request.
class StreamBridgeClient final : public Generator {
 public:
  StreamBridgeClient(std::istream& replies, std::ostream& requests) : in_(&replies), out_(&requests) {}
  GenerationSource source() const override { return GenerationSource::bridge; }
  std::string generate(const GenerationTask& task) override;
  bool ping();

 private:
  std::string round_trip(const std::string& line);

  std::istream* in_;
  std::ostream* out_;
  std::mutex mutex_;
};

// ---- running and scoring -------------------------------------------------

inline constexpr std::string_view kAnswerEcho = "The correct object entity is:";

/// Trims, keeps the first line, and drops a leading answer echo.
std::string postprocess(std::string_view raw);

struct RunOptions {
  unsigned parallelism = 1;
};

/// One result per task in task order. Transport failures mark the task
/// failed and the run continues.
std::vector<GenerationResult> run_generation(std::span<const GenerationTask> tasks, Generator& generator,
                                             const RunOptions& options = {});

struct GenerationReport {
  metrics::RougeTriple macro;
  std::vector<metrics::RougeTriple> per_task;  // task order
  std::size_t tasks = 0;
  std::size_t failed = 0;
};

/// Macro-averaged ROUGE with failures scored 0. Throws std::invalid_argument
/// unless every task uid appears exactly once among the results.
GenerationReport evaluate_generation(std::span<const GenerationResult> results,
                                     std::span<const GenerationTask> tasks);

}  // namespace leap::op2
