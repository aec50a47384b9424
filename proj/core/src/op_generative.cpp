#include "leap/op_generative.hpp"

#include <algorithm>
#include <atomic>
#include <cstdlib>
#include <istream>
#include <map>
#include <ostream>
#include <stdexcept>
#include <thread>

#include "httplib.h"
#include "json.hpp"

namespace leap::op2 {

namespace {

std::string_view trim(std::string_view s) {
  const auto ws = " \t\r\n\f\v";
  const auto begin = s.find_first_not_of(ws);
  if (begin == std::string_view::npos) return {};
  const auto end = s.find_last_not_of(ws);
  return s.substr(begin, end - begin + 1);
}

bool later(const Quintuple& a, const Quintuple& b) {
  return a.day != b.day ? a.day > b.day : a.uid > b.uid;
}

}  // namespace

std::string_view to_string(GenerationSource source) {
  return source == GenerationSource::bridge ? "bridge" : "baseline";
}

std::vector<GenerationTask> build_tasks(std::span<const Quintuple> part, std::span<const Quintuple> history,
                                        const PromptConfig& cfg, const Vocabulary& vocab,
                                        const Calendar& calendar) {
  const HistorySelector selector(history);
  std::vector<GenerationTask> tasks;
  tasks.reserve(part.size());
  for (const auto& q : part) {
    const auto query = OpQuery::from(q);
    GenerationTask task;
    task.uid = q.uid;
    task.examples = selector.select(query, cfg);
    task.prompt = render_op_prompt(query, task.examples, cfg, vocab, calendar);
    task.reference = vocab.entity(q.object);
    task.variant = cfg.variant;
    task.query_text = q.text;
    tasks.push_back(std::move(task));
  }
  return tasks;
}

GenerationResult baseline_nearest_example(const GenerationTask& task, std::span<const Quintuple> examples,
                                          const Vocabulary& vocab) {
  if (examples.empty()) throw std::invalid_argument("baseline_nearest_example: no examples for uid " +
                                                    std::to_string(task.uid));
  const auto start = std::chrono::steady_clock::now();
  const auto query_tokens = metrics::rouge_tokenize(task.query_text);
  const Quintuple* best = nullptr;
  double best_score = -1.0;
  for (const auto& ex : examples) {
    const double score = metrics::rouge_n(query_tokens, metrics::rouge_tokenize(ex.text), 1);
    if (!best || score > best_score || (score == best_score && later(ex, *best))) {
      best = &ex;
      best_score = score;
    }
  }
  GenerationResult r;
  r.uid = task.uid;
  r.hypothesis = vocab.entity(best->object);
  r.source = GenerationSource::baseline;
  r.latency = std::chrono::duration_cast<std::chrono::microseconds>(std::chrono::steady_clock::now() - start);
  return r;
}

std::string BaselineGenerator::generate(const GenerationTask& task) {
  return baseline_nearest_example(task, task.examples, *vocab_).hypothesis;
}

// ---- bridge protocol -----------------------------------------------------

std::optional<BridgeAddress> parse_bridge_address(std::string_view text) {
  text = trim(text);
  if (text.starts_with("http://")) text.remove_prefix(7);
  while (text.ends_with('/')) text.remove_suffix(1);
  const auto colon = text.rfind(':');
  if (colon == std::string_view::npos || colon == 0 || colon + 1 == text.size()) return std::nullopt;
  int port = 0;
  for (char c : text.substr(colon + 1)) {
    if (c < '0' || c > '9') return std::nullopt;
    port = port * 10 + (c - '0');
    if (port > 65535) return std::nullopt;
  }
  if (port == 0) return std::nullopt;
  return BridgeAddress{std::string(text.substr(0, colon)), port};
}

std::optional<BridgeAddress> bridge_address_from_env() {
  const char* value = std::getenv(kBridgeEnvVar);
  if (!value || !*value) return std::nullopt;
  return parse_bridge_address(value);
}

std::string encode_generate_request(Uid id, std::string_view prompt) {
  nlohmann::ordered_json j;
  j["id"] = id;
  j["prompt"] = std::string(prompt);
  return j.dump();
}

std::string encode_ping() { return R"({"op":"ping"})"; }

BridgeReply decode_reply(std::string_view text) {
  nlohmann::json j;
  try {
    j = nlohmann::json::parse(text);
  } catch (const nlohmann::json::exception& e) {
    throw std::runtime_error(std::string("bridge reply is not valid JSON: ") + e.what());
  }
  if (!j.is_object()) throw std::runtime_error("bridge reply is not a JSON object");
  BridgeReply reply;
  if (auto it = j.find("id"); it != j.end() && it->is_number_unsigned()) reply.id = it->get<Uid>();
  if (auto it = j.find("text"); it != j.end() && it->is_string()) reply.text = it->get<std::string>();
  if (auto it = j.find("error"); it != j.end()) reply.error = it->is_string() ? it->get<std::string>() : it->dump();
  if (auto it = j.find("ok"); it != j.end() && it->is_boolean()) reply.ok = it->get<bool>();
  return reply;
}

namespace {

std::string unwrap_generation(const BridgeReply& reply, Uid expected) {
  if (reply.error) throw std::runtime_error("bridge error for uid " + std::to_string(expected) + ": " + *reply.error);
  if (reply.id != expected) throw std::runtime_error("bridge replied with a different id for uid " + std::to_string(expected));
  return reply.text;
}

}  // namespace

HttpBridgeClient::HttpBridgeClient(BridgeAddress address, std::chrono::seconds timeout)
    : address_(std::move(address)), timeout_(timeout) {}

std::string HttpBridgeClient::post(const std::string& body) {
  httplib::Client client(address_.host, address_.port);
  client.set_connection_timeout(timeout_);
  client.set_read_timeout(timeout_);
  client.set_write_timeout(timeout_);
  auto res = client.Post("/generate", body, "application/json");
  if (!res) throw std::runtime_error("bridge transport failure: " + httplib::to_string(res.error()));
  if (res->status != 200) throw std::runtime_error("bridge returned HTTP " + std::to_string(res->status));
  return res->body;
}

std::string HttpBridgeClient::generate(const GenerationTask& task) {
  return unwrap_generation(decode_reply(post(encode_generate_request(task.uid, task.prompt))), task.uid);
}

bool HttpBridgeClient::ping() {
  try {
    return decode_reply(post(encode_ping())).ok;
  } catch (const std::runtime_error&) {
    return false;
  }
}

std::string StreamBridgeClient::round_trip(const std::string& line) {
  std::lock_guard lock(mutex_);
  *out_ << line << '\n';
  out_->flush();
  if (!*out_) throw std::runtime_error("bridge stream closed for writing");
  std::string reply;
  if (!std::getline(*in_, reply)) throw std::runtime_error("bridge stream closed before a reply");
  return reply;
}

std::string StreamBridgeClient::generate(const GenerationTask& task) {
  return unwrap_generation(decode_reply(round_trip(encode_generate_request(task.uid, task.prompt))), task.uid);
}

bool StreamBridgeClient::ping() {
  try {
    return decode_reply(round_trip(encode_ping())).ok;
  } catch (const std::runtime_error&) {
    return false;
  }
}

// ---- running and scoring -------------------------------------------------

std::string postprocess(std::string_view raw) {
  auto text = trim(raw);
  text = trim(text.substr(0, text.find('\n')));
  if (text.starts_with(kAnswerEcho)) text = trim(text.substr(kAnswerEcho.size()));
  return std::string(text);
}

std::vector<GenerationResult> run_generation(std::span<const GenerationTask> tasks, Generator& generator,
                                             const RunOptions& options) {
  std::vector<GenerationResult> results(tasks.size());
  auto run_one = [&](std::size_t i) {
    auto& r = results[i];
    r.uid = tasks[i].uid;
    r.source = generator.source();
    const auto start = std::chrono::steady_clock::now();
    try {
      r.hypothesis = postprocess(generator.generate(tasks[i]));
    } catch (const std::exception& e) {
      r.failed = true;
      r.error = e.what();
    }
    r.latency = std::chrono::duration_cast<std::chrono::microseconds>(std::chrono::steady_clock::now() - start);
  };

  const unsigned workers = std::max(1u, std::min<unsigned>(options.parallelism, static_cast<unsigned>(tasks.size())));
  if (workers <= 1) {
    for (std::size_t i = 0; i < tasks.size(); ++i) run_one(i);
    return results;
  }
  std::atomic<std::size_t> next{0};
  {
    std::vector<std::jthread> pool;
    for (unsigned w = 0; w < workers; ++w) {
      pool.emplace_back([&] {
        for (std::size_t i = next++; i < tasks.size(); i = next++) run_one(i);
      });
    }
  }
  return results;
}

GenerationReport evaluate_generation(std::span<const GenerationResult> results,
                                     std::span<const GenerationTask> tasks) {
  if (results.size() != tasks.size()) {
    throw std::invalid_argument("evaluate_generation: " + std::to_string(results.size()) + " results for " +
                                std::to_string(tasks.size()) + " tasks");
  }
  std::map<Uid, const GenerationResult*> by_uid;
  for (const auto& r : results) {
    if (!by_uid.emplace(r.uid, &r).second) {
      throw std::invalid_argument("evaluate_generation: duplicate result uid " + std::to_string(r.uid));
    }
  }
  GenerationReport report;
  report.tasks = tasks.size();
  double r1 = 0.0, r2 = 0.0, rl = 0.0;
  for (const auto& t : tasks) {
    const auto it = by_uid.find(t.uid);
    if (it == by_uid.end()) throw std::invalid_argument("evaluate_generation: no result for uid " + std::to_string(t.uid));
    metrics::RougeTriple score;
    if (it->second->failed) {
      ++report.failed;
    } else {
      score = metrics::rouge(t.reference, it->second->hypothesis);
    }
    r1 += score.r1;
    r2 += score.r2;
    rl += score.rl;
    report.per_task.push_back(score);
  }
  if (!tasks.empty()) {
    const auto n = static_cast<double>(tasks.size());
    report.macro = {r1 / n, r2 / n, rl / n};
  }
  return report;
}

}  // namespace leap::op2
