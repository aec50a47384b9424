#include "cli.hpp"

#include <charconv>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <functional>
#include <iostream>
#include <map>
#include <sstream>

#include "CLI11.hpp"
#include "json.hpp"
#include "leap/hashing.hpp"
#include "leap/metrics.hpp"
#include "leap/nn.hpp"
#include "leap/op_generative.hpp"
#include "leap/report.hpp"

namespace leap::cli {

namespace fs = std::filesystem;
using ojson = nlohmann::ordered_json;

namespace {

constexpr const char* kVersion = "0.1.0";

// ---- value codecs --------------------------------------------------------

template <typename T>
T parse_number(std::string_view key, std::string_view text) {
  T value{};
  const auto* end = text.data() + text.size();
  const auto [ptr, ec] = std::from_chars(text.data(), end, value);
  if (ec != std::errc() || ptr != end) {
    throw UsageError("invalid value '" + std::string(text) + "' for " + std::string(key));
  }
  return value;
}

bool parse_bool(std::string_view key, std::string_view text) {
  if (text == "true" || text == "1" || text == "yes" || text == "on") return true;
  if (text == "false" || text == "0" || text == "no" || text == "off") return false;
  throw UsageError("invalid boolean '" + std::string(text) + "' for " + std::string(key));
}

std::string fmt_double(double v) {
  char buf[64];
  const auto res = std::to_chars(buf, buf + sizeof buf, v);
  return std::string(buf, res.ptr);
}

std::string hex64(std::uint64_t v) {
  char buf[24];
  std::snprintf(buf, sizeof buf, "%016llx", static_cast<unsigned long long>(v));
  return buf;
}

SplitRatios parse_ratios(std::string_view key, std::string_view text) {
  std::vector<double> parts;
  std::size_t start = 0;
  while (true) {
    const auto comma = text.find(',', start);
    parts.push_back(parse_number<double>(key, text.substr(start, comma - start)));
    if (comma == std::string_view::npos) break;
    start = comma + 1;
  }
  if (parts.size() != 3) throw UsageError(std::string(key) + " needs three comma-separated numbers");
  for (double p : parts) {
    if (!(p > 0.0)) throw UsageError(std::string(key) + " entries must be positive");
  }
  return {parts[0], parts[1], parts[2]};
}

std::string trim(std::string_view s) {
  const auto ws = " \t\r\n";
  const auto b = s.find_first_not_of(ws);
  if (b == std::string_view::npos) return {};
  return std::string(s.substr(b, s.find_last_not_of(ws) - b + 1));
}

// ---- key table -----------------------------------------------------------

struct Binding {
  KeySpec spec;
  std::function<void(RunConfig&, std::string_view)> set;
  std::function<std::string(const RunConfig&)> get;
};

template <typename T, typename Field>
Binding number_key(std::string key, std::vector<std::string> aliases, Task scope, std::string help, Field field) {
  Binding b{{key, std::move(aliases), scope, std::move(help)}, {}, {}};
  b.set = [key, field](RunConfig& c, std::string_view v) { field(c) = parse_number<T>(key, v); };
  b.get = [field](const RunConfig& c) {
    if constexpr (std::is_floating_point_v<T>) {
      return fmt_double(field(const_cast<RunConfig&>(c)));
    } else {
      return std::to_string(field(const_cast<RunConfig&>(c)));
    }
  };
  return b;
}

template <typename Field>
Binding bool_key(std::string key, std::vector<std::string> aliases, Task scope, std::string help, Field field) {
  Binding b{{key, std::move(aliases), scope, std::move(help)}, {}, {}};
  b.set = [key, field](RunConfig& c, std::string_view v) { field(c) = parse_bool(key, v); };
  b.get = [field](const RunConfig& c) { return std::string(field(const_cast<RunConfig&>(c)) ? "true" : "false"); };
  return b;
}

template <typename Field>
Binding string_key(std::string key, std::vector<std::string> aliases, Task scope, std::string help, Field field) {
  Binding b{{key, std::move(aliases), scope, std::move(help)}, {}, {}};
  b.set = [field](RunConfig& c, std::string_view v) { field(c) = std::string(v); };
  b.get = [field](const RunConfig& c) { return field(const_cast<RunConfig&>(c)); };
  return b;
}

template <typename E, typename Field, typename Parse>
Binding enum_key(std::string key, std::vector<std::string> aliases, Task scope, std::string help, Field field,
                 Parse parse) {
  Binding b{{key, std::move(aliases), scope, std::move(help)}, {}, {}};
  b.set = [key, field, parse](RunConfig& c, std::string_view v) {
    const std::optional<E> parsed = parse(v);
    if (!parsed) throw UsageError("invalid value '" + std::string(v) + "' for " + key);
    field(c) = *parsed;
  };
  b.get = [field](const RunConfig& c) { return std::string(to_string(field(const_cast<RunConfig&>(c)))); };
  return b;
}

std::optional<std::string> one_of(std::string_view v, std::initializer_list<std::string_view> allowed) {
  for (auto a : allowed) {
    if (a == v) return std::string(v);
  }
  return std::nullopt;
}

const std::vector<Binding>& bindings() {
  using T = Task;
  static const std::vector<Binding> table = [] {
    std::vector<Binding> b;
    b.push_back(string_key("data.path", {"data"}, T::none, "dataset file", [](RunConfig& c) -> auto& { return c.data_path; }));
    b.push_back(enum_key<DatasetFormat>("data.format", {"format"}, T::none, "tsv | jsonl",
                                        [](RunConfig& c) -> auto& { return c.format; }, dataset_format_from_string));
    {
      Binding r{{"split.ratios", {"ratios"}, T::none, "train,valid,test day ratios"}, {}, {}};
      r.set = [](RunConfig& c, std::string_view v) { c.ratios = parse_ratios("split.ratios", v); };
      r.get = [](const RunConfig& c) {
        return fmt_double(c.ratios.train) + "," + fmt_double(c.ratios.valid) + "," + fmt_double(c.ratios.test);
      };
      b.push_back(std::move(r));
    }
    b.push_back(string_key("split.valid_start", {}, T::none, "first validation date (YYYY-MM-DD)",
                           [](RunConfig& c) -> auto& { return c.valid_start; }));
    b.push_back(string_key("split.test_start", {}, T::none, "first test date (YYYY-MM-DD)",
                           [](RunConfig& c) -> auto& { return c.test_start; }));
    b.push_back(number_key<std::uint64_t>("run.seed", {"seed"}, T::none, "run seed", [](RunConfig& c) -> auto& { return c.seed; }));
    b.push_back(enum_key<Task>("run.task", {"task"}, T::none, "op1 | op2 | mef",
                               [](RunConfig& c) -> auto& { return c.task; }, task_from_string));
    b.push_back(string_key("run.out", {"out"}, T::none, "output directory", [](RunConfig& c) -> auto& { return c.out_dir; }));
    b.push_back(number_key<unsigned>("run.threads", {"threads"}, T::none, "worker threads for embedding",
                                     [](RunConfig& c) -> auto& { return c.threads; }));
    b.push_back(string_key("run.checkpoint", {"checkpoint"}, T::none, "checkpoint path",
                           [](RunConfig& c) -> auto& { return c.checkpoint; }));
    {
      Binding p{{"eval.part", {"part"}, T::none, "train | valid | test"}, {}, {}};
      p.set = [](RunConfig& c, std::string_view v) {
        auto parsed = one_of(v, {"train", "valid", "test"});
        if (!parsed) throw UsageError("invalid value '" + std::string(v) + "' for eval.part");
        c.eval_part = *parsed;
      };
      p.get = [](const RunConfig& c) { return c.eval_part; };
      b.push_back(std::move(p));
    }
    {
      Binding p{{"embed.provider", {}, T::none, "encoder | store"}, {}, {}};
      p.set = [](RunConfig& c, std::string_view v) {
        auto parsed = one_of(v, {"encoder", "store"});
        if (!parsed) throw UsageError("invalid value '" + std::string(v) + "' for embed.provider");
        c.embed.provider = *parsed;
      };
      p.get = [](const RunConfig& c) { return c.embed.provider; };
      b.push_back(std::move(p));
    }
    b.push_back(string_key("embed.store", {"store"}, T::none, "embedding store file",
                           [](RunConfig& c) -> auto& { return c.embed.store_path; }));
    b.push_back(number_key<std::uint32_t>("embed.dim", {}, T::none, "encoder output dim",
                                          [](RunConfig& c) -> auto& { return c.embed.dim; }));
    b.push_back(enum_key<EmbedInput>("embed.input", {}, T::none, "simple_prompt | text",
                                     [](RunConfig& c) -> auto& { return c.embed.input; }, embed_input_from_string));

    b.push_back(number_key<int>("op1.history_len", {"l1"}, T::op1, "history window days",
                                [](RunConfig& c) -> auto& { return c.op1.history_len; }));
    b.push_back(number_key<std::size_t>("op1.entity_dim", {}, T::op1, "entity embedding dim",
                                        [](RunConfig& c) -> auto& { return c.op1.entity_dim; }));
    b.push_back(number_key<int>("op1.rgcn_layers", {}, T::op1, "R-GCN layers", [](RunConfig& c) -> auto& { return c.op1.rgcn_layers; }));
    b.push_back(number_key<double>("op1.dropout", {}, T::op1, "R-GCN dropout", [](RunConfig& c) -> auto& { return c.op1.rgcn_dropout; }));
    b.push_back(number_key<std::size_t>("op1.conv_kernels", {}, T::op1, "ConvTransE kernels",
                                        [](RunConfig& c) -> auto& { return c.op1.conv_kernels; }));
    b.push_back(number_key<std::size_t>("op1.conv_width", {}, T::op1, "ConvTransE kernel width",
                                        [](RunConfig& c) -> auto& { return c.op1.conv_width; }));
    b.push_back(number_key<double>("op1.lr", {}, T::op1, "learning rate", [](RunConfig& c) -> auto& { return c.op1.lr; }));
    b.push_back(number_key<double>("op1.weight_decay", {}, T::op1, "weight decay", [](RunConfig& c) -> auto& { return c.op1.weight_decay; }));
    b.push_back(number_key<int>("op1.epochs", {}, T::op1, "max epochs", [](RunConfig& c) -> auto& { return c.op1.epochs; }));
    b.push_back(number_key<int>("op1.patience", {}, T::op1, "early-stopping patience", [](RunConfig& c) -> auto& { return c.op1.patience; }));
    b.push_back(number_key<double>("op1.grad_clip", {}, T::op1, "gradient norm clip", [](RunConfig& c) -> auto& { return c.op1.grad_clip; }));
    b.push_back(bool_key("op1.use_text", {}, T::op1, "feed text embeddings to the decoder",
                         [](RunConfig& c) -> auto& { return c.op1_use_text; }));
    b.push_back(number_key<std::size_t>("op1.topk", {}, T::op1, "candidates written per query",
                                        [](RunConfig& c) -> auto& { return c.op1_topk; }));

    b.push_back(enum_key<PromptVariant>("prompt.variant", {"variant"}, T::op2, "few_shot | zero_shot | no_text",
                                        [](RunConfig& c) -> auto& { return c.prompt.variant; }, prompt_variant_from_string));
    b.push_back(number_key<int>("prompt.shots", {"l2"}, T::op2, "in-context examples", [](RunConfig& c) -> auto& { return c.prompt.shots; }));
    b.push_back(enum_key<HistoryScope>("prompt.history_scope", {}, T::op2, "same_subject_first | global_recent",
                                       [](RunConfig& c) -> auto& { return c.prompt.history_scope; },
                                       history_scope_from_string));
    b.push_back(string_key("prompt.date_pattern", {}, T::none, "date rendering pattern",
                           [](RunConfig& c) -> auto& { return c.prompt.date_pattern; }));
    {
      Binding g{{"op2.generator", {"generator"}, T::op2, "baseline | bridge"}, {}, {}};
      g.set = [](RunConfig& c, std::string_view v) {
        auto parsed = one_of(v, {"baseline", "bridge"});
        if (!parsed) throw UsageError("invalid value '" + std::string(v) + "' for op2.generator");
        c.generator = *parsed;
      };
      g.get = [](const RunConfig& c) { return c.generator; };
      b.push_back(std::move(g));
    }
    b.push_back(number_key<unsigned>("op2.parallelism", {}, T::op2, "concurrent generation requests",
                                     [](RunConfig& c) -> auto& { return c.parallelism; }));

    b.push_back(number_key<int>("mef.window", {"l3"}, T::mef, "history window days", [](RunConfig& c) -> auto& { return c.mef.window; }));
    b.push_back(number_key<std::size_t>("mef.model_dim", {}, T::mef, "projection dim", [](RunConfig& c) -> auto& { return c.mef.model_dim; }));
    b.push_back(number_key<double>("mef.lr", {}, T::mef, "learning rate", [](RunConfig& c) -> auto& { return c.mef.lr; }));
    b.push_back(number_key<double>("mef.weight_decay", {}, T::mef, "weight decay", [](RunConfig& c) -> auto& { return c.mef.weight_decay; }));
    b.push_back(number_key<int>("mef.batch", {}, T::mef, "days per step", [](RunConfig& c) -> auto& { return c.mef.batch; }));
    b.push_back(number_key<double>("mef.grad_clip", {}, T::mef, "gradient norm clip", [](RunConfig& c) -> auto& { return c.mef.grad_clip; }));
    b.push_back(number_key<int>("mef.epochs", {}, T::mef, "max epochs", [](RunConfig& c) -> auto& { return c.mef.epochs; }));
    b.push_back(number_key<int>("mef.patience", {}, T::mef, "early-stopping patience", [](RunConfig& c) -> auto& { return c.mef.patience; }));
    b.push_back(number_key<double>("mef.threshold", {}, T::mef, "decision threshold", [](RunConfig& c) -> auto& { return c.mef.threshold; }));
    b.push_back(bool_key("mef.use_attention", {}, T::mef, "self-attention on (false = ablation)",
                         [](RunConfig& c) -> auto& { return c.mef.use_attention; }));
    b.push_back(bool_key("mef.per_day_mean", {}, T::mef, "mean of daily means",
                         [](RunConfig& c) -> auto& { return c.mef.per_day_mean; }));
    return b;
  }();
  return table;
}

const Binding& binding(std::string_view key) {
  for (const auto& b : bindings()) {
    if (b.spec.key == key) return b;
  }
  throw UsageError("unknown config key '" + std::string(key) + "'");
}

// ---- pipeline context ----------------------------------------------------

std::string read_file(const fs::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw std::runtime_error("cannot open " + path.string());
  std::ostringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

std::string file_checksum(const fs::path& path) { return "fnv1a64:" + hex64(fnv1a64(read_file(path))); }

class Pipeline {
 public:
  Pipeline(const Invocation& inv, std::ostream& out) : inv_(inv), cfg_(inv.config), out_(out), dir_(cfg_.out_dir) {
    manifest_["tool"] = "leap";
    manifest_["version"] = kVersion;
    manifest_["command"] = inv.command;
    manifest_["task"] = std::string(to_string(effective_task()));
    manifest_["seed"] = cfg_.seed;
    manifest_["config_hash"] = hex64(config_hash(cfg_));
    auto& config = manifest_["config"] = ojson::object();
    for (const auto& b : bindings()) config[b.spec.key] = b.get(cfg_);
    manifest_["inputs"] = ojson::object();
    manifest_["artifacts"] = ojson::object();
    manifest_["stages"] = ojson::array();
  }

  Task effective_task() const {
    const Task implied = task_of_command(inv_.command);
    return implied != Task::none ? implied : cfg_.task;
  }

  void finish(bool ok, const std::string& error = {}) {
    manifest_["status"] = ok ? "complete" : "failed";
    if (!ok) {
      manifest_["error"] = error;
      manifest_["partial_artifacts"] = !manifest_["artifacts"].empty();
    }
    fs::create_directories(dir_);
    std::ofstream f(dir_ / ("manifest." + inv_.command + ".json"), std::ios::binary);
    f << manifest_.dump(2) << "\n";
  }

  void stage(const std::string& name) { manifest_["stages"].push_back(name); }

  void input(const fs::path& path) { manifest_["inputs"][path.string()] = file_checksum(path); }

  fs::path artifact(const std::string& name, const std::string& content) {
    fs::create_directories(dir_);
    const auto path = dir_ / name;
    std::ofstream f(path, std::ios::binary);
    if (!f) throw std::runtime_error("cannot write " + path.string());
    f << content;
    f.close();
    manifest_["artifacts"][name] = "fnv1a64:" + hex64(fnv1a64(content));
    return path;
  }

  const Dataset& data() {
    if (!data_) {
      std::ifstream in(cfg_.data_path, std::ios::binary);
      if (!in) throw std::runtime_error("cannot open dataset " + cfg_.data_path);
      data_ = parse_dataset(in, cfg_.format);
      input(cfg_.data_path);
      stage("ingest");
    }
    return *data_;
  }

  const DatasetSplit& split() {
    if (!split_) {
      const auto& d = data();
      if (!cfg_.valid_start.empty() || !cfg_.test_start.empty()) {
        const auto v = parse_iso_date(cfg_.valid_start);
        const auto t = parse_iso_date(cfg_.test_start);
        if (!v || !t) throw std::invalid_argument("split.valid_start and split.test_start must both be YYYY-MM-DD dates");
        split_ = split_at_days(d.events, d.calendar.day_of(*v), d.calendar.day_of(*t));
      } else {
        split_ = chronological_split(d.events, cfg_.ratios);
      }
      stage("split");
    }
    return *split_;
  }

  std::span<const Quintuple> eval_part() {
    const auto& s = split();
    if (cfg_.eval_part == "train") return s.train;
    if (cfg_.eval_part == "valid") return s.valid;
    return s.test;
  }

  const std::vector<Quintuple>& history() {
    if (!history_) history_ = sorted_by_time(data().events);
    return *history_;
  }

  const EmbeddingStore& store() {
    if (!store_) {
      const auto& d = data();
      if (cfg_.embed.provider == "store") {
        const auto loaded = read_store_file(cfg_.embed.store_path);
        input(cfg_.embed.store_path);
        store_ = embed_all(d.events, StoreProvider{&loaded});
      } else {
        EmbedContext ctx{&d.vocab, &d.calendar, cfg_.prompt, cfg_.threads};
        store_ = embed_all(d.events, EncoderProvider{cfg_.embed.dim, cfg_.seed, cfg_.embed.input}, ctx);
      }
      stage("embed");
    }
    return *store_;
  }

  fs::path checkpoint_path(const std::string& task) const {
    return cfg_.checkpoint.empty() ? dir_ / (task + ".ckpt") : fs::path(cfg_.checkpoint);
  }

  const RunConfig& cfg() const { return cfg_; }
  std::ostream& out() { return out_; }
  const fs::path& dir() const { return dir_; }

 private:
  const Invocation& inv_;
  const RunConfig& cfg_;
  std::ostream& out_;
  fs::path dir_;
  ojson manifest_;
  std::optional<Dataset> data_;
  std::optional<DatasetSplit> split_;
  std::optional<std::vector<Quintuple>> history_;
  std::optional<EmbeddingStore> store_;
};

void emit_report(Pipeline& p, const Report& report) {
  p.artifact("report.json", report_to_json(report));
  const auto text = report_to_text(report);
  p.artifact("report.txt", text);
  p.out() << text;
}

// ---- OP1 -----------------------------------------------------------------

op1::Op1Config op1_config(Pipeline& p) {
  auto cfg = p.cfg().op1;
  cfg.text_dim = p.cfg().op1_use_text ? p.store().dim() : p.cfg().embed.dim;
  return cfg;
}

void train_op1_stage(Pipeline& p) {
  const auto cfg = op1_config(p);
  const auto& d = p.data();
  const EmbeddingStore* store = p.cfg().op1_use_text ? &p.store() : nullptr;
  auto result = op1::train_op1(p.split(), d.vocab.num_entities(), d.vocab.num_relations(), store, cfg, p.cfg().seed);
  p.stage("train");
  p.artifact("metrics.csv", op1::log_to_csv(result.log));
  std::ostringstream ckpt;
  const auto params = result.state.params();
  nn::save_checkpoint(ckpt, params);
  fs::create_directories(p.dir());
  const auto path = p.checkpoint_path("op1");
  std::ofstream(path, std::ios::binary) << ckpt.str();
  p.out() << "op1: trained " << result.epochs_run << " epochs, best epoch " << result.best_epoch << "\n";
}

void eval_op1_stage(Pipeline& p) {
  const auto cfg = op1_config(p);
  const auto& d = p.data();
  const auto path = p.checkpoint_path("op1");
  std::ifstream in(path, std::ios::binary);
  if (!in) throw std::runtime_error("missing checkpoint " + path.string());
  p.input(path);
  auto rng = nn::substream(p.cfg().seed, "init");
  op1::Op1State state(d.vocab.num_entities(), d.vocab.num_relations(), cfg, rng);
  auto params = state.params();
  nn::restore_params(nn::load_checkpoint(in), params);

  const EmbeddingStore* store = p.cfg().op1_use_text ? &p.store() : nullptr;
  const op1::DayIndex days(d.events);
  const auto part = p.eval_part();
  if (part.empty()) throw std::invalid_argument("evaluation part '" + p.cfg().eval_part + "' is empty");
  const auto eval = op1::evaluate_op1(state, part, days, store, cfg);
  p.stage("eval");

  const auto preds = op1::predict_topk(state, part, days, store, cfg, p.cfg().op1_topk, d.vocab);
  std::string csv = "uid,readout,ranked\n";
  for (const auto& pr : preds) {
    csv += std::to_string(pr.uid) + ",\"" + pr.readout + "\",";
    for (std::size_t i = 0; i < pr.ranked.size(); ++i) csv += (i ? " " : "") + std::to_string(pr.ranked[i]);
    csv += "\n";
  }
  p.artifact("predictions.csv", csv);

  Report report{"Object prediction (ranking)", {"Hits@1", "Hits@3", "Hits@10"},
                {{"LEAP_OP1 (" + p.cfg().eval_part + ")", {eval.hits.at(1), eval.hits.at(3), eval.hits.at(10)}}},
                {{"queries", std::to_string(eval.ranks.size())}, {"text", p.cfg().op1_use_text ? "on" : "off"}}};
  emit_report(p, report);
}

// ---- OP2 -----------------------------------------------------------------

std::vector<op2::GenerationTask> op2_tasks(Pipeline& p) {
  const auto& d = p.data();
  auto tasks = op2::build_tasks(p.eval_part(), p.history(), p.cfg().prompt, d.vocab, d.calendar);
  p.stage("prompts");
  return tasks;
}

void gen_op2_stage(Pipeline& p) {
  const auto tasks = op2_tasks(p);
  const auto& d = p.data();
  std::unique_ptr<op2::Generator> generator;
  if (p.cfg().generator == "bridge") {
    const auto addr = op2::bridge_address_from_env();
    if (!addr) throw std::runtime_error(std::string(op2::kBridgeEnvVar) + " is unset or not host:port");
    generator = std::make_unique<op2::HttpBridgeClient>(*addr);
  } else {
    generator = std::make_unique<op2::BaselineGenerator>(d.vocab);
  }
  const auto results = op2::run_generation(tasks, *generator, {p.cfg().parallelism});
  p.stage("generate");
  std::string lines;
  std::size_t failed = 0;
  for (const auto& r : results) {
    ojson j;
    j["id"] = r.uid;
    j["hypothesis"] = r.hypothesis;
    j["source"] = std::string(op2::to_string(r.source));
    j["failed"] = r.failed;
    if (r.failed) j["error"] = r.error;
    lines += j.dump() + "\n";
    failed += r.failed;
  }
  p.artifact("generations.jsonl", lines);
  p.out() << "op2: " << results.size() << " generations, " << failed << " failed\n";
}

void eval_op2_stage(Pipeline& p) {
  const auto tasks = op2_tasks(p);
  const auto path = p.dir() / "generations.jsonl";
  std::ifstream in(path, std::ios::binary);
  if (!in) throw std::runtime_error("missing " + path.string() + "; run gen-op2 first");
  std::vector<op2::GenerationResult> results;
  std::string line;
  std::string source = "baseline";
  while (std::getline(in, line)) {
    if (trim(line).empty()) continue;
    const auto j = nlohmann::json::parse(line);
    op2::GenerationResult r;
    r.uid = j.at("id").get<Uid>();
    r.hypothesis = j.at("hypothesis").get<std::string>();
    r.failed = j.value("failed", false);
    r.error = j.value("error", std::string());
    source = j.value("source", source);
    r.source = source == "bridge" ? op2::GenerationSource::bridge : op2::GenerationSource::baseline;
    results.push_back(std::move(r));
  }
  const auto report = op2::evaluate_generation(results, tasks);
  p.stage("eval");

  std::string csv = "uid,rouge1,rouge2,rougel\n";
  char buf[128];
  for (std::size_t i = 0; i < tasks.size(); ++i) {
    const auto& s = report.per_task[i];
    std::snprintf(buf, sizeof buf, "%llu,%.6f,%.6f,%.6f\n", static_cast<unsigned long long>(tasks[i].uid), s.r1, s.r2,
                  s.rl);
    csv += buf;
  }
  p.artifact("metrics.csv", csv);
  Report table{"Object prediction (generative)", {"ROUGE-1", "ROUGE-2", "ROUGE-L"},
               {{"LEAP_OP2 " + std::string(to_string(p.cfg().prompt.variant)) + " (" + source + ")",
                 {report.macro.r1, report.macro.r2, report.macro.rl}}},
               {{"averaging", "macro over queries"},
                {"queries", std::to_string(report.tasks)},
                {"failed", std::to_string(report.failed)}}};
  emit_report(p, table);
}

// ---- MEF -----------------------------------------------------------------

void train_mef_stage(Pipeline& p) {
  const auto data = mef::MefData::from(p.split(), p.store(), p.data().vocab.num_relations());
  auto result = mef::train_mef(p.split(), data, p.cfg().mef, p.cfg().seed);
  p.stage("train");
  p.artifact("metrics.csv", mef::log_to_csv(result.log));
  std::ostringstream ckpt;
  nn::save_checkpoint(ckpt, result.model.params());
  fs::create_directories(p.dir());
  std::ofstream(p.checkpoint_path("mef"), std::ios::binary) << ckpt.str();
  p.out() << "mef: " << result.variant << " trained " << result.epochs_run << " epochs, best epoch "
          << result.best_epoch << ", " << result.skipped_days << " training days skipped\n";
}

void eval_mef_stage(Pipeline& p) {
  const auto& cfg = p.cfg().mef;
  const auto data = mef::MefData::from(p.split(), p.store(), p.data().vocab.num_relations());
  const auto path = p.checkpoint_path("mef");
  std::ifstream in(path, std::ios::binary);
  if (!in) throw std::runtime_error("missing checkpoint " + path.string());
  p.input(path);
  auto rng = nn::substream(p.cfg().seed, "init");
  auto model = mef::MefModel::init(p.store().dim(), data.num_relations, cfg, rng);
  auto params = model.params();
  nn::restore_params(nn::load_checkpoint(in), params);

  const auto eval = mef::eval_mef(model, p.eval_part(), data, cfg);
  if (eval.predictions.empty()) throw std::invalid_argument("no evaluable days in part '" + p.cfg().eval_part + "'");
  p.stage("eval");
  p.artifact("predictions.csv", mef::predictions_to_csv(eval.predictions));
  Report report{"Multi-event forecasting", {"F1", "Recall", "Precision"},
                {{mef::variant_tag(cfg), {eval.prf.f1, eval.prf.recall, eval.prf.precision}}},
                {{"averaging", "micro over days x relations"},
                 {"days", std::to_string(eval.predictions.size())},
                 {"skipped_days", std::to_string(eval.skipped_days)}}};
  emit_report(p, report);
}

// ---- shared commands -----------------------------------------------------

void ingest_stage(Pipeline& p) {
  const auto& d = p.data();
  ojson j;
  j["entities"] = d.vocab.num_entities();
  j["relations"] = d.vocab.num_relations();
  j["quintuples"] = d.events.size();
  j["epoch"] = d.calendar.format(0);
  const auto text = j.dump(2) + "\n";
  p.artifact("ingest.json", text);
  p.out() << text;
}

void stats_stage(Pipeline& p) {
  const auto text = stats_to_json(dataset_stats(p.split(), p.data().vocab));
  p.artifact("stats.json", text + "\n");
  p.out() << text << "\n";
}

void split_stage(Pipeline& p) {
  const auto& s = p.split();
  const auto ext = std::string(".") + std::string(to_string(p.cfg().format));
  for (const auto& [name, part] : {std::pair{"train", &s.train}, std::pair{"valid", &s.valid}, std::pair{"test", &s.test}}) {
    std::ostringstream os;
    write_dataset(os, p.data(), *part, p.cfg().format);
    p.artifact(name + ext, os.str());
    p.out() << name << ": " << part->size() << " quintuples\n";
  }
}

void prompts_stage(Pipeline& p) {
  const auto tasks = op2_tasks(p);
  std::string lines;
  for (const auto& t : tasks) {
    ojson j;
    j["uid"] = t.uid;
    j["prompt"] = t.prompt;
    j["answer"] = t.reference;
    lines += j.dump() + "\n";
  }
  p.artifact("prompts.jsonl", lines);
  p.out() << tasks.size() << " prompts\n";
}

void embed_stage(Pipeline& p) {
  std::ostringstream os;
  write_store(os, p.store());
  p.artifact("embeddings.bin", os.str());
  p.out() << p.store().size() << " embeddings of dim " << p.store().dim() << "\n";
}

Report report_from_json(const std::string& text) {
  const auto j = nlohmann::ordered_json::parse(text);
  Report r;
  r.title = j.value("title", std::string());
  r.columns = j.at("columns").get<std::vector<std::string>>();
  for (const auto& row : j.at("rows")) {
    ReportRow out{row.at("label").get<std::string>(), {}};
    for (const auto& c : r.columns) out.values.push_back(row.at(c).get<double>());
    r.rows.push_back(std::move(out));
  }
  if (auto it = j.find("notes"); it != j.end()) {
    for (const auto& [k, v] : it->items()) r.notes.emplace_back(k, v.get<std::string>());
  }
  return r;
}

struct Command {
  const char* name;
  const char* help;
  std::function<void(Pipeline&)> body;
  bool needs_data = true;
};

const std::vector<Command>& commands() {
  static const std::vector<Command> table = {
      {"ingest", "parse a dataset and report vocabulary sizes", ingest_stage},
      {"split", "write chronological train/valid/test files", split_stage},
      {"stats", "dataset statistics per split", stats_stage},
      {"prompts", "render object-prediction prompts", prompts_stage},
      {"embed", "write the quintuple embedding store", embed_stage},
      {"train-op1", "train the ranking model", train_op1_stage},
      {"eval-op1", "evaluate a ranking checkpoint", eval_op1_stage},
      {"gen-op2", "run the generator over rendered prompts", gen_op2_stage},
      {"eval-op2", "score generations with ROUGE", eval_op2_stage},
      {"train-mef", "train the multi-event forecaster", train_mef_stage},
      {"eval-mef", "evaluate a forecaster checkpoint", eval_mef_stage},
      {"report", "print <out>/report.json as a table",
       [](Pipeline& p) { p.out() << report_to_text(report_from_json(read_file(p.dir() / "report.json"))); }, false},
      {"op1", "full ranking pipeline", [](Pipeline& p) { train_op1_stage(p); eval_op1_stage(p); }},
      {"op2", "full generative pipeline", [](Pipeline& p) { gen_op2_stage(p); eval_op2_stage(p); }},
      {"mef", "full forecasting pipeline", [](Pipeline& p) { train_mef_stage(p); eval_mef_stage(p); }},
  };
  return table;
}

struct HelpRequested {
  std::string text;
  int code;
};

}  // namespace

std::optional<Task> task_from_string(std::string_view name) {
  if (name == "op1") return Task::op1;
  if (name == "op2") return Task::op2;
  if (name == "mef") return Task::mef;
  if (name == "none" || name.empty()) return Task::none;
  return std::nullopt;
}

std::string_view to_string(Task task) {
  switch (task) {
    case Task::op1: return "op1";
    case Task::op2: return "op2";
    case Task::mef: return "mef";
    default: return "none";
  }
}

const std::vector<KeySpec>& config_keys() {
  static const std::vector<KeySpec> specs = [] {
    std::vector<KeySpec> out;
    for (const auto& b : bindings()) out.push_back(b.spec);
    return out;
  }();
  return specs;
}

std::string flag_for(std::string_view key) {
  std::string out(key);
  for (auto& c : out) {
    if (c == '.' || c == '_') c = '-';
  }
  return out;
}

void set_key(RunConfig& cfg, std::string_view key, std::string_view value) { binding(key).set(cfg, value); }

std::string get_key(const RunConfig& cfg, std::string_view key) { return binding(key).get(cfg); }

std::string canonical_config(const RunConfig& cfg) {
  std::string out;
  for (const auto& b : bindings()) out += b.spec.key + "=" + b.get(cfg) + "\n";
  return out;
}

std::uint64_t config_hash(const RunConfig& cfg) { return fnv1a64(canonical_config(cfg)); }

std::vector<std::pair<std::string, std::string>> parse_config_text(std::string_view text) {
  std::vector<std::pair<std::string, std::string>> out;
  std::string section;
  std::size_t line_no = 0;
  std::istringstream in{std::string(text)};
  std::string raw;
  while (std::getline(in, raw)) {
    ++line_no;
    std::string line = trim(raw);
    if (line.empty() || line[0] == '#' || line[0] == ';') continue;
    if (line.front() == '[') {
      if (line.back() != ']') throw UsageError("config line " + std::to_string(line_no) + ": unterminated section");
      section = trim(std::string_view(line).substr(1, line.size() - 2));
      continue;
    }
    const auto eq = line.find('=');
    if (eq == std::string::npos) throw UsageError("config line " + std::to_string(line_no) + ": expected key = value");
    std::string key = trim(std::string_view(line).substr(0, eq));
    std::string value = trim(std::string_view(line).substr(eq + 1));
    if (value.size() >= 2 && value.front() == '"') {
      const auto close = value.find('"', 1);
      if (close == std::string::npos) throw UsageError("config line " + std::to_string(line_no) + ": unterminated string");
      value = value.substr(1, close - 1);
    } else if (const auto hash = value.find(" #"); hash != std::string::npos) {
      value = trim(std::string_view(value).substr(0, hash));
    }
    if (key.empty()) throw UsageError("config line " + std::to_string(line_no) + ": empty key");
    out.emplace_back(section.empty() ? key : section + "." + key, value);
  }
  return out;
}

void apply_config_file(RunConfig& cfg, const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw UsageError("cannot open config file " + path);
  std::ostringstream ss;
  ss << in.rdbuf();
  for (const auto& [key, value] : parse_config_text(ss.str())) {
    try {
      set_key(cfg, key, value);
    } catch (const UsageError& e) {
      throw UsageError(path + ": " + e.what());
    }
  }
}

Task task_of_command(std::string_view command) {
  if (command == "op1" || command == "train-op1" || command == "eval-op1") return Task::op1;
  if (command == "op2" || command == "gen-op2" || command == "eval-op2" || command == "prompts") return Task::op2;
  if (command == "mef" || command == "train-mef" || command == "eval-mef") return Task::mef;
  return Task::none;
}

Invocation parse_cli(int argc, const char* const* argv) {
  CLI::App app{"LEAP event-prediction toolkit", "leap"};
  app.require_subcommand(1, 1);
  app.set_version_flag("--version", kVersion);

  std::string config_path;
  std::map<std::string, std::string> values;
  std::map<std::string, std::vector<std::pair<std::string, CLI::Option*>>> per_command;
  for (const auto& c : commands()) {
    auto* sub = app.add_subcommand(c.name, c.help);
    sub->add_option("--config,-c", config_path, "flat key = value config file");
    for (const auto& spec : config_keys()) {
      std::string names = "--" + flag_for(spec.key);
      for (const auto& a : spec.aliases) names += ",--" + a;
      auto* opt = sub->add_option(names, values[spec.key], spec.help + " [" + spec.key + "]");
      opt->group(spec.scope == Task::none ? "Options" : std::string(to_string(spec.scope)) + " options");
      per_command[c.name].emplace_back(spec.key, opt);
    }
  }

  try {
    app.parse(argc, argv);
  } catch (const CLI::CallForHelp& e) {
    std::ostringstream os;
    const int code = app.exit(e, os, os);
    throw HelpRequested{os.str(), code};
  } catch (const CLI::CallForAllHelp& e) {
    std::ostringstream os;
    const int code = app.exit(e, os, os);
    throw HelpRequested{os.str(), code};
  } catch (const CLI::CallForVersion& e) {
    std::ostringstream os;
    const int code = app.exit(e, os, os);
    throw HelpRequested{os.str(), code};
  } catch (const CLI::ParseError& e) {
    throw UsageError(e.what());
  }

  Invocation inv;
  inv.command = app.get_subcommands().front()->get_name();
  if (!config_path.empty()) apply_config_file(inv.config, config_path);

  const Task implied = task_of_command(inv.command);
  Task flag_scope = Task::none;
  std::string flag_scope_key;
  for (const auto& [key, opt] : per_command.at(inv.command)) {
    if (opt->count() == 0) continue;
    set_key(inv.config, key, values[key]);
    inv.flags_given.push_back(key);
    const auto scope = binding(key).spec.scope;
    if (scope == Task::none) continue;
    if (implied != Task::none && scope != implied) {
      throw UsageError("--" + flag_for(key) + " is an " + std::string(to_string(scope)) + " option but '" +
                       inv.command + "' runs " + std::string(to_string(implied)));
    }
    if (flag_scope != Task::none && scope != flag_scope) {
      throw UsageError("conflicting task options --" + flag_for(flag_scope_key) + " and --" + flag_for(key));
    }
    flag_scope = scope;
    flag_scope_key = key;
  }
  if (implied != Task::none && inv.config.task != Task::none && inv.config.task != implied) {
    throw UsageError("run.task = " + std::string(to_string(inv.config.task)) + " conflicts with '" + inv.command + "'");
  }
  if (inv.config.task != Task::none && flag_scope != Task::none && flag_scope != inv.config.task) {
    throw UsageError("--" + flag_for(flag_scope_key) + " does not apply to task " +
                     std::string(to_string(inv.config.task)));
  }

  const bool needs_data = std::find_if(commands().begin(), commands().end(), [&](const Command& c) {
                            return c.name == inv.command;
                          })->needs_data;
  if (needs_data) {
    if (inv.config.data_path.empty()) throw UsageError("missing required --data (data.path)");
    if (!fs::exists(inv.config.data_path)) throw UsageError("dataset not found: " + inv.config.data_path);
  }
  if (inv.config.embed.provider == "store") {
    if (inv.config.embed.store_path.empty()) throw UsageError("embed.provider = store needs --store (embed.store)");
    if (!fs::exists(inv.config.embed.store_path)) throw UsageError("embedding store not found: " + inv.config.embed.store_path);
  }
  return inv;
}

int run(const Invocation& inv, std::ostream& out, std::ostream& err) {
  const auto it = std::find_if(commands().begin(), commands().end(),
                               [&](const Command& c) { return c.name == inv.command; });
  if (it == commands().end()) {
    err << "unknown command " << inv.command << "\n";
    return 2;
  }
  Pipeline pipeline(inv, out);
  try {
    it->body(pipeline);
  } catch (const std::exception& e) {
    err << "leap " << inv.command << ": " << e.what() << "\n";
    try {
      pipeline.finish(false, e.what());
    } catch (const std::exception&) {
    }
    return 1;
  }
  pipeline.finish(true);
  return 0;
}

int main_entry(int argc, const char* const* argv, std::ostream& out, std::ostream& err) {
  Invocation inv;
  try {
    inv = parse_cli(argc, argv);
  } catch (const HelpRequested& h) {
    out << h.text;
    return h.code;
  } catch (const UsageError& e) {
    err << "leap: " << e.what() << "\nRun 'leap --help' for usage.\n";
    return 2;
  }
  return run(inv, out, err);
}

}  // namespace leap::cli
