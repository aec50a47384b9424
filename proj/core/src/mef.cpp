#include "leap/mef.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <map>
#include <numeric>
#include <stdexcept>

namespace leap::mef {

namespace {

void require(bool ok, const std::string& what) {
  if (!ok) throw std::invalid_argument(what);
}

std::vector<Day> event_days(std::span<const Quintuple> part) {
  std::vector<Day> days;
  for (const auto& q : part) days.push_back(q.day);
  std::sort(days.begin(), days.end());
  days.erase(std::unique(days.begin(), days.end()), days.end());
  return days;
}

struct Target {
  Day day;
  Window window;
  const LabelVector* labels;
};

std::vector<Target> targets_for(std::span<const Quintuple> part, const MefData& data, const MefConfig& cfg,
                                std::size_t& skipped) {
  std::vector<Target> out;
  skipped = 0;
  for (Day d : event_days(part)) {
    const auto* labels = data.labels_for(d);
    if (!labels) throw std::logic_error("mef: no labels for a day with events");
    try {
      out.push_back({d, build_window_segments(d, data.daily, cfg.window), labels});
    } catch (const std::invalid_argument&) {
      ++skipped;
    }
  }
  return out;
}

}  // namespace

void MefConfig::validate() const {
  require(window >= 1, "mef: window (l3) must be >= 1");
  require(model_dim > 0, "mef: model_dim must be positive");
  require(batch >= 1, "mef: batch must be >= 1");
  require(threshold > 0.0 && threshold < 1.0, "mef: threshold must be in (0, 1)");
  require(epochs >= 0 && patience >= 1, "mef: epochs >= 0 and patience >= 1 required");
}

std::string variant_tag(const MefConfig& cfg) { return cfg.use_attention ? "LEAP_MEF" : "LEAP_MEF\\SA"; }

MefModel MefModel::init(std::size_t input_dim, std::size_t num_relations, const MefConfig& cfg, nn::Rng& rng) {
  cfg.validate();
  require(input_dim > 0 && num_relations > 0, "mef: empty input or label space");
  MefModel m;
  m.in_w = nn::Param("mef.in_w", nn::xavier_uniform({input_dim, cfg.model_dim}, rng));
  m.in_b = nn::Param("mef.in_b", Tensor::vector(cfg.model_dim));
  m.attention = nn::AttentionParams::init(cfg.model_dim, rng, "mef.attn");
  m.out_w = nn::Param("mef.out_w", nn::xavier_uniform({cfg.model_dim, num_relations}, rng));
  m.out_b = nn::Param("mef.out_b", Tensor::vector(num_relations));
  m.use_attention = cfg.use_attention;
  return m;
}

std::vector<nn::Param*> MefModel::params() {
  std::vector<nn::Param*> out{&in_w, &in_b};
  if (use_attention) {
    for (auto* p : attention.params()) out.push_back(p);
  }
  out.push_back(&out_w);
  out.push_back(&out_b);
  return out;
}

std::vector<const nn::Param*> MefModel::params() const {
  auto mutable_params = const_cast<MefModel*>(this)->params();
  return {mutable_params.begin(), mutable_params.end()};
}

void MefModel::zero_grad() {
  for (auto* p : params()) p->zero_grad();
}

std::vector<DailyEmbeddings> daily_embeddings(std::span<const Quintuple> events, const EmbeddingStore& store) {
  std::vector<DailyEmbeddings> out;
  for (const auto& q : sorted_by_time(events)) {
    if (out.empty() || out.back().day != q.day) out.push_back({q.day, Tensor(), {}});
    out.back().uids.push_back(q.uid);
  }
  for (auto& d : out) {
    d.matrix = Tensor::matrix(d.uids.size(), store.dim());
    for (std::size_t i = 0; i < d.uids.size(); ++i) {
      const auto v = store.at(d.uids[i]);
      std::copy(v.begin(), v.end(), d.matrix.row(i).begin());
    }
  }
  return out;
}

std::vector<LabelVector> make_labels(std::span<const Quintuple> events, std::size_t num_relations) {
  std::map<Day, std::vector<std::uint8_t>> by_day;
  for (const auto& q : events) {
    if (q.relation < 0 || static_cast<std::size_t>(q.relation) >= num_relations) {
      throw std::out_of_range("make_labels: relation id out of range for uid " + std::to_string(q.uid));
    }
    auto& labels = by_day[q.day];
    labels.resize(num_relations, 0);
    labels[static_cast<std::size_t>(q.relation)] = 1;
  }
  std::vector<LabelVector> out;
  for (auto& [day, labels] : by_day) out.push_back({day, std::move(labels)});
  return out;
}

Window build_window_segments(Day target_day, std::span<const DailyEmbeddings> daily, int l3) {
  require(l3 >= 1, "build_window: l3 must be >= 1");
  const Day first = target_day - l3;
  auto lo = std::lower_bound(daily.begin(), daily.end(), first,
                             [](const DailyEmbeddings& d, Day day) { return d.day < day; });
  Window w;
  std::size_t rows = 0, cols = 0;
  for (auto it = lo; it != daily.end() && it->day < target_day; ++it) {
    if (it->matrix.rows() == 0 || it->matrix.empty()) continue;
    rows += it->matrix.rows();
    cols = it->matrix.cols();
  }
  if (rows == 0) {
    throw std::invalid_argument("build_window: no events in the " + std::to_string(l3) + " days before day " +
                                std::to_string(target_day));
  }
  w.rows = Tensor::matrix(rows, cols);
  std::size_t r = 0;
  for (auto it = lo; it != daily.end() && it->day < target_day; ++it) {
    if (it->matrix.rows() == 0 || it->matrix.empty()) continue;
    require(it->matrix.cols() == cols, "build_window: inconsistent embedding dims");
    std::copy(it->matrix.data().begin(), it->matrix.data().end(), w.rows.row(r).begin());
    r += it->matrix.rows();
    w.day_sizes.push_back(it->matrix.rows());
  }
  return w;
}

Tensor build_window(Day target_day, std::span<const DailyEmbeddings> daily, int l3) {
  return build_window_segments(target_day, daily, l3).rows;
}

std::vector<double> mef_forward(const Tensor& window, const MefModel& model, const MefConfig& cfg, MefCache* cache,
                                std::span<const std::size_t> day_sizes) {
  require(window.rank() == 2 && window.rows() > 0, "mef_forward: empty window");
  require(window.cols() == model.input_dim(), "mef_forward: window dim " + std::to_string(window.cols()) +
                                                  " differs from model input dim " +
                                                  std::to_string(model.input_dim()));
  const std::size_t n = window.rows();
  MefCache local;
  local.h = nn::linear(window, model.in_w.value, model.in_b.value);
  const Tensor attended = model.use_attention ? nn::self_attention(local.h, model.attention, &local.attention) : local.h;

  local.row_weights = Tensor::matrix(n, 1);
  if (cfg.per_day_mean && !day_sizes.empty()) {
    require(std::accumulate(day_sizes.begin(), day_sizes.end(), std::size_t{0}) == n,
            "mef_forward: day sizes do not cover the window");
    std::size_t r = 0;
    for (std::size_t size : day_sizes) {
      for (std::size_t i = 0; i < size; ++i) {
        local.row_weights[r++] = 1.0 / (static_cast<double>(day_sizes.size()) * static_cast<double>(size));
      }
    }
  } else {
    local.row_weights.fill(1.0 / static_cast<double>(n));
  }
  local.pooled = nn::matmul_tn(local.row_weights, attended);
  local.probs = nn::sigmoid(nn::linear(local.pooled, model.out_w.value, model.out_b.value));
  std::vector<double> probs(local.probs.data().begin(), local.probs.data().end());
  if (cache) {
    local.window = window;
    *cache = std::move(local);
  }
  return probs;
}

void mef_backward(const MefCache& cache, MefModel& model, std::span<const double> d_logits) {
  require(d_logits.size() == model.num_relations(), "mef_backward: gradient length mismatch");
  const Tensor dz = Tensor::from_vector(std::vector<double>(d_logits.begin(), d_logits.end()));
  Tensor dz_row = Tensor::matrix(1, dz.size());
  std::copy(dz.data().begin(), dz.data().end(), dz_row.row(0).begin());
  const Tensor d_pooled = nn::linear_backward(cache.pooled, model.out_w.value, dz_row, model.out_w.grad, model.out_b.grad);
  const Tensor d_attended = nn::matmul(cache.row_weights, d_pooled);
  const Tensor d_h = model.use_attention ? nn::self_attention_backward(cache.attention, model.attention, d_attended)
                                         : d_attended;
  nn::linear_backward(cache.window, model.in_w.value, d_h, model.in_w.grad, model.in_b.grad);
}

double mef_loss(std::span<const double> probs, std::span<const std::uint8_t> labels, std::vector<double>* d_logits) {
  require(probs.size() == labels.size(), "mef_loss: label length mismatch");
  std::vector<double> y(labels.begin(), labels.end());
  const double loss = nn::binary_cross_entropy(probs, y) * static_cast<double>(probs.size());
  if (d_logits) {
    d_logits->resize(probs.size());
    for (std::size_t i = 0; i < probs.size(); ++i) (*d_logits)[i] = nn::bce_logit_grad(probs[i], y[i]);
  }
  return loss;
}

std::vector<std::uint8_t> decide(std::span<const double> probs, double threshold) {
  std::vector<std::uint8_t> out(probs.size());
  for (std::size_t i = 0; i < probs.size(); ++i) out[i] = probs[i] > threshold ? 1 : 0;
  return out;
}

MefData MefData::from(const DatasetSplit& split, const EmbeddingStore& store, std::size_t num_relations) {
  std::vector<Quintuple> all;
  all.insert(all.end(), split.train.begin(), split.train.end());
  all.insert(all.end(), split.valid.begin(), split.valid.end());
  all.insert(all.end(), split.test.begin(), split.test.end());
  MefData data;
  data.daily = daily_embeddings(all, store);
  data.labels = make_labels(all, num_relations);
  data.num_relations = num_relations;
  return data;
}

const LabelVector* MefData::labels_for(Day day) const {
  auto it = std::lower_bound(labels.begin(), labels.end(), day, [](const LabelVector& l, Day d) { return l.day < d; });
  return it != labels.end() && it->day == day ? &*it : nullptr;
}

MefEval eval_mef(const MefModel& model, std::span<const Quintuple> part, const MefData& data, const MefConfig& cfg) {
  MefEval eval;
  const auto targets = targets_for(part, data, cfg, eval.skipped_days);
  metrics::BinaryMatrix truth(targets.size(), model.num_relations());
  metrics::BinaryMatrix pred(targets.size(), model.num_relations());
  double loss = 0.0;
  for (std::size_t t = 0; t < targets.size(); ++t) {
    const auto& target = targets[t];
    DayPrediction p;
    p.day = target.day;
    p.probs = mef_forward(target.window.rows, model, cfg, nullptr, target.window.day_sizes);
    p.decisions = decide(p.probs, cfg.threshold);
    p.labels = target.labels->labels;
    loss += mef_loss(p.probs, p.labels);
    for (std::size_t r = 0; r < p.probs.size(); ++r) {
      truth(t, r) = p.labels[r];
      pred(t, r) = p.decisions[r];
    }
    eval.predictions.push_back(std::move(p));
  }
  eval.prf = metrics::multilabel_prf(truth, pred);
  eval.loss = targets.empty() ? 0.0 : loss / static_cast<double>(targets.size());
  return eval;
}

std::string predictions_to_csv(std::span<const DayPrediction> predictions) {
  std::string out = "day,relation_id,prob,decision,label\n";
  char buf[128];
  for (const auto& p : predictions) {
    for (std::size_t r = 0; r < p.probs.size(); ++r) {
      std::snprintf(buf, sizeof buf, "%d,%zu,%.6f,%d,%d\n", p.day, r, p.probs[r], p.decisions[r], p.labels[r]);
      out += buf;
    }
  }
  return out;
}

std::string log_to_csv(std::span<const MefLogRow> rows) {
  std::string out = "epoch,split,variant,loss,f1,recall,precision\n";
  char buf[192];
  for (const auto& r : rows) {
    std::snprintf(buf, sizeof buf, "%d,%s,%s,%.6f,%.6f,%.6f,%.6f\n", r.epoch, r.split.c_str(), r.variant.c_str(),
                  r.loss, r.f1, r.recall, r.precision);
    out += buf;
  }
  return out;
}

MefTrainResult train_mef(const DatasetSplit& split, const MefData& data, const MefConfig& cfg, std::uint64_t seed) {
  cfg.validate();
  require(!data.daily.empty(), "train_mef: no embeddings");
  MefTrainResult result;
  result.variant = variant_tag(cfg);
  const auto targets = targets_for(split.train, data, cfg, result.skipped_days);
  require(!targets.empty(), "train_mef: no training day has events in its window");

  auto init_rng = nn::substream(seed, "init");
  auto shuffle_rng = nn::substream(seed, "shuffle");
  MefModel model = MefModel::init(data.daily.front().matrix.cols(), data.num_relations, cfg, init_rng);
  const auto params = model.params();
  const nn::AdamConfig adam{cfg.lr, 0.9, 0.999, 1e-8, cfg.weight_decay};

  auto log_epoch = [&](int epoch) {
    const auto train_eval = eval_mef(model, split.train, data, cfg);
    result.log.push_back({epoch, "train", result.variant, train_eval.loss, train_eval.prf.f1, train_eval.prf.recall,
                          train_eval.prf.precision});
    if (split.valid.empty()) return train_eval.prf.f1;
    const auto valid_eval = eval_mef(model, split.valid, data, cfg);
    result.log.push_back({epoch, "valid", result.variant, valid_eval.loss, valid_eval.prf.f1, valid_eval.prf.recall,
                          valid_eval.prf.precision});
    return valid_eval.prf.f1;
  };

  double best = log_epoch(0);
  result.model = model;
  int since_best = 0;
  std::vector<std::size_t> order(targets.size());
  std::iota(order.begin(), order.end(), 0);
  MefCache cache;
  std::vector<double> d_logits;
  for (int epoch = 1; epoch <= cfg.epochs; ++epoch) {
    std::shuffle(order.begin(), order.end(), shuffle_rng);
    for (std::size_t start = 0; start < order.size(); start += static_cast<std::size_t>(cfg.batch)) {
      const std::size_t end = std::min(order.size(), start + static_cast<std::size_t>(cfg.batch));
      const double scale = 1.0 / static_cast<double>(end - start);
      model.zero_grad();
      for (std::size_t i = start; i < end; ++i) {
        const auto& target = targets[order[i]];
        const auto probs = mef_forward(target.window.rows, model, cfg, &cache, target.window.day_sizes);
        mef_loss(probs, target.labels->labels, &d_logits);
        for (auto& g : d_logits) g *= scale;
        mef_backward(cache, model, d_logits);
      }
      nn::clip_global_norm(params, cfg.grad_clip);
      for (auto* p : params) nn::adam_step(*p, adam);
    }
    result.epochs_run = epoch;
    const double score = log_epoch(epoch);
    if (score > best) {
      best = score;
      result.model = model;
      result.best_epoch = epoch;
      since_best = 0;
    } else if (++since_best >= cfg.patience) {
      break;
    }
  }
  return result;
}

}  // namespace leap::mef
