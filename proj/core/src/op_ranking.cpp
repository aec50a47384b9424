#include "leap/op_ranking.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <numeric>
#include <stdexcept>

#include "leap/metrics.hpp"

namespace leap::op1 {

namespace {

void require(bool ok, const std::string& what) {
  if (!ok) throw std::invalid_argument(what);
}

// Row `r` of a rank-3 parameter viewed as a stack of D×D matrices.
const double* matrix_at(const Tensor& stack, std::size_t r) {
  const std::size_t d = stack.shape()[1];
  return stack.data().data() + r * d * stack.shape()[2];
}

double* matrix_at(Tensor& stack, std::size_t r) {
  const std::size_t d = stack.shape()[1];
  return stack.data().data() + r * d * stack.shape()[2];
}

// out += v · M  (v: length D, M: D×D row-major)
void add_vec_mat(std::span<const double> v, const double* m, std::size_t d, double scale, std::span<double> out) {
  for (std::size_t k = 0; k < d; ++k) {
    const double a = v[k] * scale;
    if (a == 0.0) continue;
    const double* row = m + k * d;
    for (std::size_t j = 0; j < d; ++j) out[j] += a * row[j];
  }
}

// out += g · Mᵀ
void add_vec_mat_t(std::span<const double> g, const double* m, std::size_t d, std::span<double> out) {
  for (std::size_t k = 0; k < d; ++k) {
    const double* row = m + k * d;
    double s = 0.0;
    for (std::size_t j = 0; j < d; ++j) s += g[j] * row[j];
    out[k] += s;
  }
}

struct Group {
  RelationId relation;
  EntityId source;
  std::vector<EntityId> targets;
};

std::vector<Group> group_messages(std::span<const RgcnCache::Message> messages) {
  std::vector<RgcnCache::Message> sorted(messages.begin(), messages.end());
  std::stable_sort(sorted.begin(), sorted.end(), [](const auto& a, const auto& b) {
    return a.relation != b.relation ? a.relation < b.relation : a.source < b.source;
  });
  std::vector<Group> groups;
  for (const auto& m : sorted) {
    if (groups.empty() || groups.back().relation != m.relation || groups.back().source != m.source) {
      groups.push_back({m.relation, m.source, {}});
    }
    groups.back().targets.push_back(m.target);
  }
  return groups;
}

std::size_t rank_in(std::span<const double> probs, std::size_t target) {
  const double pt = probs[target];
  std::size_t rank = 1;
  for (std::size_t j = 0; j < probs.size(); ++j) {
    if (probs[j] > pt || (probs[j] == pt && j < target)) ++rank;
  }
  return rank;
}

std::vector<std::vector<Quintuple>> by_day(std::span<const Quintuple> part) {
  auto sorted = sorted_by_time(part);
  std::vector<std::vector<Quintuple>> days;
  for (auto& q : sorted) {
    if (days.empty() || days.back().front().day != q.day) days.emplace_back();
    days.back().push_back(std::move(q));
  }
  return days;
}

}  // namespace

void Op1Config::validate() const {
  require(history_len >= 1, "op1: history_len must be >= 1");
  require(entity_dim > 0 && text_dim > 0 && conv_kernels > 0, "op1: dimensions must be positive");
  require(conv_width % 2 == 1, "op1: conv_width must be odd");
  require(rgcn_layers >= 0, "op1: rgcn_layers must be >= 0");
  require(rgcn_dropout >= 0.0 && rgcn_dropout < 1.0, "op1: dropout must be in [0, 1)");
  require(epochs >= 0 && patience >= 1, "op1: epochs >= 0 and patience >= 1 required");
}

Op1State::Op1State(std::size_t num_entities, std::size_t num_relations, const Op1Config& cfg, nn::Rng& rng)
    : num_relations_(num_relations) {
  cfg.validate();
  require(num_entities > 0 && num_relations > 0, "op1: empty vocabulary");
  const std::size_t d = cfg.entity_dim;
  entity_emb = nn::Param("entity_emb", nn::xavier_uniform({num_entities, d}, rng));
  relation_emb = nn::Param("relation_emb", nn::xavier_uniform({2 * num_relations, d}, rng));
  for (int l = 0; l < cfg.rgcn_layers; ++l) {
    const auto tag = "rgcn" + std::to_string(l);
    rgcn_relation.emplace_back(tag + ".relation", nn::xavier_uniform({2 * num_relations, d, d}, rng));
    rgcn_self.emplace_back(tag + ".self", nn::xavier_uniform({d, d}, rng));
  }
  gru = nn::GruParams::init(d, d, rng, "gru");
  text_proj = nn::Param("text_proj", nn::xavier_uniform({cfg.text_dim, d}, rng));
  conv_kernels = nn::Param("conv.kernels", nn::xavier_uniform({cfg.conv_kernels, 3, cfg.conv_width}, rng));
  conv_bias = nn::Param("conv.bias", Tensor::vector(cfg.conv_kernels));
  fc_w = nn::Param("fc.w", nn::xavier_uniform({cfg.conv_kernels * d, d}, rng));
  fc_b = nn::Param("fc.b", Tensor::vector(d));
}

std::vector<nn::Param*> Op1State::params() {
  std::vector<nn::Param*> out{&entity_emb, &relation_emb};
  for (std::size_t l = 0; l < rgcn_relation.size(); ++l) {
    out.push_back(&rgcn_relation[l]);
    out.push_back(&rgcn_self[l]);
  }
  for (auto* p : gru.params()) out.push_back(p);
  for (auto* p : {&text_proj, &conv_kernels, &conv_bias, &fc_w, &fc_b}) out.push_back(p);
  return out;
}

std::vector<const nn::Param*> Op1State::params() const {
  auto mutable_params = const_cast<Op1State*>(this)->params();
  return {mutable_params.begin(), mutable_params.end()};
}

void Op1State::zero_grad() {
  for (auto* p : params()) p->zero_grad();
}

DayIndex::DayIndex(std::span<const Quintuple> events) : graphs_(group_by_day(sorted_by_time(events))) {
  for (std::size_t i = 0; i < graphs_.size(); ++i) position_[graphs_[i].day] = i;
}

const DailyGraph& DayIndex::at(Day day) const {
  const auto it = position_.find(day);
  return it == position_.end() ? empty_ : graphs_[it->second];
}

std::vector<const DailyGraph*> DayIndex::window(Day day, int len) const {
  std::vector<const DailyGraph*> out;
  for (Day d = std::max<Day>(0, day - len); d < day; ++d) out.push_back(&at(d));
  return out;
}

// ---- R-GCN ---------------------------------------------------------------

Tensor rgcn_forward(const GraphWindow& window, const Op1State& state, const Op1Config& cfg, bool training,
                    nn::Rng* rng, RgcnCache* cache) {
  const std::size_t n = state.num_entities();
  const std::size_t d = state.dim();
  const auto num_rel = static_cast<RelationId>(state.num_relations());

  std::vector<RgcnCache::Message> messages;
  for (const DailyGraph* g : window) {
    for (const auto& e : g->edges) {
      if (e.subject < 0 || static_cast<std::size_t>(e.subject) >= n || e.object < 0 ||
          static_cast<std::size_t>(e.object) >= n || e.relation < 0 || e.relation >= num_rel) {
        throw std::out_of_range("rgcn_forward: edge uid " + std::to_string(e.uid) + " references an unknown id");
      }
      messages.push_back({e.subject, e.object, e.relation});
      messages.push_back({e.object, e.subject, e.relation + num_rel});
    }
  }
  std::vector<double> inv_degree(n, 0.0);
  for (const auto& m : messages) inv_degree[static_cast<std::size_t>(m.target)] += 1.0;
  for (auto& v : inv_degree) v = v > 0 ? 1.0 / v : 0.0;
  const auto groups = group_messages(messages);

  if (training && cfg.rgcn_dropout > 0.0 && !rng) throw std::invalid_argument("rgcn_forward: dropout needs an rng");
  nn::Rng unused(0);
  Tensor h = state.entity_emb.value;
  std::vector<RgcnCache::Layer> layers;
  for (std::size_t l = 0; l < state.rgcn_self.size(); ++l) {
    Tensor pre = nn::matmul(h, state.rgcn_self[l].value);
    const Tensor& stack = state.rgcn_relation[l].value;
    std::vector<double> transformed(d);
    for (const auto& g : groups) {
      std::fill(transformed.begin(), transformed.end(), 0.0);
      add_vec_mat(h.row(static_cast<std::size_t>(g.source)), matrix_at(stack, static_cast<std::size_t>(g.relation)),
                  d, 1.0, transformed);
      for (EntityId t : g.targets) {
        auto out = pre.row(static_cast<std::size_t>(t));
        const double w = inv_degree[static_cast<std::size_t>(t)];
        for (std::size_t j = 0; j < d; ++j) out[j] += w * transformed[j];
      }
    }
    auto dropped = nn::dropout(nn::relu(pre), cfg.rgcn_dropout, training, rng ? *rng : unused);
    if (cache) layers.push_back({std::move(h), pre, std::move(dropped.mask)});
    h = std::move(dropped.output);
  }
  if (cache) *cache = RgcnCache{std::move(layers), std::move(messages), std::move(inv_degree)};
  return h;
}

void rgcn_backward(const RgcnCache& cache, Op1State& state, const Tensor& d_entities) {
  const std::size_t d = state.dim();
  const auto groups = group_messages(cache.messages);
  Tensor grad = d_entities;
  for (std::size_t l = cache.layers.size(); l-- > 0;) {
    const auto& layer = cache.layers[l];
    Tensor d_post = grad;
    for (std::size_t i = 0; i < d_post.size(); ++i) d_post[i] *= layer.mask[i];
    const Tensor d_pre = nn::relu_backward(layer.pre, d_post);

    nn::add_inplace(state.rgcn_self[l].grad, nn::matmul_tn(layer.input, d_pre));
    Tensor d_input = nn::matmul_nt(d_pre, state.rgcn_self[l].value);

    const Tensor& stack = state.rgcn_relation[l].value;
    Tensor& stack_grad = state.rgcn_relation[l].grad;
    std::vector<double> g_sum(d);
    for (const auto& g : groups) {
      std::fill(g_sum.begin(), g_sum.end(), 0.0);
      for (EntityId t : g.targets) {
        const auto row = d_pre.row(static_cast<std::size_t>(t));
        const double w = cache.inv_degree[static_cast<std::size_t>(t)];
        for (std::size_t j = 0; j < d; ++j) g_sum[j] += w * row[j];
      }
      const auto src = layer.input.row(static_cast<std::size_t>(g.source));
      double* dw = matrix_at(stack_grad, static_cast<std::size_t>(g.relation));
      for (std::size_t k = 0; k < d; ++k) {
        if (src[k] == 0.0) continue;
        for (std::size_t j = 0; j < d; ++j) dw[k * d + j] += src[k] * g_sum[j];
      }
      add_vec_mat_t(g_sum, matrix_at(stack, static_cast<std::size_t>(g.relation)), d,
                    d_input.row(static_cast<std::size_t>(g.source)));
    }
    grad = std::move(d_input);
  }
  nn::add_inplace(state.entity_emb.grad, grad);
}

// ---- relation evolution --------------------------------------------------

Tensor evolve_relations(const Op1State& state, const GraphWindow& window, const Tensor& entities,
                        EvolveCache* cache) {
  const std::size_t num_rel = state.num_relations();
  const std::size_t d = state.dim();
  Tensor h = state.relation_emb.value;
  EvolveCache local;
  for (const DailyGraph* g : window) {
    EvolveCache::Step step;
    step.participants.assign(num_rel, {});
    for (const auto& e : g->edges) {
      auto& p = step.participants.at(static_cast<std::size_t>(e.relation));
      p.push_back(e.subject);
      p.push_back(e.object);
    }
    Tensor x = Tensor::matrix(2 * num_rel, d);
    for (std::size_t r = 0; r < num_rel; ++r) {
      const auto& p = step.participants[r];
      if (p.empty()) continue;
      const double w = 1.0 / static_cast<double>(p.size());
      auto fwd = x.row(r);
      for (EntityId id : p) {
        const auto row = entities.row(static_cast<std::size_t>(id));
        for (std::size_t j = 0; j < d; ++j) fwd[j] += w * row[j];
      }
      auto inv = x.row(r + num_rel);
      std::copy(fwd.begin(), fwd.end(), inv.begin());
    }
    h = nn::gru_step(x, h, state.gru, cache ? &step.gru : nullptr);
    if (cache) local.steps.push_back(std::move(step));
  }
  if (cache) *cache = std::move(local);
  return h;
}

void evolve_relations_backward(const EvolveCache& cache, Op1State& state, const Tensor& d_relations,
                               Tensor& d_entities) {
  const std::size_t num_rel = state.num_relations();
  const std::size_t d = state.dim();
  Tensor dh = d_relations;
  for (std::size_t s = cache.steps.size(); s-- > 0;) {
    const auto& step = cache.steps[s];
    auto g = nn::gru_step_backward(step.gru, state.gru, dh);
    for (std::size_t r = 0; r < num_rel; ++r) {
      const auto& p = step.participants[r];
      if (p.empty()) continue;
      const double w = 1.0 / static_cast<double>(p.size());
      const auto fwd = g.dx.row(r);
      const auto inv = g.dx.row(r + num_rel);
      for (EntityId id : p) {
        auto out = d_entities.row(static_cast<std::size_t>(id));
        for (std::size_t j = 0; j < d; ++j) out[j] += w * (fwd[j] + inv[j]);
      }
    }
    dh = std::move(g.dh);
  }
  nn::add_inplace(state.relation_emb.grad, dh);
}

// ---- decoder -------------------------------------------------------------

RankingOutput convtranse_scores(const QueryBatch& batch, const Op1State& state, const Tensor& entities,
                                const Tensor& relations, DecoderCache* cache) {
  const std::size_t b = batch.size();
  const std::size_t d = state.dim();
  const std::size_t k = state.conv_kernels.value.shape()[0];
  require(batch.relations.size() == b && batch.text.rows() == b && batch.text.cols() == state.text_dim(),
          "convtranse_scores: batch shape mismatch");
  require(entities.rows() == state.num_entities() && entities.cols() == d &&
              relations.rows() == 2 * state.num_relations() && relations.cols() == d,
          "convtranse_scores: embedding shape mismatch");

  DecoderCache local;
  local.stacked_text = nn::matmul(batch.text, state.text_proj.value);
  local.flat = Tensor::matrix(b, k * d);
  for (std::size_t i = 0; i < b; ++i) {
    const auto s = static_cast<std::size_t>(batch.subjects[i]);
    const auto r = static_cast<std::size_t>(batch.relations[i]);
    if (s >= state.num_entities() || r >= state.num_relations()) {
      throw std::out_of_range("convtranse_scores: query id out of range");
    }
    Tensor input = Tensor::matrix(3, d);
    std::copy_n(entities.row(s).begin(), d, input.row(0).begin());
    std::copy_n(relations.row(r).begin(), d, input.row(1).begin());
    std::copy_n(local.stacked_text.row(i).begin(), d, input.row(2).begin());
    Tensor pre = nn::conv1d_same(input, state.conv_kernels.value, state.conv_bias.value);
    auto flat_row = local.flat.row(i);
    for (std::size_t j = 0; j < pre.size(); ++j) flat_row[j] = std::max(0.0, pre[j]);
    if (cache) {
      local.conv_inputs.push_back(std::move(input));
      local.conv_pre.push_back(std::move(pre));
    }
  }
  local.decoded = nn::linear(local.flat, state.fc_w.value, state.fc_b.value);
  local.scores = nn::matmul_nt(local.decoded, entities);

  RankingOutput out;
  out.probs = nn::softmax_rows(local.scores);
  for (std::size_t i = 0; i < b; ++i) {
    const auto row = out.probs.row(i);
    out.predicted.push_back(static_cast<std::size_t>(std::max_element(row.begin(), row.end()) - row.begin()));
  }
  if (cache) *cache = std::move(local);
  return out;
}

std::pair<Tensor, Tensor> convtranse_backward(const DecoderCache& cache, const QueryBatch& batch, Op1State& state,
                                              const Tensor& entities, const Tensor& relations,
                                              const Tensor& d_scores) {
  const std::size_t d = state.dim();
  const std::size_t k = state.conv_kernels.value.shape()[0];
  Tensor d_entities = nn::matmul_tn(d_scores, cache.decoded);
  Tensor d_relations(relations.shape());
  const Tensor d_decoded = nn::matmul(d_scores, entities);
  const Tensor d_flat = nn::linear_backward(cache.flat, state.fc_w.value, d_decoded, state.fc_w.grad, state.fc_b.grad);

  Tensor d_text = Tensor::matrix(batch.size(), d);
  for (std::size_t i = 0; i < batch.size(); ++i) {
    Tensor d_post = Tensor::matrix(k, d);
    std::copy_n(d_flat.row(i).begin(), k * d, d_post.data().begin());
    const Tensor d_pre = nn::relu_backward(cache.conv_pre[i], d_post);
    const Tensor d_input = nn::conv1d_same_backward(cache.conv_inputs[i], state.conv_kernels.value, d_pre,
                                                    state.conv_kernels.grad, state.conv_bias.grad);
    auto de = d_entities.row(static_cast<std::size_t>(batch.subjects[i]));
    auto dr = d_relations.row(static_cast<std::size_t>(batch.relations[i]));
    auto dt = d_text.row(i);
    for (std::size_t j = 0; j < d; ++j) {
      de[j] += d_input(0, j);
      dr[j] += d_input(1, j);
      dt[j] = d_input(2, j);
    }
  }
  nn::add_inplace(state.text_proj.grad, nn::matmul_tn(batch.text, d_text));
  return {std::move(d_entities), std::move(d_relations)};
}

// ---- full step -----------------------------------------------------------

double op1_loss(Op1State& state, const GraphWindow& window, const QueryBatch& batch, const Op1Config& cfg,
                bool training, nn::Rng* dropout_rng, bool backward) {
  require(batch.objects.size() == batch.size(), "op1_loss: targets required");
  RgcnCache rgcn_cache;
  EvolveCache evolve_cache;
  DecoderCache decoder_cache;
  const Tensor entities = rgcn_forward(window, state, cfg, training, dropout_rng, backward ? &rgcn_cache : nullptr);
  const Tensor relations = evolve_relations(state, window, entities, backward ? &evolve_cache : nullptr);
  convtranse_scores(batch, state, entities, relations, &decoder_cache);

  std::vector<std::size_t> targets;
  for (EntityId o : batch.objects) targets.push_back(static_cast<std::size_t>(o));
  Tensor d_scores;
  const double loss = nn::cross_entropy_softmax(decoder_cache.scores, targets, backward ? &d_scores : nullptr);
  if (!backward) return loss;

  auto [d_entities, d_relations] =
      convtranse_backward(decoder_cache, batch, state, entities, relations, d_scores);
  evolve_relations_backward(evolve_cache, state, d_relations, d_entities);
  rgcn_backward(rgcn_cache, state, d_entities);
  return loss;
}

RankingOutput op1_predict(const Op1State& state, const GraphWindow& window, const QueryBatch& batch,
                          const Op1Config& cfg) {
  const Tensor entities = rgcn_forward(window, state, cfg, false);
  const Tensor relations = evolve_relations(state, window, entities);
  return convtranse_scores(batch, state, entities, relations);
}

QueryBatch make_batch(std::span<const Quintuple> queries, const EmbeddingStore* store, std::size_t text_dim) {
  if (store && store->dim() != text_dim) {
    throw std::invalid_argument("make_batch: store dim " + std::to_string(store->dim()) +
                                " differs from text_dim " + std::to_string(text_dim));
  }
  QueryBatch batch;
  batch.text = Tensor::matrix(queries.size(), text_dim);
  for (std::size_t i = 0; i < queries.size(); ++i) {
    const auto& q = queries[i];
    batch.subjects.push_back(q.subject);
    batch.relations.push_back(q.relation);
    batch.objects.push_back(q.object);
    if (store) {
      const auto v = store->at(q.uid);
      std::copy(v.begin(), v.end(), batch.text.row(i).begin());
    }
  }
  return batch;
}

// ---- training ------------------------------------------------------------

std::string log_to_csv(std::span<const Op1LogRow> rows) {
  std::string out = "epoch,split,loss,hits1,hits3,hits10\n";
  char buf[160];
  for (const auto& r : rows) {
    std::snprintf(buf, sizeof buf, "%d,%s,%.6f,%.6f,%.6f,%.6f\n", r.epoch, r.split.c_str(), r.loss, r.hits1,
                  r.hits3, r.hits10);
    out += buf;
  }
  return out;
}

Op1Eval evaluate_op1(const Op1State& state, std::span<const Quintuple> part, const DayIndex& days,
                     const EmbeddingStore* store, const Op1Config& cfg) {
  Op1Eval eval;
  if (part.empty()) return eval;
  double loss_sum = 0.0;
  for (const auto& day_queries : by_day(part)) {
    const auto batch = make_batch(day_queries, store, state.text_dim());
    const auto window = days.window(day_queries.front().day, cfg.history_len);
    const auto out = op1_predict(state, window, batch, cfg);
    for (std::size_t i = 0; i < batch.size(); ++i) {
      const auto row = out.probs.row(i);
      const auto target = static_cast<std::size_t>(batch.objects[i]);
      loss_sum -= std::log(std::max(row[target], 1e-300));
      eval.ranks.push_back(rank_in(row, target));
    }
  }
  eval.loss = loss_sum / static_cast<double>(eval.ranks.size());
  eval.hits = metrics::hits_at_k_from_ranks(eval.ranks, metrics::kDefaultHits);
  return eval;
}

Op1TrainResult train_op1(const DatasetSplit& split, std::size_t num_entities, std::size_t num_relations,
                         const EmbeddingStore* store, const Op1Config& cfg, std::uint64_t seed) {
  if (split.train.empty()) throw std::invalid_argument("train_op1: empty training split");
  cfg.validate();
  if (store && store->dim() != cfg.text_dim) {
    throw std::invalid_argument("train_op1: text_dim does not match the embedding store");
  }

  auto init_rng = nn::substream(seed, "init");
  auto dropout_rng = nn::substream(seed, "dropout");
  Op1State state(num_entities, num_relations, cfg, init_rng);

  std::vector<Quintuple> all;
  all.insert(all.end(), split.train.begin(), split.train.end());
  all.insert(all.end(), split.valid.begin(), split.valid.end());
  all.insert(all.end(), split.test.begin(), split.test.end());
  const DayIndex days(all);
  const auto train_days = by_day(split.train);
  const nn::AdamConfig adam{cfg.lr, 0.9, 0.999, 1e-8, cfg.weight_decay};

  Op1TrainResult result;
  auto log_epoch = [&](int epoch) {
    const auto train_eval = evaluate_op1(state, split.train, days, store, cfg);
    result.log.push_back({epoch, "train", train_eval.loss, train_eval.hits.at(1), train_eval.hits.at(3),
                          train_eval.hits.at(10)});
    if (split.valid.empty()) return train_eval.hits.at(1);
    const auto valid_eval = evaluate_op1(state, split.valid, days, store, cfg);
    result.log.push_back({epoch, "valid", valid_eval.loss, valid_eval.hits.at(1), valid_eval.hits.at(3),
                          valid_eval.hits.at(10)});
    return valid_eval.hits.at(1);
  };

  double best = log_epoch(0);
  result.state = state;
  int since_best = 0;
  const auto params = state.params();
  for (int epoch = 1; epoch <= cfg.epochs; ++epoch) {
    for (const auto& day_queries : train_days) {
      const auto batch = make_batch(day_queries, store, cfg.text_dim);
      const auto window = days.window(day_queries.front().day, cfg.history_len);
      state.zero_grad();
      op1_loss(state, window, batch, cfg, true, &dropout_rng, true);
      nn::clip_global_norm(params, cfg.grad_clip);
      for (auto* p : params) nn::adam_step(*p, adam);
    }
    result.epochs_run = epoch;
    const double score = log_epoch(epoch);
    if (score > best) {
      best = score;
      result.state = state;
      result.best_epoch = epoch;
      since_best = 0;
    } else if (++since_best >= cfg.patience) {
      break;
    }
  }
  return result;
}

std::vector<std::size_t> top_k(std::span<const double> probs, std::size_t k) {
  std::vector<std::size_t> idx(probs.size());
  std::iota(idx.begin(), idx.end(), 0);
  k = std::min(k, idx.size());
  std::partial_sort(idx.begin(), idx.begin() + static_cast<std::ptrdiff_t>(k), idx.end(),
                    [&](std::size_t a, std::size_t b) { return probs[a] != probs[b] ? probs[a] > probs[b] : a < b; });
  idx.resize(k);
  return idx;
}

std::vector<Prediction> predict_topk(const Op1State& state, std::span<const Quintuple> queries,
                                     const DayIndex& days, const EmbeddingStore* store, const Op1Config& cfg,
                                     std::size_t k, const Vocabulary& vocab) {
  std::vector<Prediction> out;
  for (const auto& day_queries : by_day(queries)) {
    const auto batch = make_batch(day_queries, store, state.text_dim());
    const auto window = days.window(day_queries.front().day, cfg.history_len);
    const auto ranking = op1_predict(state, window, batch, cfg);
    for (std::size_t i = 0; i < batch.size(); ++i) {
      Prediction p;
      p.uid = day_queries[i].uid;
      p.ranked = top_k(ranking.probs.row(i), k);
      if (!p.ranked.empty()) p.readout = vocab.entity(static_cast<EntityId>(p.ranked.front()));
      out.push_back(std::move(p));
    }
  }
  std::sort(out.begin(), out.end(), [](const Prediction& a, const Prediction& b) { return a.uid < b.uid; });
  return out;
}

}  // namespace leap::op1
