#pragma once

#include <cstddef>
#include <cstdint>
#include <map>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include "leap/embedding.hpp"
#include "leap/events.hpp"
#include "leap/nn.hpp"

namespace leap::op1 {

struct Op1Config {
  int history_len = 7;  // days of graph history before the query day
  std::size_t entity_dim = 200;
  int rgcn_layers = 2;
  double rgcn_dropout = 0.2;
  std::size_t text_dim = 64;  // must match the embedding store when one is used
  std::size_t conv_kernels = 32;
  std::size_t conv_width = 3;
  double lr = 1e-3;
  double weight_decay = 1e-6;
  int epochs = 40;
  int patience = 5;
  double grad_clip = 1.0;

  /// Throws std::invalid_argument when an invariant is violated.
  void validate() const;
};

/// All trainable state: entity and relation tables (relations doubled for
/// inverse edges), R-GCN transforms, GRU, text projection and the ConvTransE
/// decoder.
class Op1State {
 public:
  Op1State() = default;
  Op1State(std::size_t num_entities, std::size_t num_relations, const Op1Config& cfg, nn::Rng& rng);

  std::size_t num_entities() const { return entity_emb.value.rows(); }
  std::size_t num_relations() const { return num_relations_; }
  std::size_t dim() const { return entity_emb.value.cols(); }
  std::size_t text_dim() const { return text_proj.value.rows(); }

  std::vector<nn::Param*> params();
  std::vector<const nn::Param*> params() const;
  void zero_grad();

  nn::Param entity_emb;                 // |V| × D
  nn::Param relation_emb;               // 2|R| × D
  std::vector<nn::Param> rgcn_relation;  // per layer: 2|R| × D × D
  std::vector<nn::Param> rgcn_self;      // per layer: D × D
  nn::GruParams gru;
  nn::Param text_proj;  // text_dim × D, no bias
  nn::Param conv_kernels;  // K × 3 × W
  nn::Param conv_bias;     // K
  nn::Param fc_w;          // (K·D) × D
  nn::Param fc_b;          // D

 private:
  std::size_t num_relations_ = 0;
};

/// Per-day graphs plus an empty graph for calendar days without events.
class DayIndex {
 public:
  explicit DayIndex(std::span<const Quintuple> events);

  /// Graphs for calendar days [day − len, day) clipped at day 0, oldest first.
  std::vector<const DailyGraph*> window(Day day, int len) const;
  const DailyGraph& at(Day day) const;
  const std::vector<DailyGraph>& graphs() const { return graphs_; }

 private:
  std::vector<DailyGraph> graphs_;
  std::map<Day, std::size_t> position_;
  DailyGraph empty_;
};

using GraphWindow = std::vector<const DailyGraph*>;

// ---- R-GCN ---------------------------------------------------------------

struct RgcnCache {
  struct Layer {
    Tensor input;
    Tensor pre;
    Tensor mask;
  };
  struct Message {
    EntityId source;
    EntityId target;
    RelationId relation;  // already offset by |R| for inverse edges
  };
  std::vector<Layer> layers;
  std::vector<Message> messages;
  std::vector<double> inv_degree;
};

/// Union graph of the window with inverse edges; each layer computes
/// ReLU(h·W_self + mean over incoming messages of h_src·W_rel), then dropout.
/// Throws std::out_of_range for edge ids outside the state's tables.
Tensor rgcn_forward(const GraphWindow& window, const Op1State& state, const Op1Config& cfg, bool training,
                    nn::Rng* rng = nullptr, RgcnCache* cache = nullptr);
/// Accumulates R-GCN and entity-table gradients.
void rgcn_backward(const RgcnCache& cache, Op1State& state, const Tensor& d_entities);

// ---- relation evolution --------------------------------------------------

struct EvolveCache {
  struct Step {
    nn::GruCache gru;
    std::vector<std::vector<EntityId>> participants;  // per original relation
  };
  std::vector<Step> steps;
};

/// Runs one GRU step per window day. The input for relation r (and its
/// inverse) is the mean of `entities` rows over the subjects and objects of
/// that day's r-edges, or zero when r is absent.
Tensor evolve_relations(const Op1State& state, const GraphWindow& window, const Tensor& entities,
                        EvolveCache* cache = nullptr);
/// Accumulates GRU and relation-table gradients; adds entity gradients to `d_entities`.
void evolve_relations_backward(const EvolveCache& cache, Op1State& state, const Tensor& d_relations,
                               Tensor& d_entities);

// ---- decoder -------------------------------------------------------------

struct QueryBatch {
  std::vector<EntityId> subjects;
  std::vector<RelationId> relations;
  std::vector<EntityId> objects;  // targets; may be empty at inference
  Tensor text;                    // batch × text_dim, zero rows for missing text

  std::size_t size() const { return subjects.size(); }
};

struct RankingOutput {
  Tensor probs;  // batch × |V|, rows sum to one
  std::vector<std::size_t> predicted;
};

struct DecoderCache {
  Tensor stacked_text;              // batch × D (text · P)
  std::vector<Tensor> conv_inputs;  // 3 × D each
  std::vector<Tensor> conv_pre;     // K × D each
  Tensor flat;                      // batch × K·D after ReLU
  Tensor decoded;                   // batch × D
  Tensor scores;                    // batch × |V|
};

RankingOutput convtranse_scores(const QueryBatch& batch, const Op1State& state, const Tensor& entities,
                                const Tensor& relations, DecoderCache* cache = nullptr);
/// Given dScores, accumulates decoder gradients and returns (dEntities, dRelations).
std::pair<Tensor, Tensor> convtranse_backward(const DecoderCache& cache, const QueryBatch& batch, Op1State& state,
                                              const Tensor& entities, const Tensor& relations,
                                              const Tensor& d_scores);

// ---- full step -----------------------------------------------------------

/// Forward through R-GCN, GRU and decoder; returns the mean cross-entropy
/// loss. When `backward` is true, parameter gradients are accumulated.
double op1_loss(Op1State& state, const GraphWindow& window, const QueryBatch& batch, const Op1Config& cfg,
                bool training, nn::Rng* dropout_rng, bool backward);

RankingOutput op1_predict(const Op1State& state, const GraphWindow& window, const QueryBatch& batch,
                          const Op1Config& cfg);

/// Builds a batch from quintuples; text rows come from `store` (zero rows when
/// `store` is null). Throws std::out_of_range if the store lacks a uid.
QueryBatch make_batch(std::span<const Quintuple> queries, const EmbeddingStore* store, std::size_t text_dim);

// ---- training ------------------------------------------------------------

struct Op1LogRow {
  int epoch = 0;
  std::string split;
  double loss = 0.0;
  double hits1 = 0.0;
  double hits3 = 0.0;
  double hits10 = 0.0;
};

std::string log_to_csv(std::span<const Op1LogRow> rows);

struct Op1Eval {
  double loss = 0.0;
  std::map<int, double> hits;
  std::vector<std::size_t> ranks;  // 1-based rank of the true object per query
};

/// Evaluates every quintuple of `part` (grouped by day) in eval mode.
Op1Eval evaluate_op1(const Op1State& state, std::span<const Quintuple> part, const DayIndex& days,
                     const EmbeddingStore* store, const Op1Config& cfg);

struct Op1TrainResult {
  Op1State state;  // best validation Hits@1
  std::vector<Op1LogRow> log;
  int best_epoch = 0;
  int epochs_run = 0;
};

/// Trains with one day per batch in chronological order, clipping and Adam,
/// early-stopping on validation Hits@1 (train Hits@1 when valid is empty).
/// Throws std::invalid_argument on an empty training split.
Op1TrainResult train_op1(const DatasetSplit& split, std::size_t num_entities, std::size_t num_relations,
                         const EmbeddingStore* store, const Op1Config& cfg, std::uint64_t seed);

/// Top-k candidate indices by probability, ties broken by lower index.
std::vector<std::size_t> top_k(std::span<const double> probs, std::size_t k);

struct Prediction {
  Uid uid = 0;
  std::vector<std::size_t> ranked;
  std::string readout;  // entity string of the rank-1 candidate
};

std::vector<Prediction> predict_topk(const Op1State& state, std::span<const Quintuple> queries,
                                     const DayIndex& days, const EmbeddingStore* store, const Op1Config& cfg,
                                     std::size_t k, const Vocabulary& vocab);

}  // namespace leap::op1
