#pragma once

#include <cstddef>
#include <cstdint>
#include <span>
#include <string>
#include <vector>

#include "leap/embedding.hpp"
#include "leap/events.hpp"
#include "leap/metrics.hpp"
#include "leap/nn.hpp"

namespace leap::mef {

struct MefConfig {
  int window = 7;  // l3, days of history
  std::size_t model_dim = 1024;
  double lr = 5e-5;
  double weight_decay = 1e-2;
  int batch = 2;  // target days per step
  double grad_clip = 1.0;
  int epochs = 40;
  int patience = 5;
  double threshold = 0.5;
  bool use_attention = true;
  bool per_day_mean = false;  // mean of daily means instead of one joint row mean

  void validate() const;
};

/// "LEAP_MEF" or "LEAP_MEF\SA" depending on use_attention.
std::string variant_tag(const MefConfig& cfg);

struct MefModel {
  nn::Param in_w;  // input_dim × model_dim
  nn::Param in_b;  // model_dim
  nn::AttentionParams attention;
  nn::Param out_w;  // model_dim × |R|
  nn::Param out_b;  // |R|
  bool use_attention = true;

  static MefModel init(std::size_t input_dim, std::size_t num_relations, const MefConfig& cfg, nn::Rng& rng);

  std::size_t input_dim() const { return in_w.value.rows(); }
  std::size_t model_dim() const { return in_w.value.cols(); }
  std::size_t num_relations() const { return out_w.value.cols(); }

  /// Trainable parameters; attention is left out when disabled.
  std::vector<nn::Param*> params();
  std::vector<const nn::Param*> params() const;
  void zero_grad();
};

struct DailyEmbeddings {
  Day day = 0;
  Tensor matrix;  // n_j × input_dim, rows in uid order
  std::vector<Uid> uids;
};

/// Groups quintuple vectors by day. Throws std::out_of_range when the store
/// lacks a uid.
std::vector<DailyEmbeddings> daily_embeddings(std::span<const Quintuple> events, const EmbeddingStore& store);

struct LabelVector {
  Day day = 0;
  std::vector<std::uint8_t> labels;  // length |R|
};

/// One vector per day that has events; label r is 1 iff r occurs that day.
std::vector<LabelVector> make_labels(std::span<const Quintuple> events, std::size_t num_relations);

struct Window {
  Tensor rows;                         // (Σ n_j) × input_dim, oldest day first
  std::vector<std::size_t> day_sizes;  // n_j of each nonempty day in the window
};

/// Rows of days [target − l3, target). `daily` must be sorted by day.
/// Throws std::invalid_argument when the window holds no events.
Window build_window_segments(Day target_day, std::span<const DailyEmbeddings> daily, int l3);
Tensor build_window(Day target_day, std::span<const DailyEmbeddings> daily, int l3);

struct MefCache {
  Tensor window;
  Tensor h;  // after in_proj
  nn::AttentionCache attention;
  Tensor row_weights;  // N × 1 collapse weights
  Tensor pooled;       // 1 × model_dim
  Tensor probs;        // 1 × |R|
};

/// sigmoid(out(mean(attn(in_proj(window))))). `day_sizes` is only read when
/// cfg.per_day_mean is set. Throws std::invalid_argument on a dim mismatch or
/// empty window.
std::vector<double> mef_forward(const Tensor& window, const MefModel& model, const MefConfig& cfg,
                                MefCache* cache = nullptr, std::span<const std::size_t> day_sizes = {});

/// Accumulates gradients given dLoss/dLogits (length |R|).
void mef_backward(const MefCache& cache, MefModel& model, std::span<const double> d_logits);

/// Σ_r BCE(p_r, y_r); writes dLoss/dLogits when `d_logits` is non-null.
double mef_loss(std::span<const double> probs, std::span<const std::uint8_t> labels,
                std::vector<double>* d_logits = nullptr);

std::vector<std::uint8_t> decide(std::span<const double> probs, double threshold);

struct MefData {
  std::vector<DailyEmbeddings> daily;  // every day of every split, sorted
  std::vector<LabelVector> labels;     // aligned with target days of all splits
  std::size_t num_relations = 0;

  static MefData from(const DatasetSplit& split, const EmbeddingStore& store, std::size_t num_relations);
  const LabelVector* labels_for(Day day) const;
};

struct DayPrediction {
  Day day = 0;
  std::vector<double> probs;
  std::vector<std::uint8_t> decisions;
  std::vector<std::uint8_t> labels;
};

struct MefEval {
  metrics::PrfScores prf;
  double loss = 0.0;
  std::vector<DayPrediction> predictions;
  std::size_t skipped_days = 0;  // target days with an empty window
};

/// Scores every day with events in `part`.
MefEval eval_mef(const MefModel& model, std::span<const Quintuple> part, const MefData& data, const MefConfig& cfg);

/// CSV rows (day, relation_id, prob, decision, label).
std::string predictions_to_csv(std::span<const DayPrediction> predictions);

struct MefLogRow {
  int epoch = 0;
  std::string split;
  std::string variant;
  double loss = 0.0;
  double f1 = 0.0;
  double recall = 0.0;
  double precision = 0.0;
};

std::string log_to_csv(std::span<const MefLogRow> rows);

struct MefTrainResult {
  MefModel model;  // best validation F1 (train F1 when valid is empty)
  std::vector<MefLogRow> log;
  int best_epoch = 0;
  int epochs_run = 0;
  std::size_t skipped_days = 0;  // training target days without history
  std::string variant;
};

/// Throws std::invalid_argument when no training day has a usable window.
MefTrainResult train_mef(const DatasetSplit& split, const MefData& data, const MefConfig& cfg, std::uint64_t seed);

}  // namespace leap::mef
