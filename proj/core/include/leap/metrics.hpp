#pragma once

#include <cstddef>
#include <cstdint>
#include <map>
#include <span>
#include <string>
#include <string_view>
#include <vector>

namespace leap::metrics {

// ---- ranking -------------------------------------------------------------

struct RankedQuery {
  std::size_t true_index = 0;
  std::vector<std::size_t> ranking;  // best first, a permutation of candidates
};

/// 1-based position of the true index in the ranking; throws if absent.
std::size_t rank_of(const RankedQuery& q);

/// Fraction of queries whose true index ranks within the top k, per k.
/// Throws std::invalid_argument on an empty query list.
std::map<int, double> hits_at_k(std::span<const RankedQuery> queries, std::span<const int> ks);

/// Same from precomputed 1-based ranks.
std::map<int, double> hits_at_k_from_ranks(std::span<const std::size_t> ranks, std::span<const int> ks);

inline constexpr int kDefaultHits[] = {1, 3, 10};

// ---- generation ----------------------------------------------------------

struct RougeTriple {
  double r1 = 0.0;
  double r2 = 0.0;
  double rl = 0.0;
};

/// Lowercases ASCII and splits on runs of characters that are not ASCII
/// alphanumerics. Bytes >= 0x80 count as word characters so UTF-8 words stay
/// whole.
std::vector<std::string> rouge_tokenize(std::string_view text);

/// F1 of clipped n-gram overlap; 0 when the reference has no n-grams.
double rouge_n(std::span<const std::string> reference, std::span<const std::string> hypothesis, std::size_t n);
/// F1 from the longest common subsequence; 0 for an empty reference.
double rouge_l(std::span<const std::string> reference, std::span<const std::string> hypothesis);

RougeTriple rouge(std::string_view reference, std::string_view hypothesis);

// ---- multi-label classification -----------------------------------------

/// Row-major binary matrix (days × labels).
struct BinaryMatrix {
  std::size_t rows = 0;
  std::size_t cols = 0;
  std::vector<std::uint8_t> values;

  BinaryMatrix() = default;
  BinaryMatrix(std::size_t r, std::size_t c) : rows(r), cols(c), values(r * c, 0) {}
  std::uint8_t& operator()(std::size_t r, std::size_t c) { return values[r * cols + c]; }
  std::uint8_t operator()(std::size_t r, std::size_t c) const { return values[r * cols + c]; }
};

struct PrfScores {
  double f1 = 0.0;
  double recall = 0.0;
  double precision = 0.0;
  std::size_t tp = 0;
  std::size_t fp = 0;
  std::size_t fn = 0;
};

/// Micro-averaged over the whole matrix; 0/0 is taken as 0.
PrfScores multilabel_prf(const BinaryMatrix& y_true, const BinaryMatrix& y_pred);

// ---- language modelling --------------------------------------------------

/// exp(mean(−ln p)). Throws for an empty list or p outside (0, 1].
double perplexity(std::span<const double> token_probs);

// ---- significance --------------------------------------------------------

enum class Sidedness { one_sided, two_sided };

/// Largest sample the exact test will enumerate.
inline constexpr std::size_t kMaxWilcoxonSamples = 20;

/// Exact Wilcoxon signed-rank test over paired differences. Zeros are
/// dropped, |d| ranked with midranks, W+ is the rank sum of positive
/// differences. One-sided p = P(W >= W+) (alternative: first sample larger);
/// two-sided p = min(1, 2·min(P(W >= W+), P(W <= W+))).
/// Throws std::invalid_argument when every difference is zero or more than
/// 20 nonzero differences remain.
double wilcoxon_signed_rank(std::span<const double> diffs, Sidedness sidedness);

}  // namespace leap::metrics
