#include "leap/metrics.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>
#include <stdexcept>

namespace leap::metrics {

namespace {

double f1_from(double overlap, double hyp_units, double ref_units) {
  if (ref_units <= 0 || hyp_units <= 0 || overlap <= 0) return 0.0;
  const double precision = overlap / hyp_units;
  const double recall = overlap / ref_units;
  return 2.0 * precision * recall / (precision + recall);
}

double ratio(std::size_t num, std::size_t den) {
  return den == 0 ? 0.0 : static_cast<double>(num) / static_cast<double>(den);
}

std::map<std::vector<std::string>, std::size_t> ngram_counts(std::span<const std::string> tokens, std::size_t n) {
  std::map<std::vector<std::string>, std::size_t> counts;
  if (tokens.size() < n) return counts;
  for (std::size_t i = 0; i + n <= tokens.size(); ++i) {
    ++counts[std::vector<std::string>(tokens.begin() + static_cast<std::ptrdiff_t>(i),
                                      tokens.begin() + static_cast<std::ptrdiff_t>(i + n))];
  }
  return counts;
}

}  // namespace

std::size_t rank_of(const RankedQuery& q) {
  const auto it = std::find(q.ranking.begin(), q.ranking.end(), q.true_index);
  if (it == q.ranking.end()) throw std::invalid_argument("rank_of: true index missing from ranking");
  return static_cast<std::size_t>(it - q.ranking.begin()) + 1;
}

std::map<int, double> hits_at_k_from_ranks(std::span<const std::size_t> ranks, std::span<const int> ks) {
  if (ranks.empty()) throw std::invalid_argument("hits_at_k: no queries");
  std::map<int, double> out;
  for (int k : ks) {
    const auto hits = std::count_if(ranks.begin(), ranks.end(),
                                    [k](std::size_t r) { return r <= static_cast<std::size_t>(k); });
    out[k] = static_cast<double>(hits) / static_cast<double>(ranks.size());
  }
  return out;
}

std::map<int, double> hits_at_k(std::span<const RankedQuery> queries, std::span<const int> ks) {
  std::vector<std::size_t> ranks;
  ranks.reserve(queries.size());
  for (const auto& q : queries) ranks.push_back(rank_of(q));
  return hits_at_k_from_ranks(ranks, ks);
}

std::vector<std::string> rouge_tokenize(std::string_view text) {
  std::vector<std::string> tokens;
  std::string current;
  for (char ch : text) {
    const auto c = static_cast<unsigned char>(ch);
    const bool word = (c >= '0' && c <= '9') || (c >= 'a' && c <= 'z') || (c >= 'A' && c <= 'Z') || c >= 0x80;
    if (word) {
      current.push_back(c >= 'A' && c <= 'Z' ? static_cast<char>(c - 'A' + 'a') : ch);
    } else if (!current.empty()) {
      tokens.push_back(std::move(current));
      current.clear();
    }
  }
  if (!current.empty()) tokens.push_back(std::move(current));
  return tokens;
}

double rouge_n(std::span<const std::string> reference, std::span<const std::string> hypothesis, std::size_t n) {
  if (n == 0) throw std::invalid_argument("rouge_n: n must be positive");
  if (reference.size() < n) return 0.0;
  const auto ref = ngram_counts(reference, n);
  const auto hyp = ngram_counts(hypothesis, n);
  std::size_t overlap = 0;
  for (const auto& [gram, count] : hyp) {
    if (auto it = ref.find(gram); it != ref.end()) overlap += std::min(count, it->second);
  }
  const double hyp_total = hypothesis.size() >= n ? static_cast<double>(hypothesis.size() - n + 1) : 0.0;
  return f1_from(static_cast<double>(overlap), hyp_total, static_cast<double>(reference.size() - n + 1));
}

double rouge_l(std::span<const std::string> reference, std::span<const std::string> hypothesis) {
  if (reference.empty() || hypothesis.empty()) return 0.0;
  std::vector<std::size_t> prev(hypothesis.size() + 1, 0), cur(hypothesis.size() + 1, 0);
  for (std::size_t i = 1; i <= reference.size(); ++i) {
    for (std::size_t j = 1; j <= hypothesis.size(); ++j) {
      cur[j] = reference[i - 1] == hypothesis[j - 1] ? prev[j - 1] + 1 : std::max(prev[j], cur[j - 1]);
    }
    std::swap(prev, cur);
  }
  return f1_from(static_cast<double>(prev[hypothesis.size()]), static_cast<double>(hypothesis.size()),
                 static_cast<double>(reference.size()));
}

RougeTriple rouge(std::string_view reference, std::string_view hypothesis) {
  const auto ref = rouge_tokenize(reference);
  const auto hyp = rouge_tokenize(hypothesis);
  return {rouge_n(ref, hyp, 1), rouge_n(ref, hyp, 2), rouge_l(ref, hyp)};
}

PrfScores multilabel_prf(const BinaryMatrix& y_true, const BinaryMatrix& y_pred) {
  if (y_true.rows != y_pred.rows || y_true.cols != y_pred.cols ||
      y_true.values.size() != y_pred.values.size()) {
    throw std::invalid_argument("multilabel_prf: shape mismatch");
  }
  PrfScores s;
  for (std::size_t i = 0; i < y_true.values.size(); ++i) {
    const bool t = y_true.values[i] != 0;
    const bool p = y_pred.values[i] != 0;
    s.tp += t && p;
    s.fp += !t && p;
    s.fn += t && !p;
  }
  s.precision = ratio(s.tp, s.tp + s.fp);
  s.recall = ratio(s.tp, s.tp + s.fn);
  s.f1 = s.precision + s.recall > 0 ? 2.0 * s.precision * s.recall / (s.precision + s.recall) : 0.0;
  return s;
}

double perplexity(std::span<const double> token_probs) {
  if (token_probs.empty()) throw std::invalid_argument("perplexity: no tokens");
  double nll = 0.0;
  for (double p : token_probs) {
    if (!(p > 0.0 && p <= 1.0)) throw std::invalid_argument("perplexity: probability outside (0, 1]");
    nll -= std::log(p);
  }
  return std::exp(nll / static_cast<double>(token_probs.size()));
}

double wilcoxon_signed_rank(std::span<const double> diffs, Sidedness sidedness) {
  std::vector<double> nonzero;
  for (double d : diffs) {
    if (d != 0.0) nonzero.push_back(d);
  }
  if (nonzero.empty()) throw std::invalid_argument("wilcoxon_signed_rank: all differences are zero");
  const std::size_t m = nonzero.size();
  if (m > kMaxWilcoxonSamples) {
    throw std::invalid_argument("wilcoxon_signed_rank: " + std::to_string(m) +
                                " nonzero differences exceed the exact-enumeration limit of " +
                                std::to_string(kMaxWilcoxonSamples));
  }

  // Doubled midranks keep every rank sum an integer.
  std::vector<std::size_t> order(m);
  std::iota(order.begin(), order.end(), 0);
  std::sort(order.begin(), order.end(),
            [&](std::size_t a, std::size_t b) { return std::abs(nonzero[a]) < std::abs(nonzero[b]); });
  std::vector<std::size_t> doubled_rank(m);
  for (std::size_t i = 0; i < m;) {
    std::size_t j = i;
    while (j + 1 < m && std::abs(nonzero[order[j + 1]]) == std::abs(nonzero[order[i]])) ++j;
    const std::size_t r2 = (i + 1) + (j + 1);
    for (std::size_t k = i; k <= j; ++k) doubled_rank[order[k]] = r2;
    i = j + 1;
  }

  std::size_t observed = 0;
  for (std::size_t i = 0; i < m; ++i) {
    if (nonzero[i] > 0) observed += doubled_rank[i];
  }

  // counts[s] = number of sign patterns whose doubled positive-rank sum is s
  const std::size_t max_sum = m * (m + 1);
  std::vector<std::uint64_t> counts(max_sum + 1, 0);
  counts[0] = 1;
  for (std::size_t r : doubled_rank) {
    for (std::size_t s = max_sum + 1; s-- > r;) counts[s] += counts[s - r];
  }
  const double total = std::ldexp(1.0, static_cast<int>(m));
  std::uint64_t upper = 0, lower = 0;
  for (std::size_t s = 0; s <= max_sum; ++s) {
    if (s >= observed) upper += counts[s];
    if (s <= observed) lower += counts[s];
  }
  const double p_upper = static_cast<double>(upper) / total;
  if (sidedness == Sidedness::one_sided) return p_upper;
  const double p_lower = static_cast<double>(lower) / total;
  return std::min(1.0, 2.0 * std::min(p_upper, p_lower));
}

}  // namespace leap::metrics
