#include <benchmark/benchmark.h>

#include <random>
#include <string>
#include <vector>

#include "leap/metrics.hpp"

namespace {

std::string random_sentence(std::mt19937_64& rng, std::size_t words) {
  static const char* vocab[] = {"police", "arrested", "a", "citizen", "in", "delhi", "the", "government",
                                "of",     "india",    "met", "with",   "officials", "court", "charged", "minister"};
  std::string out;
  for (std::size_t i = 0; i < words; ++i) {
    if (i) out += ' ';
    out += vocab[rng() % 16];
  }
  return out;
}

void BM_Rouge(benchmark::State& state) {
  std::mt19937_64 rng(1);
  const auto words = static_cast<std::size_t>(state.range(0));
  const auto ref = random_sentence(rng, words), hyp = random_sentence(rng, words);
  for (auto _ : state) benchmark::DoNotOptimize(leap::metrics::rouge(ref, hyp));
}
BENCHMARK(BM_Rouge)->Arg(16)->Arg(64)->Arg(256);

void BM_WilcoxonExact(benchmark::State& state) {
  std::mt19937_64 rng(2);
  std::normal_distribution<double> n(0.2, 1.0);
  std::vector<double> diffs(static_cast<std::size_t>(state.range(0)));
  for (auto& d : diffs) d = n(rng);
  for (auto _ : state) {
    benchmark::DoNotOptimize(leap::metrics::wilcoxon_signed_rank(diffs, leap::metrics::Sidedness::two_sided));
  }
}
BENCHMARK(BM_WilcoxonExact)->Arg(10)->Arg(15)->Arg(20);

void BM_MultilabelPrf(benchmark::State& state) {
  std::mt19937_64 rng(3);
  leap::metrics::BinaryMatrix t(365, 234), p(365, 234);
  for (auto& v : t.values) v = static_cast<std::uint8_t>(rng() % 10 == 0);
  for (auto& v : p.values) v = static_cast<std::uint8_t>(rng() % 8 == 0);
  for (auto _ : state) benchmark::DoNotOptimize(leap::metrics::multilabel_prf(t, p));
}
BENCHMARK(BM_MultilabelPrf);

}  // namespace
