#include <benchmark/benchmark.h>

#include <random>
#include <sstream>
#include <vector>

#include "leap/embedding.hpp"

namespace {

leap::EmbeddingStore make_store(std::size_t records, std::uint32_t dim) {
  std::mt19937_64 rng(4);
  std::uniform_real_distribution<float> u(-1, 1);
  leap::EmbeddingStore store(dim, "bench");
  std::vector<float> v(dim);
  for (std::size_t i = 0; i < records; ++i) {
    for (auto& x : v) x = u(rng);
    store.add(static_cast<leap::Uid>(i), std::span<const float>(v));
  }
  return store;
}

void BM_StoreWrite(benchmark::State& state) {
  const auto store = make_store(static_cast<std::size_t>(state.range(0)), 64);
  for (auto _ : state) {
    std::ostringstream out;
    leap::write_store(out, store);
    benchmark::DoNotOptimize(out.str().size());
  }
  state.SetItemsProcessed(state.iterations() * state.range(0));
}
BENCHMARK(BM_StoreWrite)->Arg(1000)->Arg(10000);

void BM_StoreRead(benchmark::State& state) {
  std::ostringstream out;
  leap::write_store(out, make_store(static_cast<std::size_t>(state.range(0)), 64));
  const auto bytes = out.str();
  for (auto _ : state) {
    std::istringstream in(bytes);
    benchmark::DoNotOptimize(leap::read_store(in).size());
  }
  state.SetItemsProcessed(state.iterations() * state.range(0));
}
BENCHMARK(BM_StoreRead)->Arg(1000)->Arg(10000);

}  // namespace
