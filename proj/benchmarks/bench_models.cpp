#include <benchmark/benchmark.h>

#include <random>
#include <vector>

#include "leap/mef.hpp"
#include "leap/nn.hpp"
#include "leap/op_ranking.hpp"

using namespace leap;

namespace {

Tensor random_tensor(std::vector<std::size_t> shape, nn::Rng& rng) {
  Tensor t(std::move(shape));
  std::uniform_real_distribution<double> u(-1, 1);
  for (auto& v : t.data()) v = u(rng);
  return t;
}

void BM_SelfAttention(benchmark::State& state) {
  const auto n = static_cast<std::size_t>(state.range(0));
  const std::size_t d = 64;
  auto rng = nn::substream(1, "init");
  auto params = nn::AttentionParams::init(d, rng);
  const auto x = random_tensor({n, d}, rng);
  for (auto _ : state) {
    nn::AttentionCache cache;
    auto y = nn::self_attention(x, params, &cache);
    benchmark::DoNotOptimize(nn::self_attention_backward(cache, params, y));
  }
}
BENCHMARK(BM_SelfAttention)->Arg(16)->Arg(64)->Arg(256);

void BM_Op1TrainStep(benchmark::State& state) {
  op1::Op1Config cfg;
  cfg.entity_dim = static_cast<std::size_t>(state.range(0));
  cfg.text_dim = 16;
  cfg.conv_kernels = 8;
  cfg.history_len = 3;
  const std::size_t v = 200, r = 20;
  auto rng = nn::substream(2, "init");
  op1::Op1State s(v, r, cfg, rng);
  std::vector<DailyGraph> days(3);
  for (auto& g : days) {
    for (Uid e = 0; e < 100; ++e) {
      g.edges.push_back({static_cast<EntityId>(rng() % v), static_cast<RelationId>(rng() % r),
                         static_cast<EntityId>(rng() % v), e});
    }
  }
  const op1::GraphWindow window{&days[0], &days[1], &days[2]};
  op1::QueryBatch batch;
  for (int i = 0; i < 32; ++i) {
    batch.subjects.push_back(static_cast<EntityId>(rng() % v));
    batch.relations.push_back(static_cast<RelationId>(rng() % r));
    batch.objects.push_back(static_cast<EntityId>(rng() % v));
  }
  batch.text = random_tensor({32, cfg.text_dim}, rng);
  auto dropout = nn::substream(2, "dropout");
  for (auto _ : state) {
    s.zero_grad();
    benchmark::DoNotOptimize(op1::op1_loss(s, window, batch, cfg, true, &dropout, true));
  }
}
BENCHMARK(BM_Op1TrainStep)->Arg(32)->Arg(64);

void BM_MefStep(benchmark::State& state) {
  mef::MefConfig cfg;
  cfg.model_dim = static_cast<std::size_t>(state.range(0));
  const std::size_t input = 64, relations = 234, rows = 7 * 20;
  auto rng = nn::substream(3, "init");
  auto model = mef::MefModel::init(input, relations, cfg, rng);
  const auto window = random_tensor({rows, input}, rng);
  std::vector<std::uint8_t> labels(relations);
  for (auto& y : labels) y = static_cast<std::uint8_t>(rng() % 10 == 0);
  for (auto _ : state) {
    model.zero_grad();
    mef::MefCache cache;
    const auto probs = mef::mef_forward(window, model, cfg, &cache);
    std::vector<double> d_logits;
    benchmark::DoNotOptimize(mef::mef_loss(probs, labels, &d_logits));
    mef::mef_backward(cache, model, d_logits);
  }
}
BENCHMARK(BM_MefStep)->Arg(64)->Arg(256);

}  // namespace
