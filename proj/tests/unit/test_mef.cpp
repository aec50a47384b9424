#include <gtest/gtest.h>

#include <algorithm>
#include <cmath>
#include <random>

#include "fixtures.hpp"
#include "leap/mef.hpp"
#include "oracles.hpp"

using namespace leap;
using namespace leap::mef;
using leap::testing::random_tensor;

namespace {

DailyEmbeddings day_block(Day day, std::size_t n, double base) {
  DailyEmbeddings d;
  d.day = day;
  d.matrix = Tensor::matrix(n, 2);
  for (std::size_t i = 0; i < n; ++i) {
    d.matrix(i, 0) = base + static_cast<double>(i);
    d.matrix(i, 1) = -base;
    d.uids.push_back(static_cast<Uid>(day * 100 + static_cast<int>(i)));
  }
  return d;
}

MefConfig small_cfg(bool attention) {
  MefConfig cfg;
  cfg.model_dim = 5;
  cfg.use_attention = attention;
  return cfg;
}

MefModel random_model(std::size_t in, std::size_t r, const MefConfig& cfg, std::uint64_t seed) {
  auto rng = nn::substream(seed, "init");
  auto m = MefModel::init(in, r, cfg, rng);
  for (auto* p : m.params()) p->value = random_tensor(p->value.shape(), rng, 0.7);
  return m;
}

double sig(double x) { return 1 / (1 + std::exp(-x)); }

}  // namespace

TEST(MefConfigTest, ValidationAndTag) {
  MefConfig cfg;
  EXPECT_NO_THROW(cfg.validate());
  EXPECT_EQ(variant_tag(cfg), "LEAP_MEF");
  cfg.use_attention = false;
  EXPECT_EQ(variant_tag(cfg), "LEAP_MEF\\SA");
  cfg.threshold = 1.0;
  EXPECT_THROW(cfg.validate(), std::invalid_argument);
  cfg = {};
  cfg.window = 0;
  EXPECT_THROW(cfg.validate(), std::invalid_argument);
}

TEST(Window, CountsRows) {
  std::vector<DailyEmbeddings> daily{day_block(2, 3, 1), day_block(4, 2, 10), day_block(5, 4, 20)};
  const auto w = build_window_segments(5, daily, 3);
  EXPECT_EQ(w.rows.rows(), 5u);
  EXPECT_EQ(w.day_sizes, (std::vector<std::size_t>{3, 2}));
  EXPECT_EQ(w.rows(3, 0), 10.0);
}

TEST(Window, PreviousDayOnly) {
  std::vector<DailyEmbeddings> daily{day_block(2, 3, 1), day_block(3, 2, 10)};
  EXPECT_EQ(build_window(4, daily, 1), daily[1].matrix);
  EXPECT_THROW(build_window(5, daily, 1), std::invalid_argument);
  EXPECT_THROW(build_window(2, daily, 7), std::invalid_argument);
}

TEST(Window, MatchesGatherOracle) {
  std::mt19937_64 rng(1);
  for (int trial = 0; trial < 50; ++trial) {
    std::vector<Quintuple> events;
    for (int i = 0; i < 40; ++i) {
      events.push_back({0, 0, 0, static_cast<Day>(rng() % 15), "", static_cast<Uid>(i)});
    }
    std::shuffle(events.begin(), events.end(), rng);
    EmbeddingStore store(3);
    for (const auto& q : events) {
      const double u = static_cast<double>(q.uid);
      store.add(q.uid, std::vector<double>{u, u * 2, -u});
    }
    const auto daily = daily_embeddings(events, store);
    const Day target = static_cast<Day>(rng() % 16);
    const int l3 = 1 + static_cast<int>(rng() % 6);
    std::vector<Quintuple> in_range;
    for (const auto& q : events) {
      if (q.day >= target - l3 && q.day < target) in_range.push_back(q);
    }
    std::sort(in_range.begin(), in_range.end(),
              [](const auto& a, const auto& b) { return a.day != b.day ? a.day < b.day : a.uid < b.uid; });
    if (in_range.empty()) {
      EXPECT_THROW(build_window(target, daily, l3), std::invalid_argument);
      continue;
    }
    const auto w = build_window(target, daily, l3);
    ASSERT_EQ(w.rows(), in_range.size());
    for (std::size_t r = 0; r < in_range.size(); ++r) EXPECT_EQ(w(r, 0), static_cast<double>(in_range[r].uid));
  }
}

TEST(Labels, OrOverDay) {
  std::vector<Quintuple> ev{{0, 2, 1, 0, "", 0}, {0, 2, 1, 0, "", 1}, {1, 0, 1, 0, "", 2}, {1, 1, 0, 3, "", 3}};
  const auto labels = make_labels(ev, 4);
  ASSERT_EQ(labels.size(), 2u);
  EXPECT_EQ(labels[0].labels, (std::vector<std::uint8_t>{1, 0, 1, 0}));
  EXPECT_EQ(labels[1].day, 3);
  EXPECT_EQ(labels[1].labels, (std::vector<std::uint8_t>{0, 1, 0, 0}));
  EXPECT_THROW(make_labels(ev, 2), std::out_of_range);
}

TEST(Forward, SingleRowIdentities) {
  const auto x = Tensor::from_rows({{0.3, -0.8, 1.1}});
  for (bool attention : {true, false}) {
    const auto cfg = small_cfg(attention);
    const auto m = random_model(3, 4, cfg, 2);
    MefCache cache;
    mef_forward(x, m, cfg, &cache);
    auto expect = nn::linear(x, m.in_w.value, m.in_b.value);
    if (attention) expect = nn::matmul(expect, m.attention.w_v.value);
    for (std::size_t j = 0; j < 5; ++j) EXPECT_NEAR(cache.pooled(0, j), expect(0, j), 1e-12);
  }
}

TEST(Forward, ZeroOutputLayerDecidesNothing) {
  const auto cfg = small_cfg(true);
  auto m = random_model(3, 6, cfg, 3);
  m.out_w.value.fill(0.0);
  m.out_b.value.fill(0.0);
  nn::Rng rng(3);
  const auto probs = mef_forward(random_tensor({4, 3}, rng), m, cfg);
  for (double p : probs) EXPECT_EQ(p, 0.5);
  for (auto d : decide(probs, cfg.threshold)) EXPECT_EQ(d, 0);
}

TEST(Forward, IdentityProjectionReducesToMeanHead) {
  auto cfg = small_cfg(false);
  cfg.model_dim = 3;
  auto m = random_model(3, 2, cfg, 4);
  m.in_w.value = Tensor::from_rows({{1, 0, 0}, {0, 1, 0}, {0, 0, 1}});
  m.in_b.value.fill(0.0);
  nn::Rng rng(4);
  const auto x = random_tensor({5, 3}, rng);
  const auto probs = mef_forward(x, m, cfg);
  for (std::size_t r = 0; r < 2; ++r) {
    double z = m.out_b.value[r];
    for (std::size_t c = 0; c < 3; ++c) {
      double mean = 0;
      for (std::size_t i = 0; i < 5; ++i) mean += x(i, c) / 5;
      z += mean * m.out_w.value(c, r);
    }
    EXPECT_NEAR(probs[r], sig(z), 1e-12);
  }
}

TEST(Forward, MatchesDenseOracle) {
  const auto cfg = small_cfg(true);
  const auto m = random_model(3, 4, cfg, 5);
  nn::Rng rng(5);
  const auto x = random_tensor({4, 3}, rng);
  Tensor h = Tensor::matrix(4, 5);
  for (std::size_t i = 0; i < 4; ++i)
    for (std::size_t j = 0; j < 5; ++j) {
      h(i, j) = m.in_b.value[j];
      for (std::size_t k = 0; k < 3; ++k) h(i, j) += x(i, k) * m.in_w.value(k, j);
    }
  const auto a = leap::testing::oracle_attention(h, m.attention.w_q.value, m.attention.w_k.value,
                                                 m.attention.w_v.value);
  const auto probs = mef_forward(x, m, cfg);
  for (std::size_t r = 0; r < 4; ++r) {
    double z = m.out_b.value[r];
    for (std::size_t j = 0; j < 5; ++j) {
      double mean = 0;
      for (std::size_t i = 0; i < 4; ++i) mean += a(i, j) / 4;
      z += mean * m.out_w.value(j, r);
    }
    EXPECT_NEAR(probs[r], sig(z), 1e-6);
  }
}

TEST(Forward, PermutationInvariant) {
  const auto cfg = small_cfg(true);
  const auto m = random_model(3, 4, cfg, 6);
  nn::Rng rng(6);
  const auto x = random_tensor({6, 3}, rng);
  Tensor px = Tensor::matrix(6, 3);
  const std::size_t perm[] = {5, 3, 1, 0, 2, 4};
  for (std::size_t i = 0; i < 6; ++i)
    for (std::size_t c = 0; c < 3; ++c) px(i, c) = x(perm[i], c);
  const auto a = mef_forward(x, m, cfg), b = mef_forward(px, m, cfg);
  for (std::size_t r = 0; r < 4; ++r) {
    EXPECT_NEAR(a[r], b[r], 1e-9);
    EXPECT_GT(a[r], 0.0);
    EXPECT_LT(a[r], 1.0);
  }
}

TEST(Forward, PerDayMeanWeightsDaysEqually) {
  auto cfg = small_cfg(false);
  cfg.per_day_mean = true;
  const auto m = random_model(2, 3, cfg, 7);
  const auto x = Tensor::from_rows({{1, 0}, {3, 0}, {5, 0}, {0, 2}});
  const std::vector<std::size_t> sizes{3, 1};
  MefCache cache;
  mef_forward(x, m, cfg, &cache, sizes);
  EXPECT_NEAR(cache.row_weights[0], 1.0 / 6, 1e-15);
  EXPECT_NEAR(cache.row_weights[3], 0.5, 1e-15);
  const std::vector<std::size_t> wrong{2, 1};
  EXPECT_THROW(mef_forward(x, m, cfg, nullptr, wrong), std::invalid_argument);
}

TEST(Forward, DimMismatch) {
  const auto cfg = small_cfg(true);
  const auto m = random_model(3, 2, cfg, 8);
  EXPECT_THROW(mef_forward(Tensor::matrix(2, 4), m, cfg), std::invalid_argument);
}

TEST(Decide, StrictThreshold) {
  const double p[] = {0.5, 0.5000001, 0.2, 0.99};
  EXPECT_EQ(decide(p, 0.5), (std::vector<std::uint8_t>{0, 1, 0, 1}));
}

TEST(Loss, SumOfBinaryCrossEntropies) {
  const double p[] = {0.9, 0.2, 0.6};
  const std::uint8_t y[] = {1, 0, 0};
  std::vector<double> d;
  const double loss = mef_loss(p, y, &d);
  EXPECT_NEAR(loss, -std::log(0.9) - std::log(0.8) - std::log(0.4), 1e-12);
  EXPECT_NEAR(d[0], -0.1, 1e-12);
  EXPECT_NEAR(d[2], 0.6, 1e-12);
}

TEST(Model, AblationDropsAttentionParams) {
  nn::Rng rng(9);
  EXPECT_EQ(MefModel::init(4, 3, small_cfg(true), rng).params().size(), 7u);
  EXPECT_EQ(MefModel::init(4, 3, small_cfg(false), rng).params().size(), 4u);
}

TEST(Eval, PerfectAndDegenerate) {
  const auto d = leap::testing::periodic_dataset(30);
  const auto store = leap::testing::relation_onehot_store(d, 0.0);
  const auto split = leap::testing::train_only(d);
  const auto data = MefData::from(split, store, d.vocab.num_relations());
  auto cfg = small_cfg(false);
  auto m = random_model(8, d.vocab.num_relations(), cfg, 10);
  m.out_w.value.fill(0.0);
  m.out_b.value.fill(0.0);
  const auto zero = eval_mef(m, split.train, data, cfg);
  EXPECT_EQ(zero.prf.f1 + zero.prf.recall + zero.prf.precision, 0.0);
  EXPECT_EQ(zero.skipped_days, 1u);  // day 0 has no history
  EXPECT_EQ(zero.predictions.size(), 29u);
  m.out_b.value.fill(50.0);
  const auto all_on = eval_mef(m, split.train, data, cfg);
  EXPECT_EQ(all_on.prf.recall, 1.0);
  const auto csv = predictions_to_csv(all_on.predictions);
  EXPECT_EQ(csv.substr(0, csv.find('\n')), "day,relation_id,prob,decision,label");
  EXPECT_EQ(std::count(csv.begin(), csv.end(), '\n'), 1 + 29 * static_cast<long>(d.vocab.num_relations()));
}

TEST(Train, DeterministicWithAblationTag) {
  const auto d = leap::testing::periodic_dataset(24);
  const auto store = leap::testing::relation_onehot_store(d);
  const auto split = chronological_split(d.events, {0.6, 0.2, 0.2});
  const auto data = MefData::from(split, store, d.vocab.num_relations());
  auto cfg = small_cfg(true);
  cfg.epochs = 4;
  cfg.lr = 1e-2;
  const auto a = train_mef(split, data, cfg, 5), b = train_mef(split, data, cfg, 5);
  EXPECT_EQ(log_to_csv(a.log), log_to_csv(b.log));
  EXPECT_EQ(a.variant, "LEAP_MEF");
  cfg.use_attention = false;
  const auto c = train_mef(split, data, cfg, 5);
  EXPECT_EQ(c.variant, "LEAP_MEF\\SA");
  EXPECT_NE(log_to_csv(c.log).find("LEAP_MEF\\SA"), std::string::npos);
  EXPECT_EQ(log_to_csv(c.log).substr(0, 45), "epoch,split,variant,loss,f1,recall,precision\n");
}

TEST(Train, NoUsableDay) {
  const auto d = leap::testing::make_dataset({{"a", "r", "b", "2012-01-01", ""}});
  const auto store = leap::testing::relation_onehot_store(d);
  const auto split = leap::testing::train_only(d);
  const auto data = MefData::from(split, store, 1);
  EXPECT_THROW(train_mef(split, data, small_cfg(true), 0), std::invalid_argument);
}
