#include "gradient_suite.hpp"

#include "leap/mef.hpp"
#include "leap/op_ranking.hpp"
#include "oracles.hpp"

namespace leap::testing {

namespace {

using nn::Param;

double probe(const Tensor& y, const Tensor& g) {
  double s = 0;
  for (std::size_t i = 0; i < y.size(); ++i) s += y[i] * g[i];
  return s;
}

void add_into(Tensor& dst, const Tensor& src) {
  for (std::size_t i = 0; i < dst.size(); ++i) dst[i] += src[i];
}

GradCase check(std::string name, const std::function<double()>& loss, const std::function<void()>& backward,
               std::vector<Param*> params) {
  return {std::move(name), nn::finite_diff_check(loss, backward, params)};
}

// Small graph over 6 entities and 2 relations spread across three days.
struct Op1Fixture {
  op1::Op1Config cfg;
  op1::Op1State state;
  std::vector<DailyGraph> days;
  op1::GraphWindow window;
  op1::QueryBatch batch;

  explicit Op1Fixture(std::uint64_t seed) {
    cfg.entity_dim = 6;
    cfg.text_dim = 4;
    cfg.conv_kernels = 2;
    cfg.conv_width = 3;
    cfg.rgcn_dropout = 0.0;
    cfg.history_len = 3;
    auto rng = nn::substream(seed, "init");
    state = op1::Op1State(6, 2, cfg, rng);
    // Scaled-up random values keep pre-activations away from the ReLU kink.
    for (auto* p : state.params()) p->value = random_tensor(p->value.shape(), rng, 0.6);
    auto edge = [](EntityId s, RelationId r, EntityId o, Uid uid) { return DailyGraph::Edge{s, r, o, uid}; };
    days.resize(3);
    days[0].day = 0;
    days[0].edges = {edge(0, 0, 1, 0), edge(2, 1, 3, 1)};
    days[1].day = 1;
    days[1].edges = {edge(1, 1, 4, 2), edge(4, 0, 5, 3), edge(0, 0, 2, 4)};
    days[2].day = 2;
    days[2].edges = {edge(5, 1, 0, 5)};
    for (auto& d : days) window.push_back(&d);
    batch.subjects = {0, 3, 5};
    batch.relations = {1, 0, 1};
    batch.objects = {2, 4, 1};
    batch.text = random_tensor({3, 4}, rng);
  }
};

}  // namespace

GradCase grad_linear() {
  nn::Rng rng(101);
  Param w("w", random_tensor({3, 5}, rng)), b("b", random_tensor({5}, rng)), x("x", random_tensor({4, 3}, rng));
  const Tensor g = random_tensor({4, 5}, rng);
  return check(
      "linear", [&] { return probe(nn::linear(x.value, w.value, b.value), g); },
      [&] { add_into(x.grad, nn::linear_backward(x.value, w.value, g, w.grad, b.grad)); }, {&w, &b, &x});
}

GradCase grad_attention() {
  nn::Rng rng(102);
  auto p = nn::AttentionParams::init(5, rng);
  Param x("x", random_tensor({4, 5}, rng));
  const Tensor g = random_tensor({4, 5}, rng);
  return check(
      "self_attention", [&] { return probe(nn::self_attention(x.value, p), g); },
      [&] {
        nn::AttentionCache cache;
        nn::self_attention(x.value, p, &cache);
        add_into(x.grad, nn::self_attention_backward(cache, p, g));
      },
      {&p.w_q, &p.w_k, &p.w_v, &x});
}

GradCase grad_gru() {
  nn::Rng rng(103);
  auto p = nn::GruParams::init(4, 5, rng);
  for (auto* q : p.params()) q->value = random_tensor(q->value.shape(), rng, 0.7);
  Param x("x", random_tensor({2, 4}, rng)), h("h", random_tensor({2, 5}, rng));
  const Tensor g = random_tensor({2, 5}, rng);
  auto params = p.params();
  params.push_back(&x);
  params.push_back(&h);
  return check(
      "gru_cell", [&] { return probe(nn::gru_step(x.value, h.value, p), g); },
      [&] {
        nn::GruCache cache;
        nn::gru_step(x.value, h.value, p, &cache);
        auto d = nn::gru_step_backward(cache, p, g);
        add_into(x.grad, d.dx);
        add_into(h.grad, d.dh);
      },
      params);
}

GradCase grad_conv1d() {
  nn::Rng rng(104);
  Param in("input", random_tensor({3, 6}, rng)), k("kernels", random_tensor({2, 3, 3}, rng)),
      b("bias", random_tensor({2}, rng));
  const Tensor g = random_tensor({2, 6}, rng);
  return check(
      "conv1d_same", [&] { return probe(nn::conv1d_same(in.value, k.value, b.value), g); },
      [&] { add_into(in.grad, nn::conv1d_same_backward(in.value, k.value, g, k.grad, b.grad)); }, {&in, &k, &b});
}

GradCase grad_rgcn() {
  Op1Fixture f(105);
  nn::Rng rng(5);
  const Tensor g = random_tensor({6, 6}, rng);
  std::vector<Param*> params{&f.state.entity_emb};
  for (auto& p : f.state.rgcn_relation) params.push_back(&p);
  for (auto& p : f.state.rgcn_self) params.push_back(&p);
  return check(
      "rgcn_layers", [&] { return probe(op1::rgcn_forward(f.window, f.state, f.cfg, false), g); },
      [&] {
        op1::RgcnCache cache;
        op1::rgcn_forward(f.window, f.state, f.cfg, false, nullptr, &cache);
        op1::rgcn_backward(cache, f.state, g);
      },
      params);
}

GradCase grad_evolve() {
  Op1Fixture f(106);
  nn::Rng rng(6);
  Param ent("entities", random_tensor({6, 6}, rng));
  const Tensor g = random_tensor({4, 6}, rng);
  auto params = f.state.gru.params();
  params.push_back(&f.state.relation_emb);
  params.push_back(&ent);
  return check(
      "relation_gru", [&] { return probe(op1::evolve_relations(f.state, f.window, ent.value), g); },
      [&] {
        op1::EvolveCache cache;
        op1::evolve_relations(f.state, f.window, ent.value, &cache);
        op1::evolve_relations_backward(cache, f.state, g, ent.grad);
      },
      params);
}

GradCase grad_decoder() {
  Op1Fixture f(107);
  nn::Rng rng(7);
  Param ent("entities", random_tensor({6, 6}, rng)), rel("relations", random_tensor({4, 6}, rng));
  const Tensor g = random_tensor({3, 6}, rng);
  std::vector<Param*> params{&f.state.text_proj, &f.state.conv_kernels, &f.state.conv_bias,
                             &f.state.fc_w,      &f.state.fc_b,         &ent,
                             &rel};
  return check(
      "convtranse",
      [&] {
        op1::DecoderCache cache;
        op1::convtranse_scores(f.batch, f.state, ent.value, rel.value, &cache);
        return probe(cache.scores, g);
      },
      [&] {
        op1::DecoderCache cache;
        op1::convtranse_scores(f.batch, f.state, ent.value, rel.value, &cache);
        auto [de, dr] = op1::convtranse_backward(cache, f.batch, f.state, ent.value, rel.value, g);
        add_into(ent.grad, de);
        add_into(rel.grad, dr);
      },
      params);
}

GradCase grad_op1_stack() {
  Op1Fixture f(108);
  return check(
      "op1_full_stack", [&] { return op1::op1_loss(f.state, f.window, f.batch, f.cfg, false, nullptr, false); },
      [&] { op1::op1_loss(f.state, f.window, f.batch, f.cfg, false, nullptr, true); }, f.state.params());
}

GradCase grad_mef_head(bool use_attention, bool per_day_mean) {
  mef::MefConfig cfg;
  cfg.model_dim = 6;
  cfg.use_attention = use_attention;
  cfg.per_day_mean = per_day_mean;
  auto rng = nn::substream(109, "init");
  auto model = mef::MefModel::init(5, 4, cfg, rng);
  for (auto* p : model.params()) p->value = random_tensor(p->value.shape(), rng, 0.6);
  const Tensor window = random_tensor({7, 5}, rng);
  const std::vector<std::size_t> sizes{3, 1, 3};
  const std::vector<std::uint8_t> labels{1, 0, 0, 1};
  std::string name = use_attention ? "mef_head" : "mef_head_no_attention";
  if (per_day_mean) name += "_per_day";
  return check(
      name, [&] { return mef::mef_loss(mef::mef_forward(window, model, cfg, nullptr, sizes), labels); },
      [&] {
        mef::MefCache cache;
        const auto probs = mef::mef_forward(window, model, cfg, &cache, sizes);
        std::vector<double> d;
        mef::mef_loss(probs, labels, &d);
        mef::mef_backward(cache, model, d);
      },
      model.params());
}

std::vector<GradCase> gradient_suite() {
  return {grad_linear(),         grad_attention(),           grad_gru(),
          grad_conv1d(),         grad_rgcn(),                grad_evolve(),
          grad_decoder(),        grad_op1_stack(),           grad_mef_head(true, false),
          grad_mef_head(false, false), grad_mef_head(true, true)};
}

}  // namespace leap::testing
