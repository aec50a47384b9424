#include "leap/nn.hpp"

#include <algorithm>
#include <cmath>
#include <istream>
#include <limits>
#include <ostream>
#include <stdexcept>
#include <unordered_map>

#include "binary_io.hpp"
#include "leap/hashing.hpp"

namespace leap::nn {

namespace {

void require(bool ok, const char* what) {
  if (!ok) throw std::invalid_argument(what);
}

constexpr char kCheckpointMagic[8] = {'L', 'E', 'A', 'P', 'C', 'K', 'P', 'T'};
constexpr std::uint32_t kCheckpointVersion = 1;

}  // namespace

Rng substream(std::uint64_t seed, std::string_view name) {
  std::uint64_t state = fnv1a64(name, seed ^ 0x6a09e667f3bcc909ULL);
  return Rng(splitmix64(state));
}

Param::Param(std::string param_name, Tensor init)
    : name(std::move(param_name)),
      value(std::move(init)),
      grad(value.shape()),
      adam_m(value.shape()),
      adam_v(value.shape()) {}

Tensor xavier_uniform(std::vector<std::size_t> shape, Rng& rng) {
  Tensor t(shape);
  const std::size_t fan_out = shape.back();
  const std::size_t fan_in = shape.size() >= 2 ? shape[shape.size() - 2] : 1;
  const double bound = std::sqrt(6.0 / static_cast<double>(fan_in + fan_out));
  std::uniform_real_distribution<double> dist(-bound, bound);
  for (auto& v : t.data()) v = dist(rng);
  return t;
}

Tensor normal_init(std::vector<std::size_t> shape, double stddev, Rng& rng) {
  Tensor t(std::move(shape));
  std::normal_distribution<double> dist(0.0, stddev);
  for (auto& v : t.data()) v = dist(rng);
  return t;
}

// ---- dense kernels -------------------------------------------------------

Tensor matmul(const Tensor& a, const Tensor& b) {
  require(a.cols() == b.rows(), "matmul: shape mismatch");
  const std::size_t n = a.rows(), p = a.cols(), q = b.cols();
  Tensor out = Tensor::matrix(n, q);
  for (std::size_t i = 0; i < n; ++i) {
    double* o = out.row(i).data();
    for (std::size_t k = 0; k < p; ++k) {
      const double aik = a(i, k);
      if (aik == 0.0) continue;
      const double* bk = b.row(k).data();
      for (std::size_t j = 0; j < q; ++j) o[j] += aik * bk[j];
    }
  }
  return out;
}

Tensor matmul_tn(const Tensor& a, const Tensor& b) {
  require(a.rows() == b.rows(), "matmul_tn: shape mismatch");
  const std::size_t n = a.rows(), p = a.cols(), q = b.cols();
  Tensor out = Tensor::matrix(p, q);
  for (std::size_t i = 0; i < n; ++i) {
    const double* bi = b.row(i).data();
    for (std::size_t k = 0; k < p; ++k) {
      const double aik = a(i, k);
      if (aik == 0.0) continue;
      double* o = out.row(k).data();
      for (std::size_t j = 0; j < q; ++j) o[j] += aik * bi[j];
    }
  }
  return out;
}

Tensor matmul_nt(const Tensor& a, const Tensor& b) {
  require(a.cols() == b.cols(), "matmul_nt: shape mismatch");
  const std::size_t n = a.rows(), p = a.cols(), q = b.rows();
  Tensor out = Tensor::matrix(n, q);
  for (std::size_t i = 0; i < n; ++i) {
    const double* ai = a.row(i).data();
    for (std::size_t j = 0; j < q; ++j) {
      const double* bj = b.row(j).data();
      double s = 0.0;
      for (std::size_t k = 0; k < p; ++k) s += ai[k] * bj[k];
      out(i, j) = s;
    }
  }
  return out;
}

void add_inplace(Tensor& dst, const Tensor& src) {
  require(dst.size() == src.size(), "add_inplace: size mismatch");
  auto d = dst.data();
  auto s = src.data();
  for (std::size_t i = 0; i < d.size(); ++i) d[i] += s[i];
}

Tensor column_sums(const Tensor& x) {
  Tensor out = Tensor::vector(x.cols());
  for (std::size_t i = 0; i < x.rows(); ++i) {
    for (std::size_t j = 0; j < x.cols(); ++j) out[j] += x(i, j);
  }
  return out;
}

Tensor column_means(const Tensor& x) {
  require(x.rows() > 0, "column_means: no rows");
  Tensor out = column_sums(x);
  for (auto& v : out.data()) v /= static_cast<double>(x.rows());
  return out;
}

// ---- layers --------------------------------------------------------------

Tensor linear(const Tensor& x, const Tensor& w, const Tensor& b) {
  require(x.cols() == w.rows() && b.size() == w.cols(), "linear: shape mismatch");
  Tensor y = matmul(x, w);
  for (std::size_t i = 0; i < y.rows(); ++i) {
    for (std::size_t j = 0; j < y.cols(); ++j) y(i, j) += b[j];
  }
  return y;
}

Tensor linear_backward(const Tensor& x, const Tensor& w, const Tensor& dy, Tensor& dw, Tensor& db) {
  require(dy.rows() == x.rows() && dy.cols() == w.cols(), "linear_backward: shape mismatch");
  add_inplace(dw, matmul_tn(x, dy));
  add_inplace(db, column_sums(dy));
  return matmul_nt(dy, w);
}

Tensor softmax_rows(const Tensor& x) {
  Tensor y = x;
  for (std::size_t i = 0; i < y.rows(); ++i) {
    auto row = y.row(i);
    const double m = *std::max_element(row.begin(), row.end());
    double sum = 0.0;
    for (auto& v : row) {
      v = std::exp(v - m);
      sum += v;
    }
    for (auto& v : row) v /= sum;
  }
  return y;
}

Tensor softmax_rows_backward(const Tensor& y, const Tensor& dy) {
  Tensor dx = Tensor::matrix(y.rows(), y.cols());
  for (std::size_t i = 0; i < y.rows(); ++i) {
    double dot = 0.0;
    for (std::size_t j = 0; j < y.cols(); ++j) dot += dy(i, j) * y(i, j);
    for (std::size_t j = 0; j < y.cols(); ++j) dx(i, j) = y(i, j) * (dy(i, j) - dot);
  }
  return dx;
}

double sigmoid(double x) {
  if (x >= 0) return 1.0 / (1.0 + std::exp(-x));
  const double e = std::exp(x);
  return e / (1.0 + e);
}

Tensor sigmoid(const Tensor& x) {
  Tensor y = x;
  for (auto& v : y.data()) v = sigmoid(v);
  return y;
}

Tensor relu(const Tensor& x) {
  Tensor y = x;
  for (auto& v : y.data()) v = std::max(0.0, v);
  return y;
}

Tensor relu_backward(const Tensor& x, const Tensor& dy) {
  Tensor dx = dy;
  auto xs = x.data();
  auto d = dx.data();
  for (std::size_t i = 0; i < d.size(); ++i) {
    if (xs[i] <= 0.0) d[i] = 0.0;
  }
  return dx;
}

DropoutResult dropout(const Tensor& x, double rate, bool training, Rng& rng) {
  DropoutResult out{x, Tensor(x.shape(), 1.0)};
  if (!training || rate <= 0.0) return out;
  const double keep = 1.0 - rate;
  std::uniform_real_distribution<double> u(0.0, 1.0);
  auto m = out.mask.data();
  auto y = out.output.data();
  for (std::size_t i = 0; i < m.size(); ++i) {
    m[i] = u(rng) < keep ? 1.0 / keep : 0.0;
    y[i] *= m[i];
  }
  return out;
}

AttentionParams AttentionParams::init(std::size_t d_model, Rng& rng, std::string_view prefix) {
  const std::string p(prefix);
  return AttentionParams{Param(p + ".w_q", xavier_uniform({d_model, d_model}, rng)),
                         Param(p + ".w_k", xavier_uniform({d_model, d_model}, rng)),
                         Param(p + ".w_v", xavier_uniform({d_model, d_model}, rng))};
}

Tensor self_attention(const Tensor& x, const AttentionParams& p, AttentionCache* cache) {
  const std::size_t d = x.cols();
  require(x.rows() >= 1, "self_attention: empty input");
  require(p.w_q.value.rows() == d && p.w_q.value.cols() == d && p.w_k.value.same_shape(p.w_q.value) &&
              p.w_v.value.same_shape(p.w_q.value),
          "self_attention: shape mismatch");
  Tensor q = matmul(x, p.w_q.value);
  Tensor k = matmul(x, p.w_k.value);
  Tensor v = matmul(x, p.w_v.value);
  Tensor scores = matmul_nt(q, k);
  const double scale = 1.0 / std::sqrt(static_cast<double>(d));
  for (auto& s : scores.data()) s *= scale;
  Tensor probs = softmax_rows(scores);
  Tensor out = matmul(probs, v);
  if (cache) *cache = AttentionCache{x, std::move(q), std::move(k), std::move(v), std::move(probs)};
  return out;
}

Tensor self_attention_backward(const AttentionCache& c, AttentionParams& p, const Tensor& dy) {
  const double scale = 1.0 / std::sqrt(static_cast<double>(c.x.cols()));
  Tensor dprobs = matmul_nt(dy, c.v);
  Tensor dv = matmul_tn(c.probs, dy);
  Tensor dscores = softmax_rows_backward(c.probs, dprobs);
  for (auto& s : dscores.data()) s *= scale;
  Tensor dq = matmul(dscores, c.k);
  Tensor dk = matmul_tn(dscores, c.q);
  add_inplace(p.w_q.grad, matmul_tn(c.x, dq));
  add_inplace(p.w_k.grad, matmul_tn(c.x, dk));
  add_inplace(p.w_v.grad, matmul_tn(c.x, dv));
  Tensor dx = matmul_nt(dq, p.w_q.value);
  add_inplace(dx, matmul_nt(dk, p.w_k.value));
  add_inplace(dx, matmul_nt(dv, p.w_v.value));
  return dx;
}

GruParams GruParams::init(std::size_t input_dim, std::size_t hidden_dim, Rng& rng, std::string_view prefix) {
  const std::string p(prefix);
  auto w = [&](const char* n) { return Param(p + "." + n, xavier_uniform({input_dim, hidden_dim}, rng)); };
  auto u = [&](const char* n) { return Param(p + "." + n, xavier_uniform({hidden_dim, hidden_dim}, rng)); };
  auto b = [&](const char* n) { return Param(p + "." + n, Tensor::vector(hidden_dim)); };
  GruParams g;
  g.w_z = w("w_z");
  g.u_z = u("u_z");
  g.b_z = b("b_z");
  g.w_r = w("w_r");
  g.u_r = u("u_r");
  g.b_r = b("b_r");
  g.w_h = w("w_h");
  g.u_h = u("u_h");
  g.b_h = b("b_h");
  return g;
}

Tensor gru_step(const Tensor& x, const Tensor& h, const GruParams& p, GruCache* cache) {
  require(x.rows() == h.rows() && x.cols() == p.w_z.value.rows() && h.cols() == p.u_z.value.rows(),
          "gru_step: shape mismatch");
  Tensor z = linear(x, p.w_z.value, p.b_z.value);
  add_inplace(z, matmul(h, p.u_z.value));
  z = sigmoid(z);
  Tensor r = linear(x, p.w_r.value, p.b_r.value);
  add_inplace(r, matmul(h, p.u_r.value));
  r = sigmoid(r);
  Tensor rh = h;
  for (std::size_t i = 0; i < rh.size(); ++i) rh[i] *= r[i];
  Tensor n = linear(x, p.w_h.value, p.b_h.value);
  add_inplace(n, matmul(rh, p.u_h.value));
  for (auto& v : n.data()) v = std::tanh(v);
  Tensor out = h;
  for (std::size_t i = 0; i < out.size(); ++i) out[i] = (1.0 - z[i]) * h[i] + z[i] * n[i];
  if (cache) *cache = GruCache{x, h, std::move(z), std::move(r), std::move(n)};
  return out;
}

GruInputGrads gru_step_backward(const GruCache& c, GruParams& p, const Tensor& dh_next) {
  const std::size_t count = dh_next.size();
  Tensor dz(dh_next.shape()), dn(dh_next.shape());
  GruInputGrads g{Tensor(c.x.shape()), Tensor(c.h.shape())};
  for (std::size_t i = 0; i < count; ++i) {
    dz[i] = dh_next[i] * (c.n[i] - c.h[i]) * c.z[i] * (1.0 - c.z[i]);
    dn[i] = dh_next[i] * c.z[i] * (1.0 - c.n[i] * c.n[i]);
    g.dh[i] = dh_next[i] * (1.0 - c.z[i]);
  }
  Tensor rh = c.h;
  for (std::size_t i = 0; i < count; ++i) rh[i] *= c.r[i];

  // candidate path
  add_inplace(g.dx, linear_backward(c.x, p.w_h.value, dn, p.w_h.grad, p.b_h.grad));
  add_inplace(p.u_h.grad, matmul_tn(rh, dn));
  Tensor drh = matmul_nt(dn, p.u_h.value);
  Tensor dr(dh_next.shape());
  for (std::size_t i = 0; i < count; ++i) {
    dr[i] = drh[i] * c.h[i] * c.r[i] * (1.0 - c.r[i]);
    g.dh[i] += drh[i] * c.r[i];
  }
  // update gate
  add_inplace(g.dx, linear_backward(c.x, p.w_z.value, dz, p.w_z.grad, p.b_z.grad));
  add_inplace(p.u_z.grad, matmul_tn(c.h, dz));
  add_inplace(g.dh, matmul_nt(dz, p.u_z.value));
  // reset gate
  add_inplace(g.dx, linear_backward(c.x, p.w_r.value, dr, p.w_r.grad, p.b_r.grad));
  add_inplace(p.u_r.grad, matmul_tn(c.h, dr));
  add_inplace(g.dh, matmul_nt(dr, p.u_r.value));
  return g;
}

Tensor conv1d_same(const Tensor& input, const Tensor& kernels, const Tensor& bias) {
  require(kernels.rank() == 3 && input.rank() == 2, "conv1d_same: bad ranks");
  const std::size_t k_count = kernels.shape()[0], channels = kernels.shape()[1], width = kernels.shape()[2];
  require(channels == input.rows() && bias.size() == k_count && width % 2 == 1, "conv1d_same: shape mismatch");
  const std::size_t length = input.cols();
  const auto half = static_cast<std::ptrdiff_t>(width / 2);
  Tensor out = Tensor::matrix(k_count, length);
  for (std::size_t k = 0; k < k_count; ++k) {
    for (std::size_t j = 0; j < length; ++j) {
      double s = bias[k];
      for (std::size_t c = 0; c < channels; ++c) {
        for (std::size_t u = 0; u < width; ++u) {
          const auto pos = static_cast<std::ptrdiff_t>(j) + static_cast<std::ptrdiff_t>(u) - half;
          if (pos < 0 || pos >= static_cast<std::ptrdiff_t>(length)) continue;
          s += kernels[(k * channels + c) * width + u] * input(c, static_cast<std::size_t>(pos));
        }
      }
      out(k, j) = s;
    }
  }
  return out;
}

Tensor conv1d_same_backward(const Tensor& input, const Tensor& kernels, const Tensor& dy, Tensor& dkernels,
                            Tensor& dbias) {
  const std::size_t k_count = kernels.shape()[0], channels = kernels.shape()[1], width = kernels.shape()[2];
  const std::size_t length = input.cols();
  const auto half = static_cast<std::ptrdiff_t>(width / 2);
  Tensor dinput = Tensor::matrix(channels, length);
  for (std::size_t k = 0; k < k_count; ++k) {
    for (std::size_t j = 0; j < length; ++j) {
      const double g = dy(k, j);
      if (g == 0.0) continue;
      dbias[k] += g;
      for (std::size_t c = 0; c < channels; ++c) {
        for (std::size_t u = 0; u < width; ++u) {
          const auto pos = static_cast<std::ptrdiff_t>(j) + static_cast<std::ptrdiff_t>(u) - half;
          if (pos < 0 || pos >= static_cast<std::ptrdiff_t>(length)) continue;
          const auto idx = (k * channels + c) * width + u;
          dkernels[idx] += g * input(c, static_cast<std::size_t>(pos));
          dinput(c, static_cast<std::size_t>(pos)) += g * kernels[idx];
        }
      }
    }
  }
  return dinput;
}

// ---- losses --------------------------------------------------------------

double cross_entropy_softmax(const Tensor& logits, std::span<const std::size_t> targets, Tensor* dlogits) {
  require(targets.size() == logits.rows(), "cross_entropy_softmax: one target per row");
  const Tensor probs = softmax_rows(logits);
  if (dlogits) *dlogits = probs;
  const double inv_n = 1.0 / static_cast<double>(logits.rows());
  double loss = 0.0;
  for (std::size_t i = 0; i < logits.rows(); ++i) {
    if (targets[i] >= logits.cols()) {
      throw std::out_of_range("cross_entropy_softmax: target " + std::to_string(targets[i]) +
                              " out of range");
    }
    // log-sum-exp form keeps the loss exact for very confident rows
    const auto row = logits.row(i);
    const double m = *std::max_element(row.begin(), row.end());
    double sum = 0.0;
    for (double v : row) sum += std::exp(v - m);
    loss += (m + std::log(sum) - row[targets[i]]) * inv_n;
    if (dlogits) {
      (*dlogits)(i, targets[i]) -= 1.0;
      for (auto& v : dlogits->row(i)) v *= inv_n;
    }
  }
  return loss;
}

double binary_cross_entropy(std::span<const double> probs, std::span<const double> labels) {
  require(probs.size() == labels.size() && !probs.empty(), "binary_cross_entropy: size mismatch");
  double loss = 0.0;
  for (std::size_t i = 0; i < probs.size(); ++i) {
    const double p = std::clamp(probs[i], kProbClamp, 1.0 - kProbClamp);
    loss -= labels[i] * std::log(p) + (1.0 - labels[i]) * std::log(1.0 - p);
  }
  return loss / static_cast<double>(probs.size());
}

double bce_logit_grad(double prob, double label) {
  if (prob < kProbClamp || prob > 1.0 - kProbClamp) return 0.0;
  return prob - label;
}

// ---- optimisation --------------------------------------------------------

void adam_step(Param& p, const AdamConfig& cfg) {
  ++p.step_count;
  const double bc1 = 1.0 - std::pow(cfg.beta1, static_cast<double>(p.step_count));
  const double bc2 = 1.0 - std::pow(cfg.beta2, static_cast<double>(p.step_count));
  auto value = p.value.data();
  auto grad = p.grad.data();
  auto m = p.adam_m.data();
  auto v = p.adam_v.data();
  for (std::size_t i = 0; i < value.size(); ++i) {
    m[i] = cfg.beta1 * m[i] + (1.0 - cfg.beta1) * grad[i];
    v[i] = cfg.beta2 * v[i] + (1.0 - cfg.beta2) * grad[i] * grad[i];
    const double m_hat = m[i] / bc1;
    const double v_hat = v[i] / bc2;
    value[i] -= cfg.lr * m_hat / (std::sqrt(v_hat) + cfg.eps);
    value[i] -= cfg.lr * cfg.weight_decay * value[i];
  }
}

double global_grad_norm(std::span<Param* const> params) {
  double sq = 0.0;
  for (const Param* p : params) {
    for (double g : p->grad.data()) sq += g * g;
  }
  return std::sqrt(sq);
}

double clip_global_norm(std::span<Param* const> params, double threshold) {
  const double norm = global_grad_norm(params);
  if (!(norm > threshold)) return 1.0;
  const double scale = threshold / norm;
  for (Param* p : params) {
    for (auto& g : p->grad.data()) g *= scale;
  }
  return scale;
}

// ---- verification --------------------------------------------------------

GradCheckReport finite_diff_check(const std::function<double()>& loss, const std::function<void()>& backward,
                                  std::span<Param* const> params, double h) {
  for (Param* p : params) p->zero_grad();
  backward();

  GradCheckReport report;
  for (Param* p : params) {
    auto values = p->value.data();
    for (std::size_t i = 0; i < values.size(); ++i) {
      const double saved = values[i];
      values[i] = saved + h;
      const double plus = loss();
      values[i] = saved - h;
      const double minus = loss();
      values[i] = saved;
      const double numeric = (plus - minus) / (2.0 * h);
      const double analytic = p->grad[i];
      const double denom = std::max({std::abs(analytic), std::abs(numeric), 1e-8});
      const double err = std::abs(analytic - numeric) / denom;
      ++report.coordinates;
      if (err > report.max_rel_error) {
        report.max_rel_error = err;
        report.worst_param = p->name;
        report.worst_index = i;
        report.analytic = analytic;
        report.numeric = numeric;
      }
    }
  }
  return report;
}

// ---- checkpoints ---------------------------------------------------------

void save_checkpoint(std::ostream& out, std::span<const Param* const> params) {
  out.write(kCheckpointMagic, sizeof kCheckpointMagic);
  detail::write_le<std::uint32_t>(out, kCheckpointVersion);
  detail::write_le<std::uint32_t>(out, static_cast<std::uint32_t>(params.size()));
  for (const Param* p : params) {
    detail::write_le<std::uint32_t>(out, static_cast<std::uint32_t>(p->name.size()));
    out.write(p->name.data(), static_cast<std::streamsize>(p->name.size()));
    detail::write_le<std::uint32_t>(out, static_cast<std::uint32_t>(p->value.rank()));
    for (auto d : p->value.shape()) detail::write_le<std::uint64_t>(out, d);
    for (double v : p->value.data()) detail::write_le<float>(out, static_cast<float>(v));
  }
  if (!out) throw std::runtime_error("save_checkpoint: write failed");
}

std::vector<NamedTensor> load_checkpoint(std::istream& in) {
  auto fail = [](const std::string& why) { return std::runtime_error("load_checkpoint: " + why); };
  char magic[8];
  if (!in.read(magic, sizeof magic)) throw fail("truncated header");
  if (!std::equal(std::begin(magic), std::end(magic), std::begin(kCheckpointMagic))) throw fail("bad magic");
  std::uint32_t version = 0, count = 0;
  if (!detail::read_le(in, version) || !detail::read_le(in, count)) throw fail("truncated header");
  if (version != kCheckpointVersion) throw fail("unsupported version " + std::to_string(version));

  std::vector<NamedTensor> tensors;
  tensors.reserve(count);
  for (std::uint32_t t = 0; t < count; ++t) {
    std::uint32_t name_len = 0, rank = 0;
    if (!detail::read_le(in, name_len) || name_len > (1u << 16)) throw fail("bad tensor name");
    std::string name(name_len, '\0');
    if (!in.read(name.data(), name_len)) throw fail("truncated tensor name");
    if (!detail::read_le(in, rank) || rank == 0 || rank > 8) throw fail("bad rank for " + name);
    std::vector<std::size_t> shape(rank);
    for (auto& d : shape) {
      std::uint64_t dim = 0;
      if (!detail::read_le(in, dim) || dim == 0 || dim > (1ull << 32)) throw fail("bad shape for " + name);
      d = static_cast<std::size_t>(dim);
    }
    Tensor value(shape);
    for (auto& v : value.data()) {
      float f = 0;
      if (!detail::read_le(in, f)) throw fail("truncated data for " + name);
      v = f;
    }
    tensors.push_back({std::move(name), std::move(value)});
  }
  if (!detail::at_eof(in)) throw fail("trailing bytes");
  return tensors;
}

void restore_params(std::span<const NamedTensor> tensors, std::span<Param* const> params) {
  std::unordered_map<std::string, const Tensor*> by_name;
  for (const auto& t : tensors) by_name[t.name] = &t.value;
  for (Param* p : params) {
    const auto it = by_name.find(p->name);
    if (it == by_name.end()) throw std::runtime_error("checkpoint lacks tensor " + p->name);
    if (!it->second->same_shape(p->value)) throw std::runtime_error("checkpoint shape mismatch for " + p->name);
    p->value = *it->second;
  }
}

}  // namespace leap::nn
