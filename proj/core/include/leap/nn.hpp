#pragma once

#include <cstdint>
#include <functional>
#include <iosfwd>
#include <random>
#include <span>
#include <string>
#include <string_view>
#include <vector>

#include "leap/tensor.hpp"

namespace leap::nn {

using Rng = std::mt19937_64;

/// Independent generator for a named consumer ("init", "dropout", "shuffle")
/// derived from the run seed, so adding a consumer never perturbs another.
Rng substream(std::uint64_t seed, std::string_view name);

/// A trainable tensor with its gradient and Adam moments.
struct Param {
  std::string name;
  Tensor value;
  Tensor grad;
  Tensor adam_m;
  Tensor adam_v;
  std::int64_t step_count = 0;

  Param() = default;
  Param(std::string name, Tensor init);

  void zero_grad() { grad.fill(0.0); }
};

/// Xavier-uniform initialisation over the last two dimensions.
Tensor xavier_uniform(std::vector<std::size_t> shape, Rng& rng);
Tensor normal_init(std::vector<std::size_t> shape, double stddev, Rng& rng);

// ---- dense kernels -------------------------------------------------------

Tensor matmul(const Tensor& a, const Tensor& b);     // a · b
Tensor matmul_tn(const Tensor& a, const Tensor& b);  // aᵀ · b
Tensor matmul_nt(const Tensor& a, const Tensor& b);  // a · bᵀ
void add_inplace(Tensor& dst, const Tensor& src);
Tensor column_sums(const Tensor& x);
Tensor column_means(const Tensor& x);

// ---- layers --------------------------------------------------------------

/// y = x·W + b (b broadcast over rows).
Tensor linear(const Tensor& x, const Tensor& w, const Tensor& b);
/// Accumulates dW, db; returns dx.
Tensor linear_backward(const Tensor& x, const Tensor& w, const Tensor& dy, Tensor& dw, Tensor& db);

Tensor softmax_rows(const Tensor& x);
Tensor softmax_rows_backward(const Tensor& y, const Tensor& dy);

double sigmoid(double x);
Tensor sigmoid(const Tensor& x);
Tensor relu(const Tensor& x);
Tensor relu_backward(const Tensor& x, const Tensor& dy);

/// Inverted dropout. In eval mode, or at rate 0, returns x and an all-ones mask.
struct DropoutResult {
  Tensor output;
  Tensor mask;
};
DropoutResult dropout(const Tensor& x, double rate, bool training, Rng& rng);

/// Single-head scaled dot-product self-attention without masking or output
/// projection: softmax(XWq (XWk)ᵀ / √d) · XWv.
struct AttentionParams {
  Param w_q;
  Param w_k;
  Param w_v;

  static AttentionParams init(std::size_t d_model, Rng& rng, std::string_view prefix = "attn");
  std::vector<Param*> params() { return {&w_q, &w_k, &w_v}; }
};

struct AttentionCache {
  Tensor x, q, k, v, probs;
};

Tensor self_attention(const Tensor& x, const AttentionParams& p, AttentionCache* cache = nullptr);
/// Accumulates parameter gradients; returns dX.
Tensor self_attention_backward(const AttentionCache& cache, AttentionParams& p, const Tensor& dy);

/// GRU cell over a batch of rows: z = σ(xWz + hUz + bz), r = σ(xWr + hUr + br),
/// n = tanh(xWh + (r⊙h)Uh + bh), h' = (1 − z)⊙h + z⊙n.
struct GruParams {
  Param w_z, u_z, b_z;
  Param w_r, u_r, b_r;
  Param w_h, u_h, b_h;

  static GruParams init(std::size_t input_dim, std::size_t hidden_dim, Rng& rng,
                        std::string_view prefix = "gru");
  std::vector<Param*> params() { return {&w_z, &u_z, &b_z, &w_r, &u_r, &b_r, &w_h, &u_h, &b_h}; }
};

struct GruCache {
  Tensor x, h, z, r, n;
};

Tensor gru_step(const Tensor& x, const Tensor& h, const GruParams& p, GruCache* cache = nullptr);

struct GruInputGrads {
  Tensor dx;
  Tensor dh;
};
GruInputGrads gru_step_backward(const GruCache& cache, GruParams& p, const Tensor& dh_next);

/// 1-D convolution with zero "same" padding. Input C×L, kernels K×C×W (W odd),
/// bias K; output K×L.
Tensor conv1d_same(const Tensor& input, const Tensor& kernels, const Tensor& bias);
/// Accumulates kernel and bias gradients; returns dInput.
Tensor conv1d_same_backward(const Tensor& input, const Tensor& kernels, const Tensor& dy,
                            Tensor& dkernels, Tensor& dbias);

// ---- losses --------------------------------------------------------------

/// Mean over rows of −log softmax(logits)[target]. Writes dLoss/dLogits when
/// `dlogits` is non-null. Throws std::out_of_range for a bad target.
double cross_entropy_softmax(const Tensor& logits, std::span<const std::size_t> targets,
                             Tensor* dlogits = nullptr);

inline constexpr double kProbClamp = 1e-7;

/// Mean binary cross-entropy with probabilities clamped to [1e-7, 1 − 1e-7].
double binary_cross_entropy(std::span<const double> probs, std::span<const double> labels);

/// d BCE_i / d logit_i for p = σ(logit); zero where the clamp is active.
double bce_logit_grad(double prob, double label);

// ---- optimisation --------------------------------------------------------

struct AdamConfig {
  double lr = 1e-3;
  double beta1 = 0.9;
  double beta2 = 0.999;
  double eps = 1e-8;
  double weight_decay = 0.0;  // decoupled: applied to values after the step
};

void adam_step(Param& p, const AdamConfig& cfg);

/// Scales all gradients so that their joint L2 norm is at most `threshold`.
/// Returns the applied scale (1 when no clipping happened).
double clip_global_norm(std::span<Param* const> params, double threshold = 1.0);

double global_grad_norm(std::span<Param* const> params);

// ---- verification --------------------------------------------------------

struct GradCheckReport {
  double max_rel_error = 0.0;
  std::string worst_param;
  std::size_t worst_index = 0;
  double analytic = 0.0;
  double numeric = 0.0;
  std::size_t coordinates = 0;
};

/// Compares analytic gradients with central differences (f(θ+h) − f(θ−h))/2h
/// coordinate by coordinate. `loss` evaluates the objective from the current
/// parameter values; `backward` fills Param::grad (grads are zeroed first).
/// Relative error uses max(|a|, |n|, 1e-8) as denominator.
GradCheckReport finite_diff_check(const std::function<double()>& loss,
                                  const std::function<void()>& backward,
                                  std::span<Param* const> params, double h = 1e-4);

// ---- checkpoints ---------------------------------------------------------

struct NamedTensor {
  std::string name;
  Tensor value;
};

/// "LEAPCKPT" envelope: u32 version, u32 count, then per tensor u32 name
/// length, name bytes, u32 rank, u64 dims, f32 values; little-endian.
void save_checkpoint(std::ostream& out, std::span<const Param* const> params);
std::vector<NamedTensor> load_checkpoint(std::istream& in);
/// Copies values by name into `params`; throws if a name or shape is missing.
void restore_params(std::span<const NamedTensor> tensors, std::span<Param* const> params);

}  // namespace leap::nn
