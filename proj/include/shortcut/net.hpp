#pragma once

#include <cmath>
#include <cstdint>
#include <optional>
#include <vector>

#include "shortcut/errors.hpp"
#include "shortcut/tensor.hpp"

namespace shortcut {

// Binary lattice of step sizes. Grid buckets index the list
// [0, 1/M, 2/M, 4/M, ..., 1]; bucket 0 is the instantaneous-flow base case.
// Queries at the smallest step 1/M reuse the bucket-0 conditioning, so the
// embedding table holds log2(M)+1 rows.
struct StepGrid {
  int M = 128;

  StepGrid() = default;
  explicit StepGrid(int m) : M(m) {
    if (M < 2 || (M & (M - 1)) != 0)
      throw ConfigError("StepGrid: M must be a power of two >= 2, got " + std::to_string(M));
  }

  int log2_M() const {
    int l = 0;
    for (int v = M; v > 1; v >>= 1) ++l;
    return l;
  }

  // Grid buckets: 0 -> d=0, i>=1 -> d = 2^(i-1)/M. Highest bucket is d=1.
  int num_buckets() const { return log2_M() + 2; }

  // Embedding rows: bucket 1 (d=1/M) shares row 0 with d=0.
  int num_embed_buckets() const { return log2_M() + 1; }

  double bucket_d(int bucket) const {
    check_bucket(bucket);
    if (bucket == 0) return 0.0;
    return static_cast<double>(1 << (bucket - 1)) / M;
  }

  int embed_index(int bucket) const {
    check_bucket(bucket);
    return bucket <= 1 ? 0 : bucket - 1;
  }

  // Bucket whose d equals 1/num_steps; num_steps must divide M.
  int bucket_for_steps(int num_steps) const {
    if (num_steps < 1 || num_steps > M || (num_steps & (num_steps - 1)) != 0 || M % num_steps != 0)
      throw RequestError("num_steps must be a power-of-two divisor of M=" + std::to_string(M) +
                         ", got " + std::to_string(num_steps));
    int ratio = M / num_steps;  // d = ratio / M = 2^(bucket-1)/M
    int bucket = 1;
    while ((1 << (bucket - 1)) < ratio) ++bucket;
    return bucket;
  }

  void check_bucket(int bucket) const {
    if (bucket < 0 || bucket >= num_buckets())
      throw DomainError("bucket " + std::to_string(bucket) + " out of range [0," +
                        std::to_string(num_buckets()) + ")");
  }
};

struct NetConfig {
  int input_dim = 2;
  int hidden_dim = 128;
  int num_layers = 4;        // hidden layers, each followed by SiLU
  int time_embed_dim = 32;   // even
  int num_d_buckets = 8;     // log2(M)+1
  int num_classes = 0;       // 0 = unconditional
  float class_dropout_prob = 0.1f;

  void validate(const StepGrid& grid) const {
    if (input_dim < 1 || hidden_dim < 1 || num_layers < 1)
      throw ConfigError("NetConfig: dims and layer count must be positive");
    if (time_embed_dim < 2 || time_embed_dim % 2 != 0)
      throw ConfigError("NetConfig: time_embed_dim must be even and >= 2");
    if (num_d_buckets != grid.num_embed_buckets())
      throw ConfigError("NetConfig: num_d_buckets must equal log2(M)+1 = " +
                        std::to_string(grid.num_embed_buckets()));
    if (num_classes < 0 || class_dropout_prob < 0.0f || class_dropout_prob > 1.0f)
      throw ConfigError("NetConfig: bad class conditioning fields");
  }

  int concat_dim() const {
    return input_dim + 2 * time_embed_dim + (num_classes > 0 ? time_embed_dim : 0);
  }
  int null_class() const { return num_classes; }  // extra row in the class table
};

// Sinusoidal time features, frequencies geometric from 1 to 1000.
inline std::vector<float> embed_time(double t, int dim) {
  if (t < 0.0 || t > 1.0) throw DomainError("embed_time: t=" + std::to_string(t) + " outside [0,1]");
  int half = dim / 2;
  std::vector<float> out(static_cast<size_t>(dim));
  for (int j = 0; j < half; ++j) {
    double frac = half > 1 ? static_cast<double>(j) / (half - 1) : 0.0;
    double omega = std::pow(1000.0, frac);
    out[j] = static_cast<float>(std::sin(omega * t));
    out[half + j] = static_cast<float>(std::cos(omega * t));
  }
  return out;
}

// All learnable tensors of the shortcut network s(x, t, d, c).
struct Params {
  std::vector<Tensor> w;  // num_layers hidden matrices + final output matrix
  std::vector<Tensor> b;
  Tensor time_w;      // time_embed_dim x time_embed_dim
  Tensor time_b;      // 1 x time_embed_dim
  Tensor d_embed;     // num_d_buckets x time_embed_dim
  Tensor class_embed; // (num_classes+1) x time_embed_dim, last row = null class

  std::vector<Tensor*> tensors() {
    std::vector<Tensor*> out;
    for (auto& t : w) out.push_back(&t);
    for (auto& t : b) out.push_back(&t);
    out.push_back(&time_w);
    out.push_back(&time_b);
    out.push_back(&d_embed);
    if (class_embed.size() > 0) out.push_back(&class_embed);
    return out;
  }
  std::vector<const Tensor*> tensors() const {
    auto list = const_cast<Params*>(this)->tensors();
    return {list.begin(), list.end()};
  }

  std::vector<std::string> tensor_names() const {
    std::vector<std::string> out;
    for (size_t i = 0; i < w.size(); ++i) out.push_back("w" + std::to_string(i));
    for (size_t i = 0; i < b.size(); ++i) out.push_back("b" + std::to_string(i));
    out.push_back("time_w");
    out.push_back("time_b");
    out.push_back("d_embed");
    if (class_embed.size() > 0) out.push_back("class_embed");
    return out;
  }

  static Params zeros_like(const Params& p) {
    Params out = p;
    for (Tensor* t : out.tensors()) std::fill(t->data.begin(), t->data.end(), 0.0f);
    return out;
  }
};

// Deterministic init: hidden weights ~ N(0, 1/fan_in), zero biases, zero
// output layer so a fresh network predicts the zero velocity field.
inline Params init_params(const NetConfig& cfg, const StepGrid& grid, std::uint64_t seed) {
  cfg.validate(grid);
  Rng rng(seed);
  Params p;
  int in = cfg.concat_dim();
  for (int l = 0; l < cfg.num_layers; ++l) {
    p.w.push_back(Tensor::randn(in, cfg.hidden_dim, rng, 1.0f / std::sqrt(static_cast<float>(in))));
    p.b.push_back(Tensor::zeros(1, cfg.hidden_dim));
    in = cfg.hidden_dim;
  }
  p.w.push_back(Tensor::zeros(cfg.hidden_dim, cfg.input_dim));
  p.b.push_back(Tensor::zeros(1, cfg.input_dim));
  p.time_w = Tensor::randn(cfg.time_embed_dim, cfg.time_embed_dim, rng,
                           1.0f / std::sqrt(static_cast<float>(cfg.time_embed_dim)));
  p.time_b = Tensor::zeros(1, cfg.time_embed_dim);
  p.d_embed = Tensor::randn(cfg.num_d_buckets, cfg.time_embed_dim, rng, 0.02f);
  if (cfg.num_classes > 0)
    p.class_embed = Tensor::randn(cfg.num_classes + 1, cfg.time_embed_dim, rng, 0.02f);
  return p;
}

// Counters for forward-row accounting (cost-ratio checks and logging).
struct EvalCounters {
  std::uint64_t forward_rows_grad = 0;    // rows through a gradient-carrying forward
  std::uint64_t forward_rows_nograd = 0;  // rows through a no-grad forward
  void reset() { forward_rows_grad = forward_rows_nograd = 0; }
  std::uint64_t total() const { return forward_rows_grad + forward_rows_nograd; }
};

inline EvalCounters& eval_counters() {
  static EvalCounters c;
  return c;
}

struct ParamIds {
  std::vector<Tape::Id> w, b;
  Tape::Id time_w = -1, time_b = -1, d_embed = -1, class_embed = -1;
};

inline ParamIds register_params(Tape& tape, const Params& p, bool needs_grad) {
  ParamIds ids;
  for (const auto& t : p.w) ids.w.push_back(tape.leaf(t, needs_grad));
  for (const auto& t : p.b) ids.b.push_back(tape.leaf(t, needs_grad));
  ids.time_w = tape.leaf(p.time_w, needs_grad);
  ids.time_b = tape.leaf(p.time_b, needs_grad);
  ids.d_embed = tape.leaf(p.d_embed, needs_grad);
  if (p.class_embed.size() > 0) ids.class_embed = tape.leaf(p.class_embed, needs_grad);
  return ids;
}

// Gathers parameter gradients off the tape in the same fixed order as
// Params::tensors(). Requires backward() to have run.
inline Params grads_from_tape(const Tape& tape, const ParamIds& ids, const Params& like) {
  Params g = Params::zeros_like(like);
  std::vector<Tape::Id> order;
  for (auto id : ids.w) order.push_back(id);
  for (auto id : ids.b) order.push_back(id);
  order.push_back(ids.time_w);
  order.push_back(ids.time_b);
  order.push_back(ids.d_embed);
  if (ids.class_embed >= 0) order.push_back(ids.class_embed);
  auto dst = g.tensors();
  if (dst.size() != order.size()) throw ContractError("grads_from_tape: parameter count mismatch");
  for (size_t i = 0; i < order.size(); ++i) *dst[i] = tape.grad(order[i]);
  return g;
}

// One batch of conditioning inputs: per-row time, grid bucket and class
// (-1 or null_class() selects the unconditional embedding).
struct ForwardInput {
  Tensor x;                   // B x input_dim
  std::vector<double> t;      // size B, each in [0,1]
  std::vector<int> bucket;    // size B, grid bucket indices
  std::vector<int> cls;       // empty for unconditional models
};

inline Tape::Id forward(Tape& tape, const ParamIds& ids, const NetConfig& cfg,
                        const StepGrid& grid, const ForwardInput& in,
                        Rng* dropout_rng = nullptr) {
  int B = in.x.rows;
  if (in.x.cols != cfg.input_dim)
    throw DimensionError("forward: x is " + in.x.shape_str() + ", want cols=" +
                         std::to_string(cfg.input_dim));
  if (static_cast<int>(in.t.size()) != B || static_cast<int>(in.bucket.size()) != B)
    throw DimensionError("forward: t/bucket length must match batch rows");
  bool conditional = cfg.num_classes > 0;
  if (conditional && static_cast<int>(in.cls.size()) != B)
    throw DimensionError("forward: class labels required for a conditional model");

  Tensor time_feat(B, cfg.time_embed_dim);
  std::vector<int> embed_idx(B);
  for (int r = 0; r < B; ++r) {
    auto feat = embed_time(in.t[r], cfg.time_embed_dim);
    std::copy(feat.begin(), feat.end(), time_feat.data.begin() + static_cast<size_t>(r) * cfg.time_embed_dim);
    embed_idx[r] = grid.embed_index(in.bucket[r]);
  }

  auto xid = tape.leaf(in.x);
  auto tf = tape.leaf(std::move(time_feat));
  auto temb = tape.bias_add(tape.matmul(tf, ids.time_w), ids.time_b);
  auto demb = tape.gather_rows(ids.d_embed, embed_idx);

  std::vector<Tape::Id> parts = {xid, temb, demb};
  if (conditional) {
    std::vector<int> cls(B);
    for (int r = 0; r < B; ++r) {
      int c = in.cls[r];
      if (c >= cfg.num_classes)
        throw DomainError("forward: class id " + std::to_string(c) + " >= num_classes=" +
                          std::to_string(cfg.num_classes));
      if (c < 0) c = cfg.null_class();
      if (dropout_rng && c != cfg.null_class() &&
          dropout_rng->uniform() < cfg.class_dropout_prob)
        c = cfg.null_class();
      cls[r] = c;
    }
    parts.push_back(tape.gather_rows(ids.class_embed, cls));
  }

  auto h = tape.concat_cols(parts);
  for (int l = 0; l < cfg.num_layers; ++l)
    h = tape.silu(tape.bias_add(tape.matmul(h, ids.w[l]), ids.b[l]));
  auto out = tape.bias_add(tape.matmul(h, ids.w[cfg.num_layers]), ids.b[cfg.num_layers]);
  if (tape.needs_grad(out))
    eval_counters().forward_rows_grad += static_cast<std::uint64_t>(B);
  else
    eval_counters().forward_rows_nograd += static_cast<std::uint64_t>(B);
  return out;
}

// No-grad forward on a scratch tape.
inline Tensor forward_eval(const Params& p, const NetConfig& cfg, const StepGrid& grid,
                           const ForwardInput& in) {
  Tape tape;
  auto ids = register_params(tape, p, false);
  return tape.value(forward(tape, ids, cfg, grid, in));
}

// Classifier-free guidance combination: v_uncond + w * (v_cond - v_uncond).
inline Tensor cfg_combine(const Tensor& v_cond, const Tensor& v_uncond, float w) {
  check_same_shape(v_cond, v_uncond, "cfg_combine");
  Tensor out = v_uncond;
  for (int i = 0; i < out.size(); ++i)
    out.data[i] = v_uncond.data[i] + w * (v_cond.data[i] - v_uncond.data[i]);
  return out;
}

// No-grad forward that applies CFG on rows conditioned at the d=0 embedding
// (bucket 0 or the 1/M bucket); all other rows use the conditional output.
inline Tensor forward_eval_cfg(const Params& p, const NetConfig& cfg, const StepGrid& grid,
                               const ForwardInput& in, std::optional<float> cfg_scale) {
  if (!cfg_scale.has_value() || cfg.num_classes == 0) return forward_eval(p, cfg, grid, in);
  Tensor v_cond = forward_eval(p, cfg, grid, in);
  ForwardInput uncond = in;
  std::fill(uncond.cls.begin(), uncond.cls.end(), -1);
  Tensor v_uncond = forward_eval(p, cfg, grid, uncond);
  Tensor out = v_cond;
  for (int r = 0; r < in.x.rows; ++r) {
    if (grid.embed_index(in.bucket[r]) != 0) continue;
    for (int c = 0; c < out.cols; ++c)
      out.at(r, c) = v_uncond.at(r, c) + *cfg_scale * (v_cond.at(r, c) - v_uncond.at(r, c));
  }
  return out;
}

}  // namespace shortcut
