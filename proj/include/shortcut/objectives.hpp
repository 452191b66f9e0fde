#pragma once

#include <algorithm>
#include <cmath>
#include <optional>
#include <vector>

#include "shortcut/data.hpp"
#include "shortcut/errors.hpp"
#include "shortcut/net.hpp"
#include "shortcut/optim.hpp"
#include "shortcut/sampler.hpp"

namespace shortcut {

// Batch composition: (1-k) empirical flow-matching rows, k self-consistency
// (bootstrap) rows.
struct BatchPlan {
  int batch_size = 256;
  double k = 0.25;

  int num_sc_rows() const {
    if (k < 0.0 || k > 1.0) throw ContractError("BatchPlan: k must lie in [0,1]");
    return static_cast<int>(std::lround(k * batch_size));
  }
};

struct LossInfo {
  double fm_loss = 0.0;  // flow-matching component
  double sc_loss = 0.0;  // self-consistency / bootstrap component
  double total = 0.0;    // the scalar actually differentiated
};

struct Interpolation {
  Tensor xt;  // (1-t) x0 + t x1, rowwise
  Tensor v;   // x1 - x0
};

inline Interpolation interpolate(const Tensor& x0, const Tensor& x1,
                                 const std::vector<double>& t) {
  check_same_shape(x0, x1, "interpolate");
  if (static_cast<int>(t.size()) != x0.rows)
    throw DimensionError("interpolate: t length != rows");
  Interpolation out;
  out.xt = Tensor(x0.rows, x0.cols);
  out.v = Tensor(x0.rows, x0.cols);
  for (int r = 0; r < x0.rows; ++r) {
    if (t[r] < 0.0 || t[r] > 1.0) throw DomainError("interpolate: t outside [0,1]");
    float tf = static_cast<float>(t[r]);
    for (int c = 0; c < x0.cols; ++c) {
      out.xt.at(r, c) = (1.0f - tf) * x0.at(r, c) + tf * x1.at(r, c);
      out.v.at(r, c) = x1.at(r, c) - x0.at(r, c);
    }
  }
  return out;
}

struct DtSample {
  int d_half_bucket;   // bucket of d, the half step actually queried
  int trained_bucket;  // bucket of 2d, the step size being trained
  double t;            // multiple of 2d in [0, 1-2d]
};

// d drawn uniformly over {1/M, ..., 1/2}; the model is trained at 2d with t
// restricted to the 2d lattice, so sampling-time queries land on trained
// (t, d) pairs.
inline DtSample sample_d_t(const StepGrid& grid, Rng& rng) {
  if (grid.M < 2) throw ConfigError("sample_d_t: M must be at least 2");
  DtSample s;
  s.d_half_bucket = 1 + rng.uniform_int(grid.log2_M());  // buckets 1..log2(M)
  s.trained_bucket = s.d_half_bucket + 1;
  double two_d = grid.bucket_d(s.trained_bucket);
  int slots = static_cast<int>(std::lround(1.0 / two_d));  // multiples of 2d in [0, 1-2d]
  s.t = static_cast<double>(rng.uniform_int(slots)) * two_d;
  return s;
}

struct ShortcutTargets {
  Tensor target;   // stopgrad((s_t + s_{t+d}) / 2), plain values
  Tensor x_mid;    // x_t + s_t * d, the bootstrap midpoint
};

// Batched field with per-row time and bucket conditioning.
using RowFieldFn =
    std::function<Tensor(const Tensor& x, const std::vector<double>& t,
                         const std::vector<int>& bucket)>;

inline RowFieldFn model_row_field(const Params& params, const NetConfig& cfg,
                                  const StepGrid& grid, std::vector<int> cls = {},
                                  std::optional<float> cfg_scale = {}) {
  return [&params, cfg, grid, cls = std::move(cls), cfg_scale](
             const Tensor& x, const std::vector<double>& t, const std::vector<int>& bucket) {
    ForwardInput in{x, t, bucket, cls};
    return forward_eval_cfg(params, cfg, grid, in, cfg_scale);
  };
}

// Two half-step bootstrap per Algorithm 1 over an arbitrary field.
inline ShortcutTargets make_shortcut_targets_field(const RowFieldFn& field, const StepGrid& grid,
                                                   const Tensor& xt,
                                                   const std::vector<double>& t,
                                                   const std::vector<int>& d_half_bucket) {
  int B = xt.rows;
  std::vector<double> t2(B);
  for (int r = 0; r < B; ++r) {
    double d = grid.bucket_d(d_half_bucket[r]);
    if (d < 1.0 / grid.M - 1e-12)
      throw ContractError("make_shortcut_targets: d_half below 1/M");
    if (t[r] + 2.0 * d > 1.0 + 1e-9)
      throw ContractError("make_shortcut_targets: t + 2d exceeds 1");
    t2[r] = t[r] + d;
  }
  Tensor s_t = field(xt, t, d_half_bucket);
  ShortcutTargets out;
  out.x_mid = xt;
  for (int r = 0; r < B; ++r) {
    float d = static_cast<float>(grid.bucket_d(d_half_bucket[r]));
    for (int c = 0; c < xt.cols; ++c) out.x_mid.at(r, c) += s_t.at(r, c) * d;
  }
  Tensor s_td = field(out.x_mid, t2, d_half_bucket);
  out.target = s_t;
  for (int i = 0; i < out.target.size(); ++i)
    out.target.data[i] = 0.5f * (s_t.data[i] + s_td.data[i]);
  return out;
}

// Target construction with the given (EMA) parameters. CFG applies only
// where a query uses the d=0 conditioning.
inline ShortcutTargets make_shortcut_targets(const Params& ema_params, const NetConfig& cfg,
                                             const StepGrid& grid, const Tensor& xt,
                                             const std::vector<double>& t,
                                             const std::vector<int>& d_half_bucket,
                                             const std::vector<int>& cls,
                                             std::optional<float> cfg_scale = {}) {
  return make_shortcut_targets_field(model_row_field(ema_params, cfg, grid, cls, cfg_scale),
                                     grid, xt, t, d_half_bucket);
}

namespace detail {

// One optimizer + EMA step for a prediction/target regression already laid
// out row-by-row. fm rows come first; the loss is a single joint MSE.
inline LossInfo regression_step(TrainState& state, const Tensor& xt,
                                const std::vector<double>& t, const std::vector<int>& bucket,
                                const std::vector<int>& cls, const Tensor& targets, int n_fm,
                                Rng* dropout_rng) {
  if (xt.rows == 0) throw ContractError("update: empty batch");
  Tape tape;
  auto ids = register_params(tape, state.params, true);
  ForwardInput in{xt, t, bucket, cls};
  auto pred = forward(tape, ids, state.net_cfg, state.grid, in, dropout_rng);
  auto target_id = tape.leaf(targets);
  auto loss = tape.mse(pred, target_id);
  tape.backward(loss);
  Params grads = grads_from_tape(tape, ids, state.params);
  state.opt.update(state.params, grads);
  state.ema.update(state.params);
  ++state.step;

  LossInfo info;
  info.total = tape.value(loss).data[0];
  const Tensor& p = tape.value(pred);
  double fm = 0.0, sc = 0.0;
  for (int r = 0; r < p.rows; ++r)
    for (int c = 0; c < p.cols; ++c) {
      double d = static_cast<double>(p.at(r, c)) - targets.at(r, c);
      (r < n_fm ? fm : sc) += d * d;
    }
  if (n_fm > 0) info.fm_loss = fm / (static_cast<double>(n_fm) * p.cols);
  if (p.rows > n_fm) info.sc_loss = sc / (static_cast<double>(p.rows - n_fm) * p.cols);
  return info;
}

}  // namespace detail

// Eq. 4/5 joint update: (1-k) empirical rows regress x1-x0 at d=0, k rows
// regress the bootstrap target at their 2d bucket. Targets always come from
// the EMA shadow and enter the loss as constants.
inline LossInfo shortcut_update(TrainState& state, const PairBatch& batch, const BatchPlan& plan,
                                Rng& rng, std::optional<float> cfg_scale = {}) {
  int B = batch.x0.rows;
  if (B == 0) throw ContractError("shortcut_update: empty batch");
  if (B != plan.batch_size) throw ContractError("shortcut_update: batch size != plan");
  int n_sc = plan.num_sc_rows();
  int n_fm = B - n_sc;

  std::vector<double> t(B);
  std::vector<int> bucket(B, 0);
  std::vector<int> d_half(n_sc);
  for (int r = 0; r < n_fm; ++r) t[r] = rng.uniform();
  for (int r = 0; r < n_sc; ++r) {
    DtSample s = sample_d_t(state.grid, rng);
    t[n_fm + r] = s.t;
    bucket[n_fm + r] = s.trained_bucket;
    d_half[r] = s.d_half_bucket;
  }

  Interpolation interp = interpolate(batch.x0, batch.x1, t);
  Tensor targets = interp.v;  // fm rows keep the empirical velocity
  if (n_sc > 0) {
    Tensor xt_sc(n_sc, interp.xt.cols);
    std::vector<double> t_sc(t.begin() + n_fm, t.end());
    std::vector<int> cls_sc;
    if (!batch.labels.empty())
      cls_sc.assign(batch.labels.begin() + n_fm, batch.labels.end());
    for (int r = 0; r < n_sc; ++r)
      for (int c = 0; c < interp.xt.cols; ++c) xt_sc.at(r, c) = interp.xt.at(n_fm + r, c);
    auto st = make_shortcut_targets(state.eval_params(), state.net_cfg, state.grid, xt_sc, t_sc,
                                    d_half, cls_sc, cfg_scale);
    for (int r = 0; r < n_sc; ++r)
      for (int c = 0; c < targets.cols; ++c) targets.at(n_fm + r, c) = st.target.at(r, c);
  }

  Rng* dropout = state.net_cfg.num_classes > 0 ? &rng : nullptr;
  return detail::regression_step(state, interp.xt, t, bucket, batch.labels, targets, n_fm,
                                 dropout);
}

// Pure empirical regression, the k=0 degenerate plan of shortcut_update.
inline LossInfo flow_matching_update(TrainState& state, const PairBatch& batch, Rng& rng) {
  BatchPlan plan{batch.x0.rows, 0.0};
  return shortcut_update(state, batch, plan, rng);
}

// Doubling discretization schedule: 1 interval in the first phase, then 2,
// 4, ... over equal phases.
inline int ct_intervals(std::int64_t step, std::int64_t total_steps, int phases) {
  if (total_steps <= 0 || phases <= 0) throw ConfigError("ct_intervals: bad schedule");
  std::int64_t phase = std::min<std::int64_t>(step * phases / total_steps, phases - 1);
  return 1 << static_cast<int>(phase);
}

// Velocity-space consistency: the EMA prediction at x_{t+d} estimates x1,
// which defines the target velocity (x1_hat - x_t)/(1-t) at x_t.
inline LossInfo consistency_training_update(TrainState& state, const PairBatch& batch,
                                            int intervals, Rng& rng) {
  int B = batch.x0.rows;
  if (B == 0) throw ContractError("consistency_training_update: empty batch");
  double t_max = 1.0 - 1.0 / state.grid.M;  // t=1 never appears in a pair
  std::vector<double> t(B), t2(B);
  for (int r = 0; r < B; ++r) {
    int i = rng.uniform_int(intervals);
    t[r] = static_cast<double>(i) / intervals;
    t2[r] = std::min(static_cast<double>(i + 1) / intervals, t_max);
  }
  Interpolation at_t = interpolate(batch.x0, batch.x1, t);
  Interpolation at_t2 = interpolate(batch.x0, batch.x1, t2);

  ForwardInput in{at_t2.xt, t2, std::vector<int>(B, 0), batch.labels};
  Tensor v2 = forward_eval(state.eval_params(), state.net_cfg, state.grid, in);
  Tensor targets(B, at_t.xt.cols);
  for (int r = 0; r < B; ++r)
    for (int c = 0; c < targets.cols; ++c) {
      double xhat1 = at_t2.xt.at(r, c) + (1.0 - t2[r]) * v2.at(r, c);
      targets.at(r, c) = static_cast<float>((xhat1 - at_t.xt.at(r, c)) / (1.0 - t[r]));
    }
  Rng* dropout = state.net_cfg.num_classes > 0 ? &rng : nullptr;
  LossInfo info = detail::regression_step(state, at_t.xt, t, std::vector<int>(B, 0),
                                          batch.labels, targets, 0, dropout);
  info.sc_loss = info.total;
  return info;
}

// As consistency training, but the pair (x_t, x_{t+d}) follows the frozen
// teacher's ODE for one small d = 1/M step.
inline LossInfo consistency_distillation_update(TrainState& student, const Params* teacher,
                                                const PairBatch& batch, Rng& rng) {
  if (teacher == nullptr)
    throw ContractError("consistency_distillation_update: teacher parameters required");
  int B = batch.x0.rows;
  if (B == 0) throw ContractError("consistency_distillation_update: empty batch");
  int M = student.grid.M;
  std::vector<double> t(B), t2(B);
  for (int r = 0; r < B; ++r) {
    int i = rng.uniform_int(M - 1);
    t[r] = static_cast<double>(i) / M;
    t2[r] = static_cast<double>(i + 1) / M;
  }
  Interpolation at_t = interpolate(batch.x0, batch.x1, t);

  ForwardInput tin{at_t.xt, t, std::vector<int>(B, 0), batch.labels};
  Tensor v_teacher = forward_eval(*teacher, student.net_cfg, student.grid, tin);
  Tensor x_td = at_t.xt;
  for (int i = 0; i < x_td.size(); ++i)
    x_td.data[i] += v_teacher.data[i] / static_cast<float>(M);

  ForwardInput sin{x_td, t2, std::vector<int>(B, 0), batch.labels};
  Tensor v2 = forward_eval(student.eval_params(), student.net_cfg, student.grid, sin);
  Tensor targets(B, x_td.cols);
  for (int r = 0; r < B; ++r)
    for (int c = 0; c < targets.cols; ++c) {
      double xhat1 = x_td.at(r, c) + (1.0 - t2[r]) * v2.at(r, c);
      targets.at(r, c) = static_cast<float>((xhat1 - at_t.xt.at(r, c)) / (1.0 - t[r]));
    }
  Rng* dropout = student.net_cfg.num_classes > 0 ? &rng : nullptr;
  LossInfo info = detail::regression_step(student, at_t.xt, t, std::vector<int>(B, 0),
                                          batch.labels, targets, 0, dropout);
  info.sc_loss = info.total;
  return info;
}

// Composition target for one distillation phase: the concatenation of two
// teacher steps of size d defines the student's single 2d step.
inline Tensor progressive_phase_target_field(const RowFieldFn& teacher, const StepGrid& grid,
                                             const Tensor& xt, const std::vector<double>& t,
                                             int teacher_bucket) {
  std::vector<int> buckets(xt.rows, teacher_bucket);
  Tensor u1 = teacher(xt, t, buckets);
  float d = static_cast<float>(grid.bucket_d(teacher_bucket));
  Tensor x_mid = xt;
  for (int i = 0; i < x_mid.size(); ++i) x_mid.data[i] += u1.data[i] * d;
  std::vector<double> t2(t);
  for (auto& v : t2) v += d;
  Tensor u2 = teacher(x_mid, t2, buckets);
  for (int i = 0; i < u1.size(); ++i) u1.data[i] = 0.5f * (u1.data[i] + u2.data[i]);
  return u1;
}

inline Tensor progressive_phase_target(const Params& teacher, const NetConfig& cfg,
                                       const StepGrid& grid, const Tensor& xt,
                                       const std::vector<double>& t, int teacher_bucket,
                                       const std::vector<int>& cls,
                                       std::optional<float> cfg_scale) {
  return progressive_phase_target_field(model_row_field(teacher, cfg, grid, cls, cfg_scale),
                                        grid, xt, t, teacher_bucket);
}

// Iterated teacher-student phases, each doubling the step size; the student
// (EMA) becomes the next teacher. CFG only in the first phase.
inline Params progressive_distillation_run(const Params& teacher0, const NetConfig& cfg,
                                           const StepGrid& grid, const Dataset& dataset,
                                           int phases, int steps_per_phase, int batch_size,
                                           std::uint64_t seed, const AdamWConfig& opt_cfg = {},
                                           float ema_ratio = 0.999f,
                                           std::optional<float> cfg_scale = {}) {
  if (phases != grid.log2_M())
    throw ConfigError("progressive_distillation_run: phases must equal log2(M) = " +
                      std::to_string(grid.log2_M()));
  Rng rng(seed);
  Params teacher = teacher0;
  for (int phase = 1; phase <= phases; ++phase) {
    int teacher_bucket = phase;       // d = 2^(phase-1)/M
    int student_bucket = phase + 1;   // 2d
    double two_d = grid.bucket_d(student_bucket);
    int slots = static_cast<int>(std::lround(1.0 / two_d));
    std::optional<float> phase_cfg = phase == 1 ? cfg_scale : std::nullopt;

    TrainState student;
    student.net_cfg = cfg;
    student.grid = grid;
    student.params = teacher;
    student.opt.cfg = opt_cfg;
    student.opt.init(student.params);
    student.ema.ratio = ema_ratio;
    student.ema.init(student.params);

    for (int s = 0; s < steps_per_phase; ++s) {
      PairBatch batch = draw_pairs(dataset, batch_size, rng);
      std::vector<double> t(batch_size);
      for (auto& v : t) v = static_cast<double>(rng.uniform_int(slots)) * two_d;
      Interpolation interp = interpolate(batch.x0, batch.x1, t);
      Tensor target = progressive_phase_target(teacher, cfg, grid, interp.xt, t, teacher_bucket,
                                               batch.labels, phase_cfg);
      Rng* dropout = cfg.num_classes > 0 ? &rng : nullptr;
      detail::regression_step(student, interp.xt, t,
                              std::vector<int>(batch_size, student_bucket), batch.labels, target,
                              0, dropout);
    }
    teacher = student.eval_params();
  }
  return teacher;
}

struct ReflowPairs {
  Tensor x0;               // noise draws
  Tensor x1;               // M-step teacher denoisings of those draws
  std::vector<int> labels; // class used per pair (empty when unconditional)
};

// Full ODE simulation of the teacher to build a straight synthetic pairing.
inline ReflowPairs reflow_generate(const Params& teacher, const NetConfig& cfg,
                                   const StepGrid& grid, int count, std::uint64_t seed,
                                   std::optional<float> cfg_scale = {}, int num_classes = 0) {
  ReflowPairs pairs;
  if (count == 0) return pairs;
  pairs.x0 = Tensor(count, cfg.input_dim);
  pairs.x1 = Tensor(count, cfg.input_dim);
  Rng rng(seed);
  const int chunk = 1024;
  int done = 0;
  while (done < count) {
    int b = std::min(chunk, count - done);
    Tensor x0(b, cfg.input_dim);
    for (auto& v : x0.data) v = rng.normalf();
    std::vector<int> cls;
    if (num_classes > 0) {
      cls.resize(b);
      for (auto& c : cls) c = rng.uniform_int(num_classes);
      pairs.labels.insert(pairs.labels.end(), cls.begin(), cls.end());
    }
    auto field = model_field(teacher, cfg, grid, cls, cfg_scale);
    Tensor x1 = euler_integrate(field, x0, grid.M, grid).samples;
    for (int r = 0; r < b; ++r)
      for (int c = 0; c < cfg.input_dim; ++c) {
        pairs.x0.at(done + r, c) = x0.at(r, c);
        pairs.x1.at(done + r, c) = x1.at(r, c);
      }
    done += b;
  }
  return pairs;
}

// Reflow training keeps the generated pairing fixed; rows are drawn jointly.
inline PairBatch draw_reflow_batch(const ReflowPairs& pairs, int batch_size, Rng& rng) {
  if (pairs.x0.rows == 0) throw ContractError("draw_reflow_batch: empty pair set");
  PairBatch b;
  b.x0 = Tensor(batch_size, pairs.x0.cols);
  b.x1 = Tensor(batch_size, pairs.x1.cols);
  if (!pairs.labels.empty()) b.labels.resize(batch_size);
  for (int i = 0; i < batch_size; ++i) {
    int r = rng.uniform_int(pairs.x0.rows);
    for (int c = 0; c < b.x0.cols; ++c) {
      b.x0.at(i, c) = pairs.x0.at(r, c);
      b.x1.at(i, c) = pairs.x1.at(r, c);
    }
    if (!pairs.labels.empty()) b.labels[i] = pairs.labels[r];
  }
  return b;
}

// Single-run reflow: 1-k flow-matching rows plus k rows regressing a fresh
// 8-step EMA denoising, trained under the d=1 conditioning.
inline LossInfo live_reflow_update(TrainState& state, const PairBatch& batch,
                                   const BatchPlan& plan, Rng& rng,
                                   std::optional<float> cfg_scale = {}) {
  int B = batch.x0.rows;
  if (B == 0) throw ContractError("live_reflow_update: empty batch");
  if (B != plan.batch_size) throw ContractError("live_reflow_update: batch size != plan");
  const int denoise_steps = 8;
  int n_boot = plan.num_sc_rows();
  int n_fm = B - n_boot;

  std::vector<double> t(B, 0.0);
  std::vector<int> bucket(B, 0);
  for (int r = 0; r < n_fm; ++r) t[r] = rng.uniform();

  Interpolation interp = interpolate(batch.x0, batch.x1, t);
  Tensor xt = interp.xt;
  Tensor targets = interp.v;
  std::vector<int> cls = batch.labels;

  if (n_boot > 0) {
    int one_step_bucket = state.grid.bucket_for_steps(1);
    Tensor noise(n_boot, state.net_cfg.input_dim);
    for (auto& v : noise.data) v = rng.normalf();
    std::vector<int> boot_cls;
    if (!cls.empty()) boot_cls.assign(cls.begin() + n_fm, cls.end());
    auto field = model_field(state.eval_params(), state.net_cfg, state.grid, boot_cls, cfg_scale);
    Tensor endpoint = euler_integrate(field, noise, denoise_steps, state.grid).samples;
    for (int r = 0; r < n_boot; ++r) {
      bucket[n_fm + r] = one_step_bucket;
      t[n_fm + r] = 0.0;
      for (int c = 0; c < xt.cols; ++c) {
        xt.at(n_fm + r, c) = noise.at(r, c);
        targets.at(n_fm + r, c) = endpoint.at(r, c) - noise.at(r, c);
      }
    }
  }
  Rng* dropout = state.net_cfg.num_classes > 0 ? &rng : nullptr;
  return detail::regression_step(state, xt, t, bucket, cls, targets, n_fm, dropout);
}

}  // namespace shortcut
