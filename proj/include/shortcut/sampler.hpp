#pragma once

#include <cstdint>
#include <functional>
#include <optional>
#include <vector>

#include "shortcut/errors.hpp"
#include "shortcut/net.hpp"

namespace shortcut {

// A batched velocity field: rows of x, shared time t and step bucket.
using FieldFn = std::function<Tensor(const Tensor& x, double t, int bucket)>;

inline FieldFn model_field(const Params& params, const NetConfig& cfg, const StepGrid& grid,
                           std::vector<int> cls = {}, std::optional<float> cfg_scale = {}) {
  return [&params, cfg, grid, cls = std::move(cls), cfg_scale](const Tensor& x, double t,
                                                               int bucket) {
    ForwardInput in;
    in.x = x;
    in.t.assign(x.rows, t);
    in.bucket.assign(x.rows, bucket);
    if (cfg.num_classes > 0) {
      if (cls.empty())
        in.cls.assign(x.rows, -1);
      else if (static_cast<int>(cls.size()) == 1)
        in.cls.assign(x.rows, cls[0]);
      else
        in.cls = cls;
    }
    return forward_eval_cfg(params, cfg, grid, in, cfg_scale);
  };
}

struct EulerResult {
  Tensor samples;
  std::vector<Tensor> trajectory;  // num_steps+1 snapshots when recorded
};

// Algorithm: x <- x + s(x, t, d) * d with d = 1/num_steps and t = n/num_steps
// (t by division, never accumulated, so the final time is exactly 1).
inline EulerResult euler_integrate(const FieldFn& field, const Tensor& x0, int num_steps,
                                   const StepGrid& grid, bool record_trajectory = false) {
  int bucket = grid.bucket_for_steps(num_steps);
  double d = 1.0 / num_steps;
  EulerResult res;
  res.samples = x0;
  if (record_trajectory) res.trajectory.push_back(res.samples);
  // accumulate positions in 64-bit so a constant field telescopes exactly
  std::vector<double> acc(x0.data.begin(), x0.data.end());
  for (int n = 0; n < num_steps; ++n) {
    double t = static_cast<double>(n) / num_steps;
    Tensor v = field(res.samples, t, bucket);
    check_same_shape(v, res.samples, "euler_integrate");
    for (int i = 0; i < res.samples.size(); ++i) {
      acc[i] += d * static_cast<double>(v.data[i]);
      res.samples.data[i] = static_cast<float>(acc[i]);
    }
    if (record_trajectory) res.trajectory.push_back(res.samples);
  }
  return res;
}

struct SampleRequest {
  int num_steps = 128;
  int count = 1000;
  std::vector<int> cls;  // empty, single shared label, or per-sample labels
  std::uint64_t seed = 0;
  bool record_trajectory = false;
  std::optional<float> cfg_scale;
};

struct SampleResult {
  Tensor x0;       // initial noise, count x D
  Tensor samples;  // final points, count x D
  std::vector<Tensor> trajectory;
};

inline Tensor draw_noise(int count, int dim, std::uint64_t seed) {
  Rng rng(seed);
  Tensor x0(count, dim);
  for (auto& v : x0.data) v = rng.normalf();
  return x0;
}

inline SampleResult euler_sample(const Params& params, const NetConfig& cfg, const StepGrid& grid,
                                 const SampleRequest& req) {
  if (req.count < 0) throw RequestError("euler_sample: negative count");
  grid.bucket_for_steps(req.num_steps);  // validates the budget
  SampleResult res;
  if (req.count == 0) return res;
  res.x0 = draw_noise(req.count, cfg.input_dim, req.seed);
  auto field = model_field(params, cfg, grid, req.cls, req.cfg_scale);
  auto er = euler_integrate(field, res.x0, req.num_steps, grid, req.record_trajectory);
  res.samples = std::move(er.samples);
  res.trajectory = std::move(er.trajectory);
  return res;
}

// Samples every budget from the same seed (identical initial noise across
// budgets) and hands each result to the caller's evaluation hook.
inline void step_sweep(const Params& params, const NetConfig& cfg, const StepGrid& grid,
                       const std::vector<int>& budgets, const SampleRequest& base,
                       const std::function<void(int, const SampleResult&)>& eval_hook) {
  for (int budget : budgets) {
    SampleRequest req = base;
    req.num_steps = budget;
    eval_hook(budget, euler_sample(params, cfg, grid, req));
  }
}

// Variance-preserving blend of two fixed noise draws, denoised per n.
// n=1 returns the first draw's generation, n=0 the second's.
inline std::vector<Tensor> interpolation_sweep(const Params& params, const NetConfig& cfg,
                                               const StepGrid& grid,
                                               std::pair<std::uint64_t, std::uint64_t> seed_pair,
                                               const std::vector<double>& n_values,
                                               int num_steps = 1,
                                               std::optional<float> cfg_scale = {},
                                               std::vector<int> cls = {}) {
  Tensor a = draw_noise(1, cfg.input_dim, seed_pair.first);
  Tensor b = draw_noise(1, cfg.input_dim, seed_pair.second);
  auto field = model_field(params, cfg, grid, std::move(cls), cfg_scale);
  std::vector<Tensor> out;
  for (double n : n_values) {
    if (n < 0.0 || n > 1.0) throw DomainError("interpolation_sweep: n outside [0,1]");
    Tensor x0(1, cfg.input_dim);
    double w = std::sqrt(std::max(0.0, 1.0 - n * n));
    for (int c = 0; c < cfg.input_dim; ++c)
      x0.data[c] = static_cast<float>(n * a.data[c] + w * b.data[c]);
    out.push_back(euler_integrate(field, x0, num_steps, grid).samples);
  }
  return out;
}

}  // namespace shortcut
