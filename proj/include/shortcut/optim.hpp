#pragma once

#include <cmath>
#include <cstdint>

#include "shortcut/errors.hpp"
#include "shortcut/net.hpp"

namespace shortcut {

struct AdamWConfig {
  float lr = 1e-4f;
  float beta1 = 0.9f;
  float beta2 = 0.999f;
  float eps = 1e-8f;
  float weight_decay = 0.1f;
};

// AdamW with bias correction and decoupled decay:
//   theta <- theta - lr * m_hat / (sqrt(v_hat) + eps) - lr * wd * theta
class AdamW {
 public:
  AdamWConfig cfg;
  Params m, v;
  std::int64_t step = 0;

  void init(const Params& like) {
    m = Params::zeros_like(like);
    v = Params::zeros_like(like);
    step = 0;
  }

  void update(Params& params, const Params& grads) {
    auto ps = params.tensors();
    auto gs = grads.tensors();
    auto ms = m.tensors();
    auto vs = v.tensors();
    if (ps.size() != gs.size() || ps.size() != ms.size())
      throw ContractError("adamw_step: gradient map does not cover all parameters");
    ++step;
    float bc1 = 1.0f - std::pow(cfg.beta1, static_cast<float>(step));
    float bc2 = 1.0f - std::pow(cfg.beta2, static_cast<float>(step));
    for (size_t i = 0; i < ps.size(); ++i) {
      Tensor& p = *ps[i];
      const Tensor& g = *gs[i];
      Tensor& mi = *ms[i];
      Tensor& vi = *vs[i];
      if (!p.same_shape(g))
        throw ContractError("adamw_step: gradient shape " + g.shape_str() + " != parameter " +
                            p.shape_str());
      for (int j = 0; j < p.size(); ++j) {
        mi.data[j] = cfg.beta1 * mi.data[j] + (1.0f - cfg.beta1) * g.data[j];
        vi.data[j] = cfg.beta2 * vi.data[j] + (1.0f - cfg.beta2) * g.data[j] * g.data[j];
        float mhat = mi.data[j] / bc1;
        float vhat = vi.data[j] / bc2;
        p.data[j] -= cfg.lr * mhat / (std::sqrt(vhat) + cfg.eps) + cfg.lr * cfg.weight_decay * p.data[j];
      }
    }
  }
};

// Exponential moving average shadow of the parameters. Targets and
// evaluation read the shadow; the optimizer only ever touches the live set.
class Ema {
 public:
  float ratio = 0.999f;
  Params shadow;

  void init(const Params& params) { shadow = params; }

  void update(const Params& params) {
    auto ss = shadow.tensors();
    auto ps = params.tensors();
    if (ss.size() != ps.size()) throw DimensionError("ema_update: parameter count mismatch");
    for (size_t i = 0; i < ss.size(); ++i) {
      if (!ss[i]->same_shape(*ps[i]))
        throw DimensionError("ema_update: shape mismatch " + ss[i]->shape_str() + " vs " +
                             ps[i]->shape_str());
      for (int j = 0; j < ss[i]->size(); ++j)
        ss[i]->data[j] = ratio * ss[i]->data[j] + (1.0f - ratio) * ps[i]->data[j];
    }
  }
};

// Live parameters plus optimizer and EMA state, the unit that trains,
// checkpoints, and evaluates.
struct TrainState {
  NetConfig net_cfg;
  StepGrid grid;
  Params params;
  AdamW opt;
  Ema ema;
  std::int64_t step = 0;

  static TrainState create(const NetConfig& cfg, const StepGrid& grid, std::uint64_t seed,
                           const AdamWConfig& opt_cfg = {}, float ema_ratio = 0.999f) {
    TrainState s;
    s.net_cfg = cfg;
    s.grid = grid;
    s.params = init_params(cfg, grid, seed);
    s.opt.cfg = opt_cfg;
    s.opt.init(s.params);
    s.ema.ratio = ema_ratio;
    s.ema.init(s.params);
    return s;
  }

  // Evaluation and target generation read this set.
  const Params& eval_params() const { return ema.shadow; }
};

}  // namespace shortcut
