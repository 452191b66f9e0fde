#include <catch2/catch_amalgamated.hpp>
#include <cmath>

#include "shortcut/optim.hpp"

using namespace shortcut;

namespace {

// Minimal one-tensor parameter set for scalar recursions.
Params scalar_params(float v) {
  Params p;
  p.w.push_back(Tensor::scalar(v));
  p.b.push_back(Tensor::scalar(0.0f));
  p.time_w = Tensor::scalar(0.0f);
  p.time_b = Tensor::scalar(0.0f);
  p.d_embed = Tensor::scalar(0.0f);
  return p;
}

}  // namespace

TEST_CASE("adamw with zero gradient applies pure decoupled decay") {
  Params p = scalar_params(2.0f);
  AdamW opt;
  opt.cfg.lr = 0.01f;
  opt.cfg.weight_decay = 0.1f;
  opt.init(p);
  Params g = Params::zeros_like(p);
  opt.update(p, g);
  CHECK_THAT(p.w[0].data[0], Catch::Matchers::WithinRel(2.0f * (1.0f - 0.01f * 0.1f), 1e-6f));
}

TEST_CASE("adamw with wd=0 and zero gradients is the identity") {
  Params p = scalar_params(-1.25f);
  AdamW opt;
  opt.cfg.weight_decay = 0.0f;
  opt.init(p);
  opt.update(p, Params::zeros_like(p));
  CHECK(p.w[0].data[0] == -1.25f);
}

TEST_CASE("first adamw step with constant gradient is a signed lr step") {
  Params p = scalar_params(0.0f);
  AdamW opt;
  opt.cfg.lr = 0.001f;
  opt.cfg.weight_decay = 0.0f;
  opt.init(p);
  Params g = Params::zeros_like(p);
  g.w[0].data[0] = 0.5f;
  opt.update(p, g);
  // after bias correction m_hat = g, v_hat = g^2, so step = -lr * g/(|g|+eps)
  CHECK_THAT(p.w[0].data[0], Catch::Matchers::WithinRel(-0.001f * 0.5f / (0.5f + opt.cfg.eps), 1e-4f));
}

TEST_CASE("adamw minimizes mse(theta, 5) against the 64-bit reference recursion") {
  Params p = scalar_params(0.0f);
  AdamW opt;
  opt.cfg.lr = 0.1f;
  opt.cfg.weight_decay = 0.0f;
  opt.init(p);

  // reference scalar recursion in double
  double th = 0.0, m = 0.0, v = 0.0;
  for (int s = 1; s <= 200; ++s) {
    float grad = 2.0f * (p.w[0].data[0] - 5.0f);
    Params g = Params::zeros_like(p);
    g.w[0].data[0] = grad;
    opt.update(p, g);

    double gd = 2.0 * (th - 5.0);
    m = 0.9 * m + 0.1 * gd;
    v = 0.999 * v + 0.001 * gd * gd;
    double mh = m / (1.0 - std::pow(0.9, s));
    double vh = v / (1.0 - std::pow(0.999, s));
    th -= 0.1 * mh / (std::sqrt(vh) + 1e-8);
  }
  CHECK_THAT(p.w[0].data[0], Catch::Matchers::WithinAbs(5.0f, 0.1f));
  CHECK_THAT(p.w[0].data[0], Catch::Matchers::WithinAbs(static_cast<float>(th), 1e-3f));
}

TEST_CASE("adamw rejects incomplete or mismatched gradient maps") {
  Params p = scalar_params(1.0f);
  AdamW opt;
  opt.init(p);
  Params bad = Params::zeros_like(p);
  bad.w[0] = Tensor::zeros(2, 2);
  CHECK_THROWS_AS(opt.update(p, bad), ContractError);
}

TEST_CASE("ema update: fixed point, single step, geometric series") {
  Params p = scalar_params(1.0f);
  Ema ema;
  ema.ratio = 0.999f;
  ema.init(p);
  ema.update(p);
  CHECK(ema.shadow.w[0].data[0] == 1.0f);  // shadow == params stays put

  Params zero = scalar_params(0.0f);
  ema.init(zero);
  ema.update(p);
  CHECK_THAT(ema.shadow.w[0].data[0], Catch::Matchers::WithinRel(0.001f, 1e-4f));

  // n updates with constant params from shadow 0 -> p * (1 - ratio^n)
  ema.init(zero);
  int n = 500;
  for (int i = 0; i < n; ++i) ema.update(p);
  double expect = 1.0 - std::pow(0.999, n);
  CHECK_THAT(ema.shadow.w[0].data[0], Catch::Matchers::WithinRel(static_cast<float>(expect), 1e-3f));
}

TEST_CASE("ema update is a contraction toward the live parameters") {
  Rng rng(3);
  Params p = scalar_params(rng.normalf());
  Params shadow_src = scalar_params(rng.normalf());
  Ema ema;
  ema.ratio = 0.95f;
  ema.init(shadow_src);
  float before = std::abs(ema.shadow.w[0].data[0] - p.w[0].data[0]);
  ema.update(p);
  float after = std::abs(ema.shadow.w[0].data[0] - p.w[0].data[0]);
  CHECK_THAT(after, Catch::Matchers::WithinRel(0.95f * before, 1e-4f));
}

TEST_CASE("eval params read the ema shadow, not the live set") {
  StepGrid grid(8);
  NetConfig cfg;
  cfg.input_dim = 2;
  cfg.hidden_dim = 8;
  cfg.num_layers = 1;
  cfg.time_embed_dim = 4;
  cfg.num_d_buckets = grid.num_embed_buckets();
  TrainState st = TrainState::create(cfg, grid, 5);

  // immediately after init: shadow == live, identical outputs
  Rng rng(8);
  ForwardInput in{Tensor::randn(3, 2, rng), {0.2, 0.5, 0.8}, {0, 1, 2}, {}};
  Tensor live = forward_eval(st.params, cfg, grid, in);
  Tensor shadow = forward_eval(st.eval_params(), cfg, grid, in);
  CHECK(live.data == shadow.data);

  // diverge the live params; eval output must track the shadow exactly
  for (auto& v : st.params.w.back().data) v = 0.7f;
  Tensor live2 = forward_eval(st.params, cfg, grid, in);
  Tensor shadow2 = forward_eval(st.eval_params(), cfg, grid, in);
  CHECK(shadow2.data == shadow.data);
  CHECK(live2.data != shadow2.data);
}
