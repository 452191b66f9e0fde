#include <catch2/catch_amalgamated.hpp>
#include <cmath>
#include <numbers>

#include "shortcut/metrics.hpp"

using namespace shortcut;

namespace {

Tensor gaussian_cloud(int n, float cx, float cy, float sigma, std::uint64_t seed) {
  Rng rng(seed);
  Tensor t(n, 2);
  for (int r = 0; r < n; ++r) {
    t.at(r, 0) = cx + sigma * rng.normalf();
    t.at(r, 1) = cy + sigma * rng.normalf();
  }
  return t;
}

NetConfig small_cfg(const StepGrid& grid) {
  NetConfig cfg;
  cfg.input_dim = 2;
  cfg.hidden_dim = 8;
  cfg.num_layers = 1;
  cfg.time_embed_dim = 4;
  cfg.num_d_buckets = grid.num_embed_buckets();
  return cfg;
}

}  // namespace

TEST_CASE("mmd2 of a set against itself is zero") {
  Tensor a = gaussian_cloud(200, 0.5f, -1.0f, 1.0f, 1);
  CHECK(mmd2_rbf(a, a) < 1e-10);
  CHECK(mmd2_rbf(a, a, 0.7) < 1e-10);
}

TEST_CASE("mmd2 singleton closed form: 2(1 - exp(-|x-y|^2 / 2s^2))") {
  Tensor a(1, 2), b(1, 2);
  a.at(0, 0) = 1.0f;
  a.at(0, 1) = 2.0f;
  b.at(0, 0) = -1.0f;
  b.at(0, 1) = 0.5f;
  double r2 = 4.0 + 2.25;
  double sigma = 0.9;
  double expected = 2.0 * (1.0 - std::exp(-r2 / (2.0 * sigma * sigma)));
  CHECK_THAT(mmd2_rbf(a, b, sigma), Catch::Matchers::WithinAbs(expected, 1e-12));
}

TEST_CASE("mmd2 separates disjoint gaussians, is symmetric, rejects bad input") {
  Tensor a = gaussian_cloud(2000, 0.0f, 0.0f, 1.0f, 2);
  Tensor b = gaussian_cloud(2000, 6.0f, 0.0f, 1.0f, 3);
  Tensor a2 = gaussian_cloud(2000, 0.0f, 0.0f, 1.0f, 4);
  double apart = mmd2_rbf(a, b, 1.0);
  double same = mmd2_rbf(a, a2, 1.0);
  CHECK(apart > 10.0 * same);
  CHECK_THAT(mmd2_rbf(a, b, 1.0), Catch::Matchers::WithinAbs(mmd2_rbf(b, a, 1.0), 1e-12));

  CHECK_THROWS_AS(mmd2_rbf(Tensor{}, a), ContractError);
  Tensor wrong(5, 3);
  CHECK_THROWS_AS(mmd2_rbf(a, wrong), DimensionError);
}

TEST_CASE("mode coverage: exact centers, single mode, true generator") {
  Dataset ds = gen_eight_gaussians(4000, 5);
  CHECK(mode_coverage(ds.mode_centers, ds.mode_centers, 0.1).fraction == 1.0);

  Tensor single(4000, 2);
  for (int r = 0; r < 4000; ++r) {
    single.at(r, 0) = ds.mode_centers.at(0, 0);
    single.at(r, 1) = ds.mode_centers.at(0, 1);
  }
  CHECK_THAT(mode_coverage(single, ds.mode_centers, 0.5).fraction,
             Catch::Matchers::WithinAbs(1.0 / 8.0, 1e-12));

  // real samples cover everything within 3 sigma
  CoverageResult cov = mode_coverage(ds.points, ds.mode_centers, 3.0 * ds.mode_sigma);
  CHECK(cov.fraction == 1.0);

  CHECK_THROWS_AS(mode_coverage(ds.points, Tensor{}, 1.0), ContractError);
  CHECK_THROWS_AS(mode_coverage(ds.points, ds.mode_centers, 0.0), ContractError);
}

TEST_CASE("mean collapse: point mass at the data mean scores zero radius") {
  Dataset ds = gen_eight_gaussians(20000, 6);
  double mx = 0.0, my = 0.0;
  for (int r = 0; r < ds.size(); ++r) {
    mx += ds.points.at(r, 0);
    my += ds.points.at(r, 1);
  }
  mx /= ds.size();
  my /= ds.size();
  Tensor collapsed(100, 2);
  for (int r = 0; r < 100; ++r) {
    collapsed.at(r, 0) = static_cast<float>(mx);
    collapsed.at(r, 1) = static_cast<float>(my);
  }
  CollapseResult res = mean_collapse(collapsed, ds.points);
  CHECK(res.mean_distance < 1e-6);
  CHECK(res.mean_radius < 1e-6);
}

TEST_CASE("mean collapse: honest samples keep the ring radius") {
  Dataset ds = gen_eight_gaussians(20000, 7);
  CollapseResult res = mean_collapse(ds.points, ds.points);
  // modes sit on a circle of radius 4, spread sigma 0.3
  CHECK_THAT(res.mean_radius, Catch::Matchers::WithinRel(4.0, 0.05));
  CHECK(res.mean_distance < 0.05);
  CHECK_THROWS_AS(mean_collapse(Tensor{}, ds.points), ContractError);
}

TEST_CASE("self-consistency residual is zero for nets the identity holds on") {
  StepGrid grid(8);
  NetConfig cfg = small_cfg(grid);
  Dataset ds = gen_eight_gaussians(500, 8);
  normalize(ds);

  // zero net: s == 0 everywhere, identity trivially exact
  Params zero = init_params(cfg, grid, 0);
  Rng r1(11);
  ScResidual res = self_consistency_residual(zero, cfg, grid, ds, 200, r1);
  CHECK(res.residual < 1e-12);
  CHECK(res.mean_norm < 1e-12);

  // constant net: s == c for all inputs, so the averaged target equals c too
  Params constant = init_params(cfg, grid, 0);
  constant.b.back().at(0, 0) = 0.8f;
  constant.b.back().at(0, 1) = -0.4f;
  Rng r2(12);
  ScResidual cres = self_consistency_residual(constant, cfg, grid, ds, 200, r2);
  CHECK(cres.residual < 1e-6);
  CHECK_THAT(cres.mean_norm, Catch::Matchers::WithinAbs(std::sqrt(0.8 * 0.8 + 0.4 * 0.4), 1e-5));
}

TEST_CASE("sliced w2: self-distance zero, point-mass closed form, count guard") {
  Tensor a = gaussian_cloud(500, 1.0f, -2.0f, 1.5f, 13);
  Rng r1(1);
  CHECK(sliced_w2(a, a, 32, r1) < 1e-12);

  // 1-D point masses at 0 and c: every unit direction is +-1, so exactly c^2
  Tensor x1 = Tensor::zeros(50, 1);
  Tensor y1 = Tensor::full(50, 1, 2.5f);
  Rng r2(2);
  CHECK_THAT(sliced_w2(x1, y1, 16, r2), Catch::Matchers::WithinAbs(6.25, 1e-10));

  // 2-D point masses at 0 and p: projections give (dir . p)^2, which
  // averages |p|^2 / 2 over uniform directions
  Tensor x = Tensor::zeros(100, 2);
  Tensor y(100, 2);
  for (int r = 0; r < 100; ++r) {
    y.at(r, 0) = 3.0f;
    y.at(r, 1) = 4.0f;
  }
  Rng r3(3);
  double got = sliced_w2(x, y, 20000, r3);
  CHECK_THAT(got, Catch::Matchers::WithinRel(25.0 / 2.0, 0.03));

  Tensor shorter = gaussian_cloud(400, 0.0f, 0.0f, 1.0f, 14);
  CHECK_THROWS_AS(sliced_w2(a, shorter, 8, r2), ContractError);
}

TEST_CASE("straightness deficit: line is exact zero, quarter circle matches closed form") {
  std::vector<std::vector<double>> line;
  for (int i = 0; i <= 10; ++i) line.push_back({0.3 * i, -0.1 * i});
  CHECK(straightness_deficit(line) == 0.0);

  // quarter circle: chord r*sqrt(2), arc pi*r/2, deficit 1 - 2*sqrt(2)/pi
  std::vector<std::vector<double>> quarter;
  int n = 20000;
  for (int i = 0; i <= n; ++i) {
    double th = (std::numbers::pi / 2.0) * i / n;
    quarter.push_back({std::cos(th), std::sin(th)});
  }
  double expected = 1.0 - 2.0 * std::sqrt(2.0) / std::numbers::pi;
  CHECK_THAT(straightness_deficit(quarter), Catch::Matchers::WithinAbs(expected, 1e-6));

  CHECK(straightness_deficit({}) == 0.0);
  CHECK(straightness_deficit({{1.0, 2.0}}) == 0.0);
  // degenerate loop back to the start: arc positive, chord zero
  CHECK(straightness_deficit({{0.0, 0.0}, {1.0, 0.0}, {0.0, 0.0}}) == 1.0);
}

TEST_CASE("path straightness is zero under a constant-velocity model") {
  StepGrid grid(8);
  NetConfig cfg = small_cfg(grid);
  Params constant = init_params(cfg, grid, 0);
  constant.b.back().at(0, 0) = 1.0f;
  constant.b.back().at(0, 1) = 0.5f;
  CHECK(path_straightness(constant, cfg, grid, 16, 99) < 1e-6);
}
