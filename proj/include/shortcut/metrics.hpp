#pragma once

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <vector>

#include "shortcut/data.hpp"
#include "shortcut/errors.hpp"
#include "shortcut/objectives.hpp"
#include "shortcut/sampler.hpp"

namespace shortcut {

// One evaluation row, keyed by step budget. All accumulation is 64-bit.
struct MetricsRecord {
  int step_budget = 0;
  double mmd2 = 0.0;
  double mode_coverage = 0.0;
  double mean_collapse = 0.0;  // distance of sample mean from data mean
  double mean_radius = 0.0;    // mean per-sample distance to the data mean
  double sc_residual = 0.0;
  double sliced_w2 = 0.0;
};

inline double median_pairwise_distance(const Tensor& a, const Tensor& b) {
  std::vector<double> dist;
  dist.reserve(static_cast<size_t>(a.rows) * b.rows);
  for (int i = 0; i < a.rows; ++i)
    for (int j = 0; j < b.rows; ++j) {
      double s = 0.0;
      for (int c = 0; c < a.cols; ++c) {
        double d = static_cast<double>(a.at(i, c)) - b.at(j, c);
        s += d * d;
      }
      dist.push_back(std::sqrt(s));
    }
  std::nth_element(dist.begin(), dist.begin() + dist.size() / 2, dist.end());
  return dist[dist.size() / 2];
}

// Biased (V-statistic) squared MMD with RBF kernel; nonnegative by
// construction. bandwidth <= 0 selects the median pairwise heuristic.
inline double mmd2_rbf(const Tensor& a, const Tensor& b, double bandwidth = 0.0) {
  if (a.rows == 0 || b.rows == 0) throw ContractError("mmd2_rbf: empty sample set");
  if (a.cols != b.cols) throw DimensionError("mmd2_rbf: dimension mismatch");
  double sigma = bandwidth > 0.0 ? bandwidth : median_pairwise_distance(a, b);
  if (sigma <= 0.0) sigma = 1.0;
  double inv = 1.0 / (2.0 * sigma * sigma);
  auto kmean = [&](const Tensor& x, const Tensor& y) {
    double s = 0.0;
    for (int i = 0; i < x.rows; ++i)
      for (int j = 0; j < y.rows; ++j) {
        double r2 = 0.0;
        for (int c = 0; c < x.cols; ++c) {
          double d = static_cast<double>(x.at(i, c)) - y.at(j, c);
          r2 += d * d;
        }
        s += std::exp(-r2 * inv);
      }
    return s / (static_cast<double>(x.rows) * y.rows);
  };
  double v = kmean(a, a) + kmean(b, b) - 2.0 * kmean(a, b);
  return std::max(v, 0.0);
}

struct CoverageResult {
  double fraction = 0.0;
  std::vector<int> per_mode_counts;
};

// A mode counts as covered when at least max(1, 1% of n) samples fall within
// radius of its center.
inline CoverageResult mode_coverage(const Tensor& samples, const Tensor& centers, double radius) {
  if (centers.rows == 0) throw ContractError("mode_coverage: no modes given");
  if (radius <= 0.0) throw ContractError("mode_coverage: radius must be positive");
  CoverageResult res;
  res.per_mode_counts.assign(centers.rows, 0);
  for (int i = 0; i < samples.rows; ++i)
    for (int k = 0; k < centers.rows; ++k) {
      double r2 = 0.0;
      for (int c = 0; c < samples.cols; ++c) {
        double d = static_cast<double>(samples.at(i, c)) - centers.at(k, c);
        r2 += d * d;
      }
      if (r2 <= radius * radius) ++res.per_mode_counts[k];
    }
  int threshold = std::max(1, static_cast<int>(0.01 * samples.rows));
  int covered = 0;
  for (int c : res.per_mode_counts)
    if (c >= threshold) ++covered;
  res.fraction = static_cast<double>(covered) / centers.rows;
  return res;
}

struct CollapseResult {
  double mean_distance = 0.0;  // || mean(samples) - mean(data) ||
  double mean_radius = 0.0;    // mean_i || sample_i - mean(data) ||
};

// Detects the one-step failure where samples concentrate at the data mean.
inline CollapseResult mean_collapse(const Tensor& samples, const Tensor& data) {
  if (samples.rows == 0 || data.rows == 0) throw ContractError("mean_collapse: empty input");
  int D = samples.cols;
  std::vector<double> data_mean(D, 0.0), sample_mean(D, 0.0);
  for (int r = 0; r < data.rows; ++r)
    for (int c = 0; c < D; ++c) data_mean[c] += data.at(r, c);
  for (auto& v : data_mean) v /= data.rows;
  CollapseResult res;
  for (int r = 0; r < samples.rows; ++r) {
    double r2 = 0.0;
    for (int c = 0; c < D; ++c) {
      double d = samples.at(r, c) - data_mean[c];
      r2 += d * d;
      sample_mean[c] += samples.at(r, c);
    }
    res.mean_radius += std::sqrt(r2);
  }
  res.mean_radius /= samples.rows;
  double m2 = 0.0;
  for (int c = 0; c < D; ++c) {
    double d = sample_mean[c] / samples.rows - data_mean[c];
    m2 += d * d;
  }
  res.mean_distance = std::sqrt(m2);
  return res;
}

struct ScResidual {
  double residual = 0.0;   // mean || s(x,t,2d) - (s(x,t,d)+s(x',t+d,d))/2 ||
  double mean_norm = 0.0;  // mean || s(x,t,2d) ||
};

// Probes the self-consistency identity at random on-grid (x_t, t, d),
// evaluating the given (EMA) parameters.
inline ScResidual self_consistency_residual(const Params& params, const NetConfig& cfg,
                                            const StepGrid& grid, const Dataset& dataset,
                                            int n_probes, Rng& rng) {
  PairBatch batch = draw_pairs(dataset, n_probes, rng);
  std::vector<double> t(n_probes);
  std::vector<int> d_half(n_probes), trained(n_probes);
  for (int r = 0; r < n_probes; ++r) {
    DtSample s = sample_d_t(grid, rng);
    t[r] = s.t;
    d_half[r] = s.d_half_bucket;
    trained[r] = s.trained_bucket;
  }
  Interpolation interp = interpolate(batch.x0, batch.x1, t);
  std::vector<int> cls;
  if (cfg.num_classes > 0) cls = batch.labels;
  auto targets = make_shortcut_targets(params, cfg, grid, interp.xt, t, d_half, cls);
  ForwardInput in{interp.xt, t, trained, cls};
  Tensor big = forward_eval(params, cfg, grid, in);
  ScResidual res;
  for (int r = 0; r < n_probes; ++r) {
    double r2 = 0.0, n2 = 0.0;
    for (int c = 0; c < big.cols; ++c) {
      double d = static_cast<double>(big.at(r, c)) - targets.target.at(r, c);
      r2 += d * d;
      n2 += static_cast<double>(big.at(r, c)) * big.at(r, c);
    }
    res.residual += std::sqrt(r2);
    res.mean_norm += std::sqrt(n2);
  }
  res.residual /= n_probes;
  res.mean_norm /= n_probes;
  return res;
}

// Average 1-D squared W2 over random unit directions, by sorted matching.
// Equal sample counts keep the quantile matching exact.
inline double sliced_w2(const Tensor& a, const Tensor& b, int n_projections, Rng& rng) {
  if (a.rows == 0 || b.rows == 0) throw ContractError("sliced_w2: empty sample set");
  if (a.cols != b.cols) throw DimensionError("sliced_w2: dimension mismatch");
  if (a.rows != b.rows) throw ContractError("sliced_w2: sample counts must match");
  double acc = 0.0;
  std::vector<double> pa(a.rows), pb(b.rows);
  for (int p = 0; p < n_projections; ++p) {
    std::vector<double> dir(a.cols);
    double norm = 0.0;
    for (auto& v : dir) {
      v = rng.normal();
      norm += v * v;
    }
    norm = std::sqrt(norm);
    if (norm < 1e-12) continue;
    for (auto& v : dir) v /= norm;
    for (int r = 0; r < a.rows; ++r) {
      double sa = 0.0, sb = 0.0;
      for (int c = 0; c < a.cols; ++c) {
        sa += dir[c] * a.at(r, c);
        sb += dir[c] * b.at(r, c);
      }
      pa[r] = sa;
      pb[r] = sb;
    }
    std::sort(pa.begin(), pa.end());
    std::sort(pb.begin(), pb.end());
    double w = 0.0;
    for (int r = 0; r < a.rows; ++r) {
      double d = pa[r] - pb[r];
      w += d * d;
    }
    acc += w / a.rows;
  }
  return acc / n_projections;
}

// 1 - chord/arc for one recorded polyline; 0 when perfectly straight.
inline double straightness_deficit(const std::vector<std::vector<double>>& points) {
  if (points.size() < 2) return 0.0;
  size_t D = points.front().size();
  double arc = 0.0;
  for (size_t i = 1; i < points.size(); ++i) {
    double s = 0.0;
    for (size_t c = 0; c < D; ++c) {
      double d = points[i][c] - points[i - 1][c];
      s += d * d;
    }
    arc += std::sqrt(s);
  }
  double chord2 = 0.0;
  for (size_t c = 0; c < D; ++c) {
    double d = points.back()[c] - points.front()[c];
    chord2 += d * d;
  }
  if (arc < 1e-300) return 0.0;
  return std::max(0.0, 1.0 - std::sqrt(chord2) / arc);
}

// Mean straightness deficit of full-budget model trajectories from noise.
inline double path_straightness(const Params& params, const NetConfig& cfg, const StepGrid& grid,
                                int n_probes, std::uint64_t seed) {
  SampleRequest req;
  req.num_steps = grid.M;
  req.count = n_probes;
  req.seed = seed;
  req.record_trajectory = true;
  SampleResult res = euler_sample(params, cfg, grid, req);
  double acc = 0.0;
  for (int r = 0; r < n_probes; ++r) {
    std::vector<std::vector<double>> traj;
    traj.reserve(res.trajectory.size());
    for (const Tensor& snap : res.trajectory) {
      std::vector<double> p(cfg.input_dim);
      for (int c = 0; c < cfg.input_dim; ++c) p[c] = snap.at(r, c);
      traj.push_back(std::move(p));
    }
    acc += straightness_deficit(traj);
  }
  return acc / n_probes;
}

}  // namespace shortcut
