#pragma once

#include <cstdint>
#include <filesystem>
#include <fstream>
#include <iomanip>
#include <iostream>
#include <limits>
#include <sstream>
#include <string>
#include <vector>

#include "shortcut/checkpoint.hpp"
#include "shortcut/config.hpp"
#include "shortcut/metrics.hpp"
#include "shortcut/objectives.hpp"
#include "shortcut/svg.hpp"

namespace shortcut {

inline constexpr char kMetricsHeader[] =
    "step,budget,mmd2,coverage,mean_collapse,sc_residual,sliced_w2";

inline std::string format_full(double v) {
  std::ostringstream ss;
  ss << std::setprecision(std::numeric_limits<double>::max_digits10) << v;
  return ss.str();
}

inline std::vector<int> eval_classes(const NetConfig& net, int count) {
  std::vector<int> cls;
  if (net.num_classes > 0) {
    cls.resize(count);
    for (int r = 0; r < count; ++r) cls[r] = r % net.num_classes;
  }
  return cls;
}

// Full metrics row for one step budget, evaluated on the EMA parameters.
// Uses seeds derived from (seed, step, budget) so evaluation never perturbs
// the training stream.
inline MetricsRecord evaluate_budget(const TrainState& state, const RunConfig& cfg,
                                     const Dataset& ds, int budget, std::int64_t step) {
  std::uint64_t base = cfg.seed * 1000003ull + static_cast<std::uint64_t>(step) * 8191ull +
                       static_cast<std::uint64_t>(budget);
  SampleRequest req;
  req.num_steps = budget;
  req.count = cfg.eval_count;
  req.seed = base;
  req.cls = eval_classes(state.net_cfg, cfg.eval_count);
  req.cfg_scale = cfg.guidance();
  SampleResult res = euler_sample(state.eval_params(), state.net_cfg, state.grid, req);

  Rng eval_rng(base + 1);
  PairBatch ref = draw_pairs(ds, cfg.eval_count, eval_rng);

  MetricsRecord rec;
  rec.step_budget = budget;
  rec.mmd2 = mmd2_rbf(res.samples, ref.x1);
  rec.mode_coverage =
      mode_coverage(res.samples, ds.mode_centers, 3.0 * ds.mode_sigma).fraction;
  CollapseResult col = mean_collapse(res.samples, ds.points);
  rec.mean_collapse = col.mean_distance;
  rec.mean_radius = col.mean_radius;
  Rng probe_rng(base + 2);
  rec.sc_residual =
      self_consistency_residual(state.eval_params(), state.net_cfg, state.grid, ds, 256, probe_rng)
          .residual;
  Rng proj_rng(base + 3);
  rec.sliced_w2 = sliced_w2(res.samples, ref.x1, 64, proj_rng);
  return rec;
}

inline void append_metrics_row(std::ostream& os, std::int64_t step, const MetricsRecord& r) {
  os << step << ',' << r.step_budget << ',' << format_full(r.mmd2) << ','
     << format_full(r.mode_coverage) << ',' << format_full(r.mean_collapse) << ','
     << format_full(r.sc_residual) << ',' << format_full(r.sliced_w2) << '\n';
}

namespace detail {

inline Params load_teacher(const RunConfig& cfg) {
  LoadedCheckpoint t = load_checkpoint(cfg.teacher);
  NetConfig want = cfg.net_config();
  NetConfig got = t.state.net_cfg;
  if (got.input_dim != want.input_dim || got.hidden_dim != want.hidden_dim ||
      got.num_layers != want.num_layers || got.time_embed_dim != want.time_embed_dim ||
      got.num_d_buckets != want.num_d_buckets || got.num_classes != want.num_classes)
    throw ConfigError("teacher checkpoint architecture does not match this config");
  return t.state.eval_params();
}

}  // namespace detail

// Runs cfg.objective to completion, appending metric rows and writing
// periodic + final checkpoints under out_dir. Returns the trained state.
inline TrainState cmd_train(const RunConfig& cfg, const std::string& out_dir,
                            std::ostream* log = &std::cout) {
  cfg.validate();
  std::filesystem::create_directories(out_dir);
  std::ofstream metrics(out_dir + "/metrics.csv", std::ios::trunc);
  if (!metrics) throw FileError("cannot write metrics CSV: " + out_dir + "/metrics.csv");
  metrics << kMetricsHeader << '\n';

  Dataset ds = cfg.make_dataset();
  TrainState state = TrainState::create(cfg.net_config(), cfg.grid(), cfg.seed, cfg.opt_config(),
                                        cfg.ema_ratio);

  auto eval_and_log = [&](std::int64_t step, const LossInfo& loss, std::uint64_t rows_grad,
                          std::uint64_t rows_nograd) {
    for (int budget : cfg.eval_budgets)
      append_metrics_row(metrics, step, evaluate_budget(state, cfg, ds, budget, step));
    metrics.flush();
    if (log)
      *log << "step=" << step << " fm_loss=" << loss.fm_loss << " sc_loss=" << loss.sc_loss
           << " total=" << loss.total << " rows_grad=" << rows_grad
           << " rows_nograd=" << rows_nograd << '\n';
  };

  if (cfg.objective == "progressive_distillation") {
    Params teacher = detail::load_teacher(cfg);
    int phases = cfg.grid().log2_M();
    int steps_per_phase = std::max(1, cfg.steps / phases);
    Params distilled = progressive_distillation_run(teacher, cfg.net_config(), cfg.grid(), ds,
                                                    phases, steps_per_phase, cfg.batch_size,
                                                    cfg.seed, cfg.opt_config(), cfg.ema_ratio,
                                                    cfg.guidance());
    state.params = distilled;
    state.ema.shadow = distilled;
    state.step = static_cast<std::int64_t>(phases) * steps_per_phase;
    eval_and_log(state.step, {}, 0, 0);
    save_checkpoint(state, cfg, out_dir + "/final.ckpt");
    return state;
  }

  Params teacher;
  bool has_teacher = false;
  ReflowPairs reflow;
  if (cfg.objective == "consistency_distillation") {
    teacher = detail::load_teacher(cfg);
    has_teacher = true;
  } else if (cfg.objective == "reflow") {
    teacher = detail::load_teacher(cfg);
    reflow = reflow_generate(teacher, cfg.net_config(), cfg.grid(), cfg.reflow_pairs, cfg.seed,
                             cfg.guidance(), cfg.net_config().num_classes);
  }

  BatchPlan plan{cfg.batch_size, cfg.k};
  int ct_phases = cfg.grid().log2_M() + 1;  // discretization doubles up to M intervals
  Rng rng(cfg.seed);

  for (std::int64_t step = 0; step < cfg.steps; ++step) {
    std::uint64_t grad0 = eval_counters().forward_rows_grad;
    std::uint64_t nograd0 = eval_counters().forward_rows_nograd;
    LossInfo loss;
    if (cfg.objective == "flow_matching") {
      loss = flow_matching_update(state, draw_pairs(ds, cfg.batch_size, rng), rng);
    } else if (cfg.objective == "shortcut") {
      loss = shortcut_update(state, draw_pairs(ds, cfg.batch_size, rng), plan, rng,
                             cfg.guidance());
    } else if (cfg.objective == "consistency_training") {
      int intervals = ct_intervals(step, cfg.steps, ct_phases);
      loss = consistency_training_update(state, draw_pairs(ds, cfg.batch_size, rng), intervals,
                                         rng);
    } else if (cfg.objective == "consistency_distillation") {
      loss = consistency_distillation_update(state, has_teacher ? &teacher : nullptr,
                                             draw_pairs(ds, cfg.batch_size, rng), rng);
    } else if (cfg.objective == "reflow") {
      loss = flow_matching_update(state, draw_reflow_batch(reflow, cfg.batch_size, rng), rng);
    } else if (cfg.objective == "live_reflow") {
      loss = live_reflow_update(state, draw_pairs(ds, cfg.batch_size, rng), plan, rng,
                                cfg.guidance());
    } else {
      throw ConfigError("unknown objective: " + cfg.objective);
    }

    if ((step + 1) % cfg.eval_interval == 0 || step + 1 == cfg.steps) {
      eval_and_log(state.step, loss, eval_counters().forward_rows_grad - grad0,
                   eval_counters().forward_rows_nograd - nograd0);
      save_checkpoint(state, cfg, out_dir + "/last.ckpt");
    }
  }
  save_checkpoint(state, cfg, out_dir + "/final.ckpt");
  return state;
}

// Samples from a checkpoint's EMA parameters and writes an x,y[,label] CSV.
inline SampleResult cmd_sample(const std::string& checkpoint_path, int steps, int count,
                               std::uint64_t seed, const std::string& out_csv) {
  LoadedCheckpoint ck = load_checkpoint(checkpoint_path);
  SampleRequest req;
  req.num_steps = steps;
  req.count = count;
  req.seed = seed;
  req.cls = eval_classes(ck.state.net_cfg, count);
  req.cfg_scale = ck.config.guidance();
  SampleResult res = euler_sample(ck.state.eval_params(), ck.state.net_cfg, ck.state.grid, req);
  const Tensor& pts = res.samples;  // empty when count == 0: header-only CSV
  std::ofstream f(out_csv, std::ios::trunc);
  if (!f) throw FileError("cannot write samples CSV: " + out_csv);
  bool labeled = ck.state.net_cfg.num_classes > 0;
  f << (labeled ? "x,y,label" : "x,y") << '\n';
  f << std::setprecision(std::numeric_limits<float>::max_digits10);
  for (int r = 0; r < pts.rows; ++r) {
    f << pts.at(r, 0) << ',' << pts.at(r, 1);
    if (labeled) f << ',' << req.cls[r];
    f << '\n';
  }
  return res;
}

// Full metrics per budget from a checkpoint, written as a metrics CSV.
inline std::vector<MetricsRecord> cmd_eval(const std::string& checkpoint_path,
                                           const std::vector<int>& budgets,
                                           const std::string& out_csv) {
  LoadedCheckpoint ck = load_checkpoint(checkpoint_path);
  std::vector<int> use = budgets.empty() ? ck.config.eval_budgets : budgets;
  Dataset ds = ck.config.make_dataset();
  std::ofstream f(out_csv, std::ios::trunc);
  if (!f) throw FileError("cannot write metrics CSV: " + out_csv);
  f << kMetricsHeader << '\n';
  std::vector<MetricsRecord> out;
  for (int budget : use) {
    MetricsRecord rec = evaluate_budget(ck.state, ck.config, ds, budget, ck.state.step);
    append_metrics_row(f, ck.state.step, rec);
    out.push_back(rec);
  }
  return out;
}

namespace detail {

struct WorldRect {
  double xmin, xmax, ymin, ymax;
};

inline WorldRect bounding_rect(const Tensor& pts, double pad = 0.5) {
  WorldRect r{-3, 3, -3, 3};
  if (pts.rows > 0) {
    r.xmin = r.xmax = pts.at(0, 0);
    r.ymin = r.ymax = pts.at(0, 1);
    for (int i = 0; i < pts.rows; ++i) {
      r.xmin = std::min(r.xmin, static_cast<double>(pts.at(i, 0)));
      r.xmax = std::max(r.xmax, static_cast<double>(pts.at(i, 0)));
      r.ymin = std::min(r.ymin, static_cast<double>(pts.at(i, 1)));
      r.ymax = std::max(r.ymax, static_cast<double>(pts.at(i, 1)));
    }
  }
  r.xmin -= pad;
  r.xmax += pad;
  r.ymin -= pad;
  r.ymax += pad;
  return r;
}

}  // namespace detail

// Emits the standard figure set for one checkpoint: a data-vs-samples
// scatter per eval budget, recorded sampling trajectories, a metric-vs-
// budget line chart, and a 1-step interpolation strip.
inline std::vector<std::string> cmd_figure(const std::string& checkpoint_path,
                                           const std::string& out_dir) {
  LoadedCheckpoint ck = load_checkpoint(checkpoint_path);
  std::filesystem::create_directories(out_dir);
  Dataset ds = ck.config.make_dataset();
  const Params& params = ck.state.eval_params();
  const NetConfig& net = ck.state.net_cfg;
  const StepGrid& grid = ck.state.grid;
  std::vector<std::string> written;

  detail::WorldRect wr = detail::bounding_rect(ds.points);
  int count = std::min(ck.config.eval_count, 2000);

  for (int budget : ck.config.eval_budgets) {
    SampleRequest req;
    req.num_steps = budget;
    req.count = count;
    req.seed = ck.config.seed + 101;
    req.cls = eval_classes(net, count);
    req.cfg_scale = ck.config.guidance();
    SampleResult res = euler_sample(params, net, grid, req);
    SvgFigure fig("samples at " + std::to_string(budget) + " steps", wr.xmin, wr.xmax, wr.ymin,
                  wr.ymax);
    fig.add_points(ds.points, "#888888", "data", 1.5);
    fig.add_points(res.samples, "#d62728", std::to_string(budget) + "-step samples", 2.0);
    std::string path = out_dir + "/scatter_" + std::to_string(budget) + ".svg";
    fig.save(path);
    written.push_back(path);
  }

  {
    SampleRequest req;
    req.num_steps = grid.M;
    req.count = 32;
    req.seed = ck.config.seed + 202;
    req.cls = eval_classes(net, 32);
    req.cfg_scale = ck.config.guidance();
    req.record_trajectory = true;
    SampleResult res = euler_sample(params, net, grid, req);
    SvgFigure fig("sampling trajectories", wr.xmin, wr.xmax, wr.ymin, wr.ymax);
    fig.add_points(ds.points, "#cccccc", "data", 1.0);
    for (int r = 0; r < 32; ++r) {
      std::vector<std::pair<double, double>> path;
      for (const Tensor& snap : res.trajectory)
        path.emplace_back(snap.at(r, 0), snap.at(r, 1));
      fig.add_polyline(path, "#1f77b4");
    }
    std::string path = out_dir + "/trajectories.svg";
    fig.save(path);
    written.push_back(path);
  }

  {
    std::vector<double> xs, ys;
    for (int budget = 1; budget <= grid.M; budget *= 2) {
      MetricsRecord rec = evaluate_budget(ck.state, ck.config, ds, budget, ck.state.step);
      xs.push_back(std::log2(static_cast<double>(budget)));
      ys.push_back(rec.sliced_w2);
    }
    double ymax = 1e-6;
    for (double v : ys) ymax = std::max(ymax, v);
    SvgFigure fig("sliced W2 vs log2(steps)", -0.5, xs.back() + 0.5, 0.0, 1.1 * ymax);
    fig.add_line_series(xs, ys, "#2ca02c", "sliced_w2");
    std::string path = out_dir + "/metrics_budget.svg";
    fig.save(path);
    written.push_back(path);
  }

  {
    std::vector<double> n_values;
    for (int i = 0; i <= 8; ++i) n_values.push_back(static_cast<double>(i) / 8);
    auto pts = interpolation_sweep(params, net, grid, {ck.config.seed + 303, ck.config.seed + 404},
                                   n_values, 1, ck.config.guidance(), eval_classes(net, 1));
    Tensor strip(static_cast<int>(pts.size()), 2);
    for (size_t i = 0; i < pts.size(); ++i) {
      strip.at(static_cast<int>(i), 0) = pts[i].at(0, 0);
      strip.at(static_cast<int>(i), 1) = pts[i].at(0, 1);
    }
    SvgFigure fig("noise interpolation, 1-step generations", wr.xmin, wr.xmax, wr.ymin, wr.ymax);
    fig.add_points(ds.points, "#cccccc", "data", 1.0);
    fig.add_points(strip, "#9467bd", "interpolated generations", 4.0);
    std::vector<std::pair<double, double>> path;
    for (int r = 0; r < strip.rows; ++r) path.emplace_back(strip.at(r, 0), strip.at(r, 1));
    fig.add_polyline(path, "#9467bd");
    std::string p = out_dir + "/interpolation.svg";
    fig.save(p);
    written.push_back(p);
  }

  return written;
}

}  // namespace shortcut
