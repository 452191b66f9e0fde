// Command-line front end: train generative models on 2-D toy datasets,
// sample them, evaluate two-sample metrics, and emit SVG figures.

#include <cstdint>
#include <iostream>
#include <optional>
#include <string>
#include <vector>

#include "CLI11.hpp"
#include "shortcut/trainer.hpp"

using namespace shortcut;

namespace {

struct TrainArgs {
  std::string config_path;
  std::string out = "run";
  std::optional<std::uint64_t> seed;
  std::optional<int> steps;
  std::optional<std::string> teacher;
  std::optional<std::string> objective;
  std::optional<std::string> dataset;
};

RunConfig resolve_config(const TrainArgs& a) {
  RunConfig cfg;
  if (!a.config_path.empty()) cfg = load_config(a.config_path);
  if (a.seed) cfg.seed = *a.seed;
  if (a.steps) cfg.steps = *a.steps;
  if (a.teacher) cfg.teacher = *a.teacher;
  if (a.objective) cfg.objective = *a.objective;
  if (a.dataset) cfg.dataset = *a.dataset;
  cfg.out = a.out;
  cfg.validate();
  return cfg;
}

void add_train_flags(CLI::App* cmd, TrainArgs& a) {
  cmd->add_option("--config", a.config_path, "key=value config file");
  cmd->add_option("--out", a.out, "output directory");
  cmd->add_option("--seed", a.seed, "run seed (overrides config)");
  cmd->add_option("--steps", a.steps, "training steps (overrides config)");
  cmd->add_option("--teacher", a.teacher, "teacher checkpoint path");
  cmd->add_option("--objective", a.objective, "training objective");
  cmd->add_option("--dataset", a.dataset, "dataset name");
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"shortcutgen: step-size-conditioned flow models on 2-D toy data"};
  app.require_subcommand(1);

  TrainArgs train_args;
  auto* train = app.add_subcommand("train", "train a model and log metrics");
  add_train_flags(train, train_args);

  TrainArgs distill_args;
  distill_args.objective = "progressive_distillation";
  auto* distill = app.add_subcommand("distill", "train a two-stage objective from a teacher");
  add_train_flags(distill, distill_args);

  std::string ckpt, out_path = "samples.csv";
  int steps = 128, count = 1000;
  std::uint64_t seed = 0;
  auto* sample = app.add_subcommand("sample", "draw samples from a checkpoint");
  sample->add_option("checkpoint", ckpt, "checkpoint file")->required();
  sample->add_option("--steps", steps, "denoising steps");
  sample->add_option("--count", count, "number of samples");
  sample->add_option("--seed", seed, "noise seed");
  sample->add_option("--out", out_path, "output CSV path");

  std::string eval_ckpt, eval_out = "eval.csv";
  std::vector<int> budgets;
  auto* eval = app.add_subcommand("eval", "evaluate a checkpoint across step budgets");
  eval->add_option("checkpoint", eval_ckpt, "checkpoint file")->required();
  eval->add_option("--budgets", budgets, "step budgets (default from checkpoint config)")
      ->delimiter(',');
  eval->add_option("--out", eval_out, "output CSV path");

  std::string fig_ckpt, fig_out = "figures";
  auto* figure = app.add_subcommand("figure", "emit SVG figures for a checkpoint");
  figure->add_option("checkpoint", fig_ckpt, "checkpoint file")->required();
  figure->add_option("--out", fig_out, "output directory");

  CLI11_PARSE(app, argc, argv);

  try {
    if (train->parsed()) {
      RunConfig cfg = resolve_config(train_args);
      cmd_train(cfg, cfg.out);
    } else if (distill->parsed()) {
      RunConfig cfg = resolve_config(distill_args);
      if (!objective_needs_teacher(cfg.objective))
        throw ConfigError("distill requires a distillation objective, got " + cfg.objective);
      cmd_train(cfg, cfg.out);
    } else if (sample->parsed()) {
      cmd_sample(ckpt, steps, count, seed, out_path);
    } else if (eval->parsed()) {
      cmd_eval(eval_ckpt, budgets, eval_out);
    } else if (figure->parsed()) {
      for (const auto& p : cmd_figure(fig_ckpt, fig_out)) std::cout << p << '\n';
    }
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << '\n';
    return 1;
  }
  return 0;
}
