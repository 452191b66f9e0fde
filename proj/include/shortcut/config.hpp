#pragma once

#include <cstdint>
#include <fstream>
#include <map>
#include <optional>
#include <sstream>
#include <string>
#include <vector>

#include "shortcut/data.hpp"
#include "shortcut/errors.hpp"
#include "shortcut/net.hpp"
#include "shortcut/optim.hpp"

namespace shortcut {

inline const std::vector<std::string>& objective_names() {
  static const std::vector<std::string> names = {
      "flow_matching",       "shortcut", "consistency_training", "consistency_distillation",
      "progressive_distillation", "reflow",   "live_reflow"};
  return names;
}

inline bool objective_needs_teacher(const std::string& objective) {
  return objective == "consistency_distillation" || objective == "progressive_distillation" ||
         objective == "reflow";
}

// Everything one training run needs, parseable from a flat key=value file.
struct RunConfig {
  std::string objective = "shortcut";
  std::string dataset = "eight_gaussians";
  int dataset_size = 10000;

  int hidden_dim = 128;
  int num_layers = 4;
  int time_embed_dim = 32;
  int M = 128;

  float lr = 1e-4f;
  float weight_decay = 0.1f;
  float beta1 = 0.9f;
  float beta2 = 0.999f;
  float ema_ratio = 0.999f;

  int batch_size = 256;
  double k = 0.25;  // bootstrap fraction (1-k empirical / k bootstrap)

  bool class_conditional = false;
  float class_dropout = 0.1f;
  float cfg_scale = 1.5f;  // applied only when class_conditional

  int steps = 20000;
  int eval_interval = 1000;
  int eval_count = 2000;
  std::vector<int> eval_budgets = {1, 4, 128};
  int reflow_pairs = 50000;

  std::uint64_t seed = 0;
  std::string teacher;  // checkpoint path for distillation objectives
  std::string out = "run";

  int dataset_classes() const {
    if (dataset == "eight_gaussians") return 8;
    if (dataset == "checkerboard") return 8;
    if (dataset == "two_spirals") return 2;
    throw ConfigError("unknown dataset: " + dataset);
  }

  StepGrid grid() const { return StepGrid(M); }

  NetConfig net_config() const {
    NetConfig net;
    net.input_dim = 2;
    net.hidden_dim = hidden_dim;
    net.num_layers = num_layers;
    net.time_embed_dim = time_embed_dim;
    net.num_d_buckets = grid().num_embed_buckets();
    net.num_classes = class_conditional ? dataset_classes() : 0;
    net.class_dropout_prob = class_dropout;
    return net;
  }

  AdamWConfig opt_config() const {
    AdamWConfig c;
    c.lr = lr;
    c.weight_decay = weight_decay;
    c.beta1 = beta1;
    c.beta2 = beta2;
    return c;
  }

  std::optional<float> guidance() const {
    if (class_conditional) return cfg_scale;
    return std::nullopt;
  }

  void validate() const {
    bool known = false;
    for (const auto& n : objective_names()) known = known || n == objective;
    if (!known) throw ConfigError("unknown objective: " + objective);
    if (objective_needs_teacher(objective) && teacher.empty())
      throw ConfigError("objective " + objective + " requires a teacher checkpoint");
    dataset_classes();  // validates the dataset name
    net_config().validate(grid());
    if (steps < 1 || batch_size < 1 || eval_interval < 1 || dataset_size < 1)
      throw ConfigError("steps, batch_size, eval_interval and dataset_size must be positive");
    if (k < 0.0 || k > 1.0) throw ConfigError("k must lie in [0,1]");
    if (eval_budgets.empty()) throw ConfigError("eval_budgets must be nonempty");
    for (int b : eval_budgets) grid().bucket_for_steps(b);
  }

  Dataset make_dataset() const {
    Dataset ds;
    if (dataset == "eight_gaussians")
      ds = gen_eight_gaussians(dataset_size, seed);
    else if (dataset == "checkerboard")
      ds = gen_checkerboard(dataset_size, seed);
    else if (dataset == "two_spirals")
      ds = gen_two_spirals(dataset_size, seed);
    else
      throw ConfigError("unknown dataset: " + dataset);
    normalize(ds);
    return ds;
  }
};

namespace detail {

inline std::string trim(const std::string& s) {
  size_t a = s.find_first_not_of(" \t\r\n");
  if (a == std::string::npos) return "";
  size_t b = s.find_last_not_of(" \t\r\n");
  return s.substr(a, b - a + 1);
}

inline std::vector<int> parse_int_list(const std::string& s) {
  std::vector<int> out;
  std::stringstream ss(s);
  std::string item;
  while (std::getline(ss, item, ',')) {
    item = trim(item);
    if (item.empty()) continue;
    try {
      out.push_back(std::stoi(item));
    } catch (const std::exception&) {
      throw ConfigError("bad integer in list: " + item);
    }
  }
  return out;
}

inline bool parse_bool(const std::string& key, const std::string& v) {
  if (v == "true" || v == "1" || v == "yes") return true;
  if (v == "false" || v == "0" || v == "no") return false;
  throw ConfigError("bad boolean for " + key + ": " + v);
}

}  // namespace detail

inline void apply_config_key(RunConfig& cfg, const std::string& key, const std::string& value) {
  auto as_int = [&] {
    try {
      return std::stoi(value);
    } catch (const std::exception&) {
      throw ConfigError("bad integer for " + key + ": " + value);
    }
  };
  auto as_float = [&] {
    try {
      return std::stof(value);
    } catch (const std::exception&) {
      throw ConfigError("bad number for " + key + ": " + value);
    }
  };
  if (key == "objective") cfg.objective = value;
  else if (key == "dataset") cfg.dataset = value;
  else if (key == "dataset_size") cfg.dataset_size = as_int();
  else if (key == "hidden_dim") cfg.hidden_dim = as_int();
  else if (key == "num_layers") cfg.num_layers = as_int();
  else if (key == "time_embed_dim") cfg.time_embed_dim = as_int();
  else if (key == "M") cfg.M = as_int();
  else if (key == "lr") cfg.lr = as_float();
  else if (key == "weight_decay") cfg.weight_decay = as_float();
  else if (key == "beta1") cfg.beta1 = as_float();
  else if (key == "beta2") cfg.beta2 = as_float();
  else if (key == "ema_ratio") cfg.ema_ratio = as_float();
  else if (key == "batch_size") cfg.batch_size = as_int();
  else if (key == "k") cfg.k = as_float();
  else if (key == "class_conditional") cfg.class_conditional = detail::parse_bool(key, value);
  else if (key == "class_dropout") cfg.class_dropout = as_float();
  else if (key == "cfg_scale") cfg.cfg_scale = as_float();
  else if (key == "steps") cfg.steps = as_int();
  else if (key == "eval_interval") cfg.eval_interval = as_int();
  else if (key == "eval_count") cfg.eval_count = as_int();
  else if (key == "eval_budgets") cfg.eval_budgets = detail::parse_int_list(value);
  else if (key == "reflow_pairs") cfg.reflow_pairs = as_int();
  else if (key == "seed") {
    try {
      cfg.seed = std::stoull(value);
    } catch (const std::exception&) {
      throw ConfigError("bad integer for seed: " + value);
    }
  }
  else if (key == "teacher") cfg.teacher = value;
  else if (key == "out") cfg.out = value;
  else throw ConfigError("unknown config key: " + key);
}

// Flat key=value lines, '#' starts a comment, blank lines ignored.
inline RunConfig parse_config_text(const std::string& text, RunConfig base = {}) {
  std::stringstream ss(text);
  std::string line;
  int lineno = 0;
  while (std::getline(ss, line)) {
    ++lineno;
    size_t hash = line.find('#');
    if (hash != std::string::npos) line = line.substr(0, hash);
    line = detail::trim(line);
    if (line.empty()) continue;
    size_t eq = line.find('=');
    if (eq == std::string::npos)
      throw ConfigError("config line " + std::to_string(lineno) + ": expected key=value");
    std::string key = detail::trim(line.substr(0, eq));
    std::string value = detail::trim(line.substr(eq + 1));
    apply_config_key(base, key, value);
  }
  return base;
}

inline RunConfig load_config(const std::string& path, RunConfig base = {}) {
  std::ifstream f(path);
  if (!f) throw FileError("cannot open config file: " + path);
  std::stringstream ss;
  ss << f.rdbuf();
  return parse_config_text(ss.str(), std::move(base));
}

inline std::string serialize_config(const RunConfig& c) {
  std::ostringstream ss;
  ss << "objective=" << c.objective << "\n";
  ss << "dataset=" << c.dataset << "\n";
  ss << "dataset_size=" << c.dataset_size << "\n";
  ss << "hidden_dim=" << c.hidden_dim << "\n";
  ss << "num_layers=" << c.num_layers << "\n";
  ss << "time_embed_dim=" << c.time_embed_dim << "\n";
  ss << "M=" << c.M << "\n";
  ss << "lr=" << c.lr << "\n";
  ss << "weight_decay=" << c.weight_decay << "\n";
  ss << "beta1=" << c.beta1 << "\n";
  ss << "beta2=" << c.beta2 << "\n";
  ss << "ema_ratio=" << c.ema_ratio << "\n";
  ss << "batch_size=" << c.batch_size << "\n";
  ss << "k=" << c.k << "\n";
  ss << "class_conditional=" << (c.class_conditional ? "true" : "false") << "\n";
  ss << "class_dropout=" << c.class_dropout << "\n";
  ss << "cfg_scale=" << c.cfg_scale << "\n";
  ss << "steps=" << c.steps << "\n";
  ss << "eval_interval=" << c.eval_interval << "\n";
  ss << "eval_count=" << c.eval_count << "\n";
  ss << "eval_budgets=";
  for (size_t i = 0; i < c.eval_budgets.size(); ++i)
    ss << (i ? "," : "") << c.eval_budgets[i];
  ss << "\n";
  ss << "reflow_pairs=" << c.reflow_pairs << "\n";
  ss << "seed=" << c.seed << "\n";
  if (!c.teacher.empty()) ss << "teacher=" << c.teacher << "\n";
  ss << "out=" << c.out << "\n";
  return ss.str();
}

}  // namespace shortcut
