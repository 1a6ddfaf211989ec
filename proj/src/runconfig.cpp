#include "csrb/runconfig.hpp"

#include <fstream>
#include <initializer_list>
#include <string>

#include "csrb/dataset.hpp"

namespace csrb {
namespace {

using nlohmann::json;

std::string join_field(const std::string& prefix, const std::string& key) {
  return prefix.empty() ? key : prefix + "." + key;
}

void check_keys(const json& obj, const std::string& prefix,
                std::initializer_list<const char*> allowed) {
  if (!obj.is_object())
    throw ConfigError(prefix, "expected an object at '" + prefix + "'");
  for (const auto& item : obj.items()) {
    bool ok = false;
    for (const char* k : allowed)
      if (item.key() == k) { ok = true; break; }
    if (!ok)
      throw ConfigError(join_field(prefix, item.key()),
                        "unknown key '" + join_field(prefix, item.key()) + "'");
  }
}

const json& require(const json& obj, const std::string& prefix, const char* key) {
  auto it = obj.find(key);
  if (it == obj.end())
    throw ConfigError(join_field(prefix, key),
                      "missing required key '" + join_field(prefix, key) + "'");
  return *it;
}

double get_double(const json& obj, const std::string& prefix, const char* key) {
  const json& v = require(obj, prefix, key);
  if (!v.is_number())
    throw ConfigError(join_field(prefix, key),
                      "'" + join_field(prefix, key) + "' must be a number");
  return v.get<double>();
}

double get_double_or(const json& obj, const std::string& prefix, const char* key,
                     double fallback) {
  return obj.contains(key) ? get_double(obj, prefix, key) : fallback;
}

std::size_t get_size(const json& obj, const std::string& prefix, const char* key) {
  const json& v = require(obj, prefix, key);
  if (!v.is_number_unsigned())
    throw ConfigError(join_field(prefix, key),
                      "'" + join_field(prefix, key) + "' must be a nonnegative integer");
  return v.get<std::size_t>();
}

std::size_t get_size_or(const json& obj, const std::string& prefix, const char* key,
                        std::size_t fallback) {
  return obj.contains(key) ? get_size(obj, prefix, key) : fallback;
}

std::uint64_t get_u64_or(const json& obj, const std::string& prefix, const char* key,
                         std::uint64_t fallback) {
  if (!obj.contains(key)) return fallback;
  const json& v = obj.at(key);
  if (!v.is_number_unsigned())
    throw ConfigError(join_field(prefix, key),
                      "'" + join_field(prefix, key) + "' must be a nonnegative integer");
  return v.get<std::uint64_t>();
}

std::string get_string(const json& obj, const std::string& prefix, const char* key) {
  const json& v = require(obj, prefix, key);
  if (!v.is_string())
    throw ConfigError(join_field(prefix, key),
                      "'" + join_field(prefix, key) + "' must be a string");
  return v.get<std::string>();
}

bool get_bool_or(const json& obj, const std::string& prefix, const char* key,
                 bool fallback) {
  if (!obj.contains(key)) return fallback;
  const json& v = obj.at(key);
  if (!v.is_boolean())
    throw ConfigError(join_field(prefix, key),
                      "'" + join_field(prefix, key) + "' must be a boolean");
  return v.get<bool>();
}

std::vector<std::size_t> get_size_list(const json& v, const std::string& field) {
  if (!v.is_array())
    throw ConfigError(field, "'" + field + "' must be an array of integers");
  std::vector<std::size_t> out;
  for (const auto& e : v) {
    if (!e.is_number_unsigned())
      throw ConfigError(field, "'" + field + "' must contain nonnegative integers");
    out.push_back(e.get<std::size_t>());
  }
  return out;
}

DatasetConfig parse_dataset(const json& j, const std::string& prefix) {
  DatasetConfig out;
  out.present = true;
  check_keys(j, prefix,
             {"kind", "images", "labels", "batches", "classes", "dim", "per_class",
              "spread", "seed", "limit"});
  const std::string kind = get_string(j, prefix, "kind");
  if (kind == "mnist") {
    out.kind = DatasetConfig::Kind::Mnist;
    out.images = get_string(j, prefix, "images");
    out.labels = get_string(j, prefix, "labels");
  } else if (kind == "cifar10") {
    out.kind = DatasetConfig::Kind::Cifar;
    const json& b = require(j, prefix, "batches");
    if (!b.is_array() || b.empty())
      throw ConfigError(join_field(prefix, "batches"),
                        "'" + join_field(prefix, "batches") + "' must be a nonempty array");
    for (const auto& e : b) {
      if (!e.is_string())
        throw ConfigError(join_field(prefix, "batches"),
                          "'" + join_field(prefix, "batches") + "' must contain strings");
      out.batches.push_back(e.get<std::string>());
    }
  } else if (kind == "synth") {
    out.kind = DatasetConfig::Kind::Synth;
    out.synth.m = get_size_or(j, prefix, "classes", out.synth.m);
    out.synth.d = get_size_or(j, prefix, "dim", out.synth.d);
    out.synth.per_class = get_size_or(j, prefix, "per_class", out.synth.per_class);
    out.synth.spread = get_double_or(j, prefix, "spread", out.synth.spread);
    out.synth.seed = get_u64_or(j, prefix, "seed", out.synth.seed);
  } else {
    throw ConfigError(join_field(prefix, "kind"),
                      "dataset kind must be one of mnist, cifar10, synth");
  }
  out.limit = get_size_or(j, prefix, "limit", 0);
  return out;
}

TaskConfig parse_task(const json& j, const std::string& prefix) {
  TaskConfig out;
  out.present = true;
  check_keys(j, prefix,
             {"kind", "s", "t", "pairs", "seed_rows", "seeds", "targets", "count",
              "seed", "in_group_cost", "out_group_cost", "csv"});
  const std::string kind = get_string(j, prefix, "kind");
  if (kind == "single_pair") {
    out.spec = TaskSpec::single_pair(get_size(j, prefix, "s"), get_size(j, prefix, "t"));
  } else if (kind == "single_seed") {
    out.spec = TaskSpec::single_seed(get_size(j, prefix, "s"));
  } else if (kind == "single_target") {
    out.spec = TaskSpec::single_target(get_size(j, prefix, "t"));
  } else if (kind == "pairs") {
    out.spec.kind = TaskSpec::Kind::Pairs;
    if (j.contains("pairs")) {
      const json& ps = j.at("pairs");
      if (!ps.is_array())
        throw ConfigError(join_field(prefix, "pairs"),
                          "'" + join_field(prefix, "pairs") + "' must be an array of [s,t]");
      for (const auto& p : ps) {
        auto st = get_size_list(p, join_field(prefix, "pairs"));
        if (st.size() != 2)
          throw ConfigError(join_field(prefix, "pairs"),
                            "each pair must be a two-element array");
        out.spec.pairs.emplace_back(st[0], st[1]);
      }
    }
    if (j.contains("seed_rows"))
      out.spec.seed_rows = get_size_list(j.at("seed_rows"), join_field(prefix, "seed_rows"));
    if (out.spec.pairs.empty() && out.spec.seed_rows.empty())
      throw ConfigError(prefix, "'pairs' task needs pairs and/or seed_rows");
  } else if (kind == "random_pairs") {
    out.spec = TaskSpec::random_pairs(get_size(j, prefix, "count"),
                                      get_u64_or(j, prefix, "seed", 0));
  } else if (kind == "group") {
    out.spec = TaskSpec::group(
        get_size_list(require(j, prefix, "seeds"), join_field(prefix, "seeds")),
        get_size_list(require(j, prefix, "targets"), join_field(prefix, "targets")));
  } else if (kind == "small_large") {
    out.spec = TaskSpec::small_large();
  } else if (kind == "large_small") {
    out.spec = TaskSpec::large_small();
  } else if (kind == "small_large_variant") {
    out.spec = TaskSpec::small_large_variant();
  } else if (kind == "group_weighted") {
    out.spec.kind = TaskSpec::Kind::GroupWeighted;
    out.spec.seeds =
        get_size_list(require(j, prefix, "seeds"), join_field(prefix, "seeds"));
    out.spec.in_group_cost = get_double_or(j, prefix, "in_group_cost", 1.0);
    out.spec.out_group_cost = get_double_or(j, prefix, "out_group_cost", 10.0);
  } else if (kind == "matrix") {
    out.matrix_csv = get_string(j, prefix, "csv");
  } else {
    throw ConfigError(join_field(prefix, "kind"), "unknown task kind '" + kind + "'");
  }
  return out;
}

LossKind parse_loss(const std::string& name, const std::string& field) {
  if (name == "ce") return LossKind::Ce;
  if (name == "overall_robust") return LossKind::OverallRobust;
  if (name == "cs_robust") return LossKind::CsRobust;
  if (name == "standard_cs") return LossKind::StandardCs;
  throw ConfigError(field,
                    "loss must be one of ce, overall_robust, cs_robust, standard_cs");
}

void parse_train(const json& j, RunConfig& out) {
  const std::string prefix = "train";
  out.train_present = true;
  check_keys(j, prefix,
             {"loss", "eps_target", "eps_start", "warmup_epochs", "epochs", "batch_size",
              "lr", "lr_decay", "alpha", "seed", "selection_threshold", "optimizer",
              "folds", "val_fold"});
  TrainConfig& t = out.train;
  t.loss = parse_loss(get_string(j, prefix, "loss"), "train.loss");
  t.eps_target = get_double_or(j, prefix, "eps_target", t.eps_target);
  t.eps_start = get_double_or(j, prefix, "eps_start", t.eps_start);
  t.warmup_epochs = get_size_or(j, prefix, "warmup_epochs", t.warmup_epochs);
  t.epochs = get_size(j, prefix, "epochs");
  t.batch_size = get_size_or(j, prefix, "batch_size", t.batch_size);
  t.lr = get_double_or(j, prefix, "lr", t.lr);
  t.lr_decay = get_double_or(j, prefix, "lr_decay", t.lr_decay);
  t.alpha = get_double_or(j, prefix, "alpha", t.alpha);
  t.seed = get_u64_or(j, prefix, "seed", t.seed);
  t.selection_error_threshold =
      get_double_or(j, prefix, "selection_threshold", t.selection_error_threshold);
  if (j.contains("optimizer")) {
    const std::string o = get_string(j, prefix, "optimizer");
    if (o == "adam") t.optimizer = OptimizerState::Kind::Adam;
    else if (o == "sgd") t.optimizer = OptimizerState::Kind::Sgd;
    else throw ConfigError("train.optimizer", "optimizer must be adam or sgd");
  }
  out.folds = get_size_or(j, prefix, "folds", out.folds);
  out.val_fold = get_size_or(j, prefix, "val_fold", out.val_fold);
  if (out.folds < 2)
    throw ConfigError("train.folds", "folds must be at least 2");
  if (out.val_fold >= out.folds)
    throw ConfigError("train.val_fold", "val_fold must be below folds");
  try {
    t.validate();
  } catch (const std::invalid_argument& e) {
    throw ConfigError(prefix, e.what());
  }
}

}  // namespace

RunConfig parse_run_config_json(const json& j) {
  RunConfig out;
  out.echo = j;
  check_keys(j, "",
             {"dataset", "arch", "train", "task", "eval", "tune", "model",
              "model_baseline", "model_cs", "output_dir"});
  if (j.contains("dataset")) out.data = parse_dataset(j.at("dataset"), "dataset");
  if (j.contains("arch")) {
    check_keys(j.at("arch"), "arch", {"hidden"});
    out.hidden = get_size_list(require(j.at("arch"), "arch", "hidden"), "arch.hidden");
    out.arch_present = true;
    for (std::size_t h : out.hidden)
      if (h == 0) throw ConfigError("arch.hidden", "hidden widths must be positive");
  }
  if (j.contains("train")) parse_train(j.at("train"), out);
  if (j.contains("task")) out.task = parse_task(j.at("task"), "task");
  if (j.contains("eval")) {
    const json& e = j.at("eval");
    check_keys(e, "eval", {"eps", "eps_list"});
    if (e.contains("eps")) {
      out.eval_eps = get_double(e, "eval", "eps");
      out.eval_eps_present = true;
      if (out.eval_eps < 0)
        throw ConfigError("eval.eps", "eps must be nonnegative");
    }
    if (e.contains("eps_list")) {
      const json& l = e.at("eps_list");
      if (!l.is_array() || l.empty())
        throw ConfigError("eval.eps_list", "'eval.eps_list' must be a nonempty array");
      for (const auto& v : l) {
        if (!v.is_number() || v.get<double>() < 0)
          throw ConfigError("eval.eps_list", "eps values must be nonnegative numbers");
        out.eps_list.push_back(v.get<double>());
      }
    }
  }
  if (j.contains("tune")) {
    check_keys(j.at("tune"), "tune", {"budget_ok"});
    out.tune_present = true;
    out.tune_budget_ok = get_bool_or(j.at("tune"), "tune", "budget_ok", false);
  }
  if (j.contains("model")) out.model = get_string(j, "", "model");
  if (j.contains("model_baseline")) out.model_baseline = get_string(j, "", "model_baseline");
  if (j.contains("model_cs")) out.model_cs = get_string(j, "", "model_cs");
  if (j.contains("output_dir")) out.output_dir = get_string(j, "", "output_dir");
  return out;
}

RunConfig parse_run_config(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw ConfigError("", "cannot open config file: " + path);
  json j;
  try {
    in >> j;
  } catch (const json::exception& e) {
    throw ConfigError("", std::string("config is not valid JSON: ") + e.what());
  }
  return parse_run_config_json(j);
}

Dataset load_dataset(const DatasetConfig& cfg) {
  Dataset data;
  switch (cfg.kind) {
    case DatasetConfig::Kind::Mnist:
      data = load_mnist_idx(cfg.images, cfg.labels);
      break;
    case DatasetConfig::Kind::Cifar:
      data = load_cifar10(cfg.batches);
      break;
    case DatasetConfig::Kind::Synth: {
      Rng rng = Rng::substream(cfg.synth.seed, "synth");
      data = synth_blobs(rng, cfg.synth.m, cfg.synth.d, cfg.synth.per_class,
                         cfg.synth.spread);
      break;
    }
  }
  if (cfg.limit > 0 && cfg.limit < data.size()) {
    std::vector<std::size_t> idx(cfg.limit);
    for (std::size_t i = 0; i < cfg.limit; ++i) idx[i] = i;
    data = subset(data, idx);
  }
  return data;
}

CostMatrix task_matrix(const TaskConfig& task, std::size_t m) {
  if (!task.matrix_csv.empty()) {
    CostMatrix C = parse_cost_matrix(task.matrix_csv);
    if (C.m != m)
      throw ConfigError("task.csv", "cost matrix is " + std::to_string(C.m) + "x" +
                                        std::to_string(C.m) + " but the dataset has " +
                                        std::to_string(m) + " classes");
    return C;
  }
  try {
    return make_task(task.spec, m);
  } catch (const std::invalid_argument& e) {
    throw ConfigError("task", e.what());
  }
}

}  // namespace csrb
