#include "csrb/commands.hpp"

#include <filesystem>
#include <fstream>
#include <iostream>
#include <sstream>
#include <string>

#include <CLI11.hpp>
#include <json.hpp>

#include "csrb/model_io.hpp"
#include "csrb/train.hpp"

namespace csrb {
namespace {

namespace fs = std::filesystem;
using nlohmann::json;

class IoError : public std::runtime_error {
 public:
  explicit IoError(const std::string& msg) : std::runtime_error(msg) {}
};

void write_text(const fs::path& path, const std::string& content) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw IoError("cannot open for writing: " + path.string());
  out << content;
  if (!out) throw IoError("write failed: " + path.string());
}

fs::path prepare_output_dir(const RunConfig& cfg) {
  fs::path dir(cfg.output_dir);
  std::error_code ec;
  fs::create_directories(dir, ec);
  if (ec) throw IoError("cannot create output dir " + dir.string() + ": " + ec.message());
  return dir;
}

void require_section(bool present, const char* field, const char* cmd) {
  if (!present)
    throw ConfigError(field, std::string("'") + field + "' is required for " + cmd);
}

Dataset load_checked(const DatasetConfig& cfg) {
  Dataset d = load_dataset(cfg);
  d.validate();
  return d;
}

Network load_model_checked(const std::string& path, const Dataset& data,
                           ModelMeta* meta = nullptr) {
  Network net = load_model(path, meta);
  if (net.input_dim() != data.d)
    throw DataError("model expects input dim " + std::to_string(net.input_dim()) +
                    " but dataset has " + std::to_string(data.d));
  if (net.class_count() != data.m)
    throw DataError("model has " + std::to_string(net.class_count()) +
                    " classes but dataset has " + std::to_string(data.m));
  return net;
}

json cs_metrics_block(const std::vector<CertificationRecord>& records,
                      const CostMatrix& C, std::string* warning) {
  TargetSets ts = target_sets(C, {});
  std::size_t candidates = 0;
  for (const CertificationRecord& r : records)
    if (ts.delta[r.label]) ++candidates;
  json block;
  block["candidates"] = candidates;
  try {
    block["cs_robust_error"] = cs_robust_error(records, C);
    block["robust_cost"] = robust_cost(records, C);
  } catch (const MetricUndefined& e) {
    block["cs_robust_error"] = nullptr;
    block["robust_cost"] = nullptr;
    *warning = e.what();
  }
  return block;
}

json history_summary(const TrainResult& r, const RunConfig& cfg) {
  const TrainHistory& h = r.history;
  json s;
  s["selected_epoch"] = h.selected_epoch;
  s["selection_fallback"] = h.selection_fallback;
  s["diverged"] = h.diverged;
  s["epochs_run"] = h.epochs.size();
  if (h.selected_epoch < h.epochs.size()) {
    const EpochStats& e = h.epochs[h.selected_epoch];
    s["val_class_err"] = e.val_class_err;
    s["val_robust_metric"] = std::isnan(e.val_robust) ? json(nullptr) : json(e.val_robust);
  } else {
    s["val_class_err"] = nullptr;
    s["val_robust_metric"] = nullptr;
  }
  s["alpha"] = cfg.train.alpha;
  s["eps_target"] = cfg.train.eps_target;
  s["seed"] = cfg.train.seed;
  s["config"] = cfg.echo;
  return s;
}

struct TrainSetup {
  Dataset train_split, val_split;
  Network init;
  CostMatrix C;
};

TrainSetup prepare_training(const RunConfig& cfg, const char* cmd) {
  require_section(cfg.data.present, "dataset", cmd);
  require_section(cfg.arch_present, "arch", cmd);
  require_section(cfg.train_present, "train", cmd);
  const bool needs_task =
      cfg.train.loss == LossKind::CsRobust || cfg.train.loss == LossKind::StandardCs;
  if (needs_task) require_section(cfg.task.present, "task", cmd);

  TrainSetup s;
  Dataset full = load_checked(cfg.data);
  Rng fold_rng = Rng::substream(cfg.train.seed, "folds");
  FoldSplit folds = split_folds(full.size(), cfg.folds, fold_rng, cfg.val_fold);
  std::tie(s.train_split, s.val_split) = split_train_val(full, folds);

  std::vector<std::size_t> dims;
  dims.push_back(full.d);
  for (std::size_t h : cfg.hidden) dims.push_back(h);
  dims.push_back(full.m);
  Rng init_rng = Rng::substream(cfg.train.seed, "init");
  s.init = init_params(dims, init_rng);

  if (cfg.task.present) {
    s.C = task_matrix(cfg.task, full.m);
  } else {
    s.C.m = full.m;
    s.C.entries.assign(full.m * full.m, 0.0);
  }
  return s;
}

}  // namespace

int cmd_train(const RunConfig& cfg, std::size_t threads) {
  TrainSetup s = prepare_training(cfg, "train");
  TrainConfig tc = cfg.train;
  tc.threads = threads;

  TrainResult r = train(s.init, s.train_split, s.val_split, tc, s.C);

  fs::path dir = prepare_output_dir(cfg);
  ModelMeta meta{tc.eps_target, tc.alpha, tc.seed};
  save_model(r.net, meta, (dir / "model.bin").string());
  write_text(dir / "history.csv", history_to_csv(r.history));
  json summary = history_summary(r, cfg);
  summary["command"] = "train";
  summary["train_examples"] = s.train_split.size();
  summary["val_examples"] = s.val_split.size();
  summary["artifacts"] = {{"model", "model.bin"}, {"history", "history.csv"}};
  write_text(dir / "summary.json", summary.dump(2) + "\n");

  if (r.history.diverged) {
    std::cerr << json{{"error", "training diverged; last finite checkpoint was saved"},
                      {"kind", "numeric"}}
                     .dump()
              << std::endl;
    return 4;
  }
  std::cout << summary.dump(2) << std::endl;
  return 0;
}

int cmd_certify(const RunConfig& cfg, std::size_t threads) {
  require_section(cfg.data.present, "dataset", "certify");
  require_section(!cfg.model.empty(), "model", "certify");
  require_section(cfg.eval_eps_present, "eval.eps", "certify");

  Dataset data = load_checked(cfg.data);
  ModelMeta meta;
  Network net = load_model_checked(cfg.model, data, &meta);

  std::vector<CertificationRecord> records =
      certify_dataset(net, data, cfg.eval_eps, threads);

  json metrics;
  metrics["command"] = "certify";
  metrics["model"] = cfg.model;
  metrics["eps"] = cfg.eval_eps;
  metrics["examples"] = data.size();
  metrics["model_meta"] = {{"epsilon", meta.epsilon}, {"alpha", meta.alpha},
                           {"seed", meta.seed}};
  metrics["classification_error"] = classification_error(net, data, threads);
  metrics["overall_robust_error"] = overall_robust_error(records);
  std::string warning;
  if (cfg.task.present) {
    CostMatrix C = task_matrix(cfg.task, data.m);
    metrics["cost_sensitive"] = cs_metrics_block(records, C, &warning);
  } else {
    metrics["cost_sensitive"] = nullptr;
  }
  if (!warning.empty()) {
    metrics["warning"] = warning;
    std::cerr << json{{"warning", warning}}.dump() << std::endl;
  }

  fs::path dir = prepare_output_dir(cfg);
  write_text(dir / "records.jsonl", records_to_jsonl(records));
  write_text(dir / "metrics.json", metrics.dump(2) + "\n");
  std::cout << metrics.dump(2) << std::endl;
  return 0;
}

int cmd_heatmap(const RunConfig& cfg, std::size_t threads) {
  require_section(cfg.data.present, "dataset", "heatmap");
  require_section(!cfg.model.empty(), "model", "heatmap");
  require_section(cfg.eval_eps_present, "eval.eps", "heatmap");

  Dataset data = load_checked(cfg.data);
  Network net = load_model_checked(cfg.model, data);
  PairGrid grid = pairwise_grid(net, data.xs, data.ys, cfg.eval_eps, threads);

  fs::path dir = prepare_output_dir(cfg);
  write_text(dir / "heatmap.csv", grid_to_csv(grid));
  std::cout << json{{"command", "heatmap"},
                    {"examples", data.size()},
                    {"eps", cfg.eval_eps},
                    {"artifact", "heatmap.csv"}}
                   .dump(2)
            << std::endl;
  return 0;
}

int cmd_tune_alpha(const RunConfig& cfg, std::size_t threads) {
  TrainSetup s = prepare_training(cfg, "tune-alpha");
  if (cfg.train.loss != LossKind::CsRobust)
    throw ConfigError("train.loss", "tune-alpha requires the cs_robust loss");
  require_section(cfg.tune_present, "tune", "tune-alpha");
  if (!cfg.tune_budget_ok)
    throw ConfigError("tune.budget_ok",
                      "tune-alpha trains once per candidate; set tune.budget_ok "
                      "to confirm the budget");

  auto run_alpha = [&](double alpha) {
    AlphaTrial trial;
    trial.alpha = alpha;
    TrainConfig tc = cfg.train;
    tc.alpha = alpha;
    tc.threads = threads;
    try {
      TrainResult r = train(s.init, s.train_split, s.val_split, tc, s.C);
      if (r.history.diverged || r.history.epochs.empty())
        throw NumericError("training diverged");
      const EpochStats& e = r.history.epochs[r.history.selected_epoch];
      trial.class_err = e.val_class_err;
      trial.cs_robust_err = e.val_robust;
      if (std::isnan(trial.cs_robust_err))
        throw MetricUndefined("validation fold has no candidate seeds");
    } catch (const std::exception& ex) {
      trial.failed = true;
      trial.error = ex.what();
    }
    return trial;
  };

  TuneReport report = tune_alpha(run_alpha, cfg.train.selection_error_threshold);

  auto trials_json = [](const std::vector<AlphaTrial>& trials) {
    json arr = json::array();
    for (const AlphaTrial& t : trials) {
      json e;
      e["alpha"] = t.alpha;
      if (t.failed) {
        e["failed"] = true;
        e["error"] = t.error;
      } else {
        e["class_err"] = t.class_err;
        e["cs_robust_err"] = t.cs_robust_err;
      }
      arr.push_back(e);
    }
    return arr;
  };
  json out;
  out["command"] = "tune-alpha";
  out["coarse"] = trials_json(report.coarse);
  out["fine"] = trials_json(report.fine);
  out["alpha_coarse"] = report.alpha_coarse;
  out["best_alpha"] = report.best_alpha;
  out["fallback_coarse"] = report.fallback_coarse;
  out["fallback_fine"] = report.fallback_fine;
  out["threshold"] = cfg.train.selection_error_threshold;
  out["config"] = cfg.echo;

  fs::path dir = prepare_output_dir(cfg);
  write_text(dir / "tuning.json", out.dump(2) + "\n");
  std::cout << out.dump(2) << std::endl;
  return 0;
}

int cmd_sweep_eps(const RunConfig& cfg, std::size_t threads) {
  require_section(cfg.data.present, "dataset", "sweep-eps");
  require_section(!cfg.model_baseline.empty(), "model_baseline", "sweep-eps");
  require_section(!cfg.model_cs.empty(), "model_cs", "sweep-eps");
  require_section(!cfg.eps_list.empty(), "eval.eps_list", "sweep-eps");
  require_section(cfg.task.present, "task", "sweep-eps");

  Dataset data = load_checked(cfg.data);
  CostMatrix C = task_matrix(cfg.task, data.m);

  std::ostringstream csv;
  csv << "model,eps,classification_error,cs_robust_error\n";
  csv.precision(17);
  bool undefined = false;
  const std::pair<const char*, std::string> models[] = {
      {"baseline", cfg.model_baseline}, {"cost_sensitive", cfg.model_cs}};
  for (const auto& [name, path] : models) {
    Network net = load_model_checked(path, data);
    double class_err = classification_error(net, data, threads);
    for (double eps : cfg.eps_list) {
      std::vector<CertificationRecord> records = certify_dataset(net, data, eps, threads);
      csv << name << ',' << eps << ',' << class_err << ',';
      try {
        csv << cs_robust_error(records, C);
      } catch (const MetricUndefined&) {
        csv << "nan";
        undefined = true;
      }
      csv << '\n';
    }
  }

  fs::path dir = prepare_output_dir(cfg);
  write_text(dir / "sweep.csv", csv.str());
  if (undefined)
    std::cerr << json{{"warning", "no candidate seeds; cs_robust_error is nan"}}.dump()
              << std::endl;
  std::cout << json{{"command", "sweep-eps"},
                    {"eps_count", cfg.eps_list.size()},
                    {"artifact", "sweep.csv"}}
                   .dump(2)
            << std::endl;
  return 0;
}

namespace {

void emit_error(const std::string& kind, const std::string& msg,
                const std::string& field = "") {
  json e;
  e["error"] = msg;
  e["kind"] = kind;
  if (!field.empty()) e["field"] = field;
  std::cerr << e.dump() << std::endl;
}

}  // namespace

int run_cli(int argc, const char* const* argv) {
  CLI::App app{"certifiably robust training under class-pair cost matrices"};
  app.require_subcommand(1);

  std::string config_path;
  std::size_t threads = 1;
  std::string output_dir, model, baseline, cs_model;

  auto add_common = [&](CLI::App* sub) {
    sub->add_option("--config", config_path, "JSON run configuration")->required();
    sub->add_option("--threads", threads, "worker threads (default 1)");
    sub->add_option("--output-dir", output_dir, "overrides output_dir from the config");
  };
  CLI::App* train_cmd = app.add_subcommand("train", "train a model per the config");
  add_common(train_cmd);
  CLI::App* certify_cmd =
      app.add_subcommand("certify", "certify a dataset and write records + metrics");
  add_common(certify_cmd);
  certify_cmd->add_option("--model", model, "overrides model from the config");
  CLI::App* heatmap_cmd =
      app.add_subcommand("heatmap", "all-pairs certified vulnerability grid");
  add_common(heatmap_cmd);
  heatmap_cmd->add_option("--model", model, "overrides model from the config");
  CLI::App* tune_cmd =
      app.add_subcommand("tune-alpha", "two-stage regularization strength search");
  add_common(tune_cmd);
  CLI::App* sweep_cmd =
      app.add_subcommand("sweep-eps", "error-vs-radius table for two models");
  add_common(sweep_cmd);
  sweep_cmd->add_option("--baseline", baseline, "overrides model_baseline");
  sweep_cmd->add_option("--cs", cs_model, "overrides model_cs");

  try {
    app.parse(argc, argv);
  } catch (const CLI::CallForHelp& e) {
    return app.exit(e);
  } catch (const CLI::ParseError& e) {
    emit_error("config", e.what());
    return 2;
  }

  try {
    RunConfig cfg = parse_run_config(config_path);
    if (!output_dir.empty()) cfg.output_dir = output_dir;
    if (!model.empty()) cfg.model = model;
    if (!baseline.empty()) cfg.model_baseline = baseline;
    if (!cs_model.empty()) cfg.model_cs = cs_model;
    if (threads == 0) throw ConfigError("threads", "--threads must be positive");

    if (train_cmd->parsed()) return cmd_train(cfg, threads);
    if (certify_cmd->parsed()) return cmd_certify(cfg, threads);
    if (heatmap_cmd->parsed()) return cmd_heatmap(cfg, threads);
    if (tune_cmd->parsed()) return cmd_tune_alpha(cfg, threads);
    if (sweep_cmd->parsed()) return cmd_sweep_eps(cfg, threads);
    emit_error("config", "no command given");
    return 2;
  } catch (const ConfigError& e) {
    emit_error("config", e.what(), e.field());
    return 2;
  } catch (const DataError& e) {
    emit_error("data", e.what());
    return 3;
  } catch (const ModelIoError& e) {
    emit_error("data", e.what());
    return 3;
  } catch (const IoError& e) {
    emit_error("io", e.what());
    return 3;
  } catch (const NumericError& e) {
    emit_error("numeric", e.what());
    return 4;
  } catch (const std::exception& e) {
    emit_error("internal", e.what());
    return 1;
  }
}

}  // namespace csrb
