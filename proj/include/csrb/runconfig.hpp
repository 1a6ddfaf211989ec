#pragma once

#include <cstdint>
#include <stdexcept>
#include <string>
#include <vector>

#include <json.hpp>

#include "csrb/cost.hpp"
#include "csrb/train.hpp"

namespace csrb {

/// Invalid or missing configuration; `field` names the offending key.
class ConfigError : public std::runtime_error {
 public:
  ConfigError(std::string field, const std::string& msg)
      : std::runtime_error(msg), field_(std::move(field)) {}
  const std::string& field() const { return field_; }

 private:
  std::string field_;
};

struct SynthSpec {
  std::size_t m = 4;
  std::size_t d = 8;
  std::size_t per_class = 50;
  double spread = 0.05;
  std::uint64_t seed = 1;
};

struct DatasetConfig {
  enum class Kind { Mnist, Cifar, Synth };
  Kind kind = Kind::Synth;
  std::string images, labels;          // mnist
  std::vector<std::string> batches;    // cifar
  SynthSpec synth;
  std::size_t limit = 0;  // keep only the first N examples (0 = all)

  bool present = false;
};

struct TaskConfig {
  bool present = false;
  TaskSpec spec;
  std::string matrix_csv;  // when set, overrides the generator
};

/// Parsed contents of a run configuration file. Commands check that the
/// sections they need are present; unknown keys anywhere are rejected.
struct RunConfig {
  DatasetConfig data;
  std::vector<std::size_t> hidden;  // arch
  bool arch_present = false;
  TrainConfig train;
  bool train_present = false;
  std::size_t folds = 5;
  std::size_t val_fold = 0;
  TaskConfig task;
  double eval_eps = 0.0;
  bool eval_eps_present = false;
  std::vector<double> eps_list;
  bool tune_budget_ok = false;
  bool tune_present = false;
  std::string model, model_baseline, model_cs;
  std::string output_dir = ".";
  nlohmann::json echo;  // the raw config, reproduced in summaries
};

RunConfig parse_run_config(const std::string& path);
RunConfig parse_run_config_json(const nlohmann::json& j);

/// Materializes the configured dataset (loads files or synthesizes).
Dataset load_dataset(const DatasetConfig& cfg);

/// Builds the cost matrix for `m` classes from a task section.
CostMatrix task_matrix(const TaskConfig& task, std::size_t m);

}  // namespace csrb
