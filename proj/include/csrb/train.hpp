#pragma once

#include <cstdint>
#include <functional>
#include <optional>
#include <string>
#include <vector>

#include "csrb/cost.hpp"
#include "csrb/dataset.hpp"
#include "csrb/losses.hpp"
#include "csrb/model.hpp"

namespace csrb {

struct OptimizerState {
  enum class Kind { Sgd, Adam };
  Kind kind = Kind::Adam;
  double beta1 = 0.9, beta2 = 0.999, eps = 1e-8;
  std::size_t t = 0;
  std::vector<Tensor> m1, m2;  // adam moments, lazily shaped

  static OptimizerState sgd() {
    OptimizerState s;
    s.kind = Kind::Sgd;
    return s;
  }
  static OptimizerState adam() { return {}; }

  /// p -= lr*g (SGD) or the bias-corrected Adam update. Throws NumericError
  /// on a non-finite gradient.
  void step(const std::vector<Tensor*>& params, const std::vector<Tensor>& grads,
            double lr);
};

struct TrainConfig {
  LossKind loss = LossKind::OverallRobust;
  double eps_target = 0.1;
  double eps_start = 0.05;
  std::size_t warmup_epochs = 20;
  std::size_t epochs = 60;
  std::size_t batch_size = 50;
  double lr = 0.001;
  double lr_decay = 0.5;          // applied every 10 epochs after warmup
  double alpha = 0.0;
  std::uint64_t seed = 0;
  double selection_error_threshold = 0.04;
  OptimizerState::Kind optimizer = OptimizerState::Kind::Adam;
  std::size_t threads = 1;

  void validate() const;
};

/// Radius in effect at an epoch: linear from eps_start to eps_target over
/// the warmup, constant afterward.
double epsilon_at(const TrainConfig& cfg, std::size_t epoch);

/// Learning rate: lr * decay^floor(max(0, epoch - warmup)/10).
double lr_at(const TrainConfig& cfg, std::size_t epoch);

struct EpochStats {
  std::size_t epoch = 0;
  double eps = 0.0;
  double lr = 0.0;
  double train_loss = 0.0;
  double val_class_err = 0.0;
  double val_robust = 0.0;  // loss-appropriate robust metric at eps_target
};

struct TrainHistory {
  std::vector<EpochStats> epochs;
  std::size_t selected_epoch = 0;
  bool selection_fallback = false;  // no epoch met the error threshold
  bool diverged = false;            // training aborted on non-finite loss
};

std::string history_to_csv(const TrainHistory& h);

/// Among epochs with val classification error strictly under `threshold`,
/// the one with minimum robust metric; otherwise minimum classification
/// error with the fallback flag set.
std::pair<std::size_t, bool> select_model(const std::vector<EpochStats>& epochs,
                                          double threshold);

struct TrainResult {
  Network net;  // checkpoint at the selected epoch
  TrainHistory history;
};

/// Minibatch training per the configured objective, with per-epoch seeded
/// shuffles, checkpointing, validation metrics and model selection.
/// Deterministic (bitwise) for a fixed seed at thread count 1.
TrainResult train(const Network& init, const Dataset& train_set, const Dataset& val_set,
                  const TrainConfig& cfg, const CostMatrix& C);

/// Fraction of examples whose label prediction is wrong.
double classification_error(const Network& net, const Dataset& data,
                            std::size_t threads = 1);

/// Fraction of examples not certified against every other class at eps.
double overall_robust_error(const std::vector<CertificationRecord>& records);

/// Records with the full target set for every example.
std::vector<CertificationRecord> certify_dataset(const Network& net, const Dataset& data,
                                                 double eps, std::size_t threads = 1);

// ---- Two-stage regularization tuning ------------------------------------

struct AlphaTrial {
  double alpha = 0.0;
  double class_err = 0.0;
  double cs_robust_err = 0.0;
  bool failed = false;
  std::string error;
};

struct TuneReport {
  std::vector<AlphaTrial> coarse, fine;
  double alpha_coarse = 0.0;
  double best_alpha = 0.0;
  bool fallback_coarse = false;
  bool fallback_fine = false;
};

/// Stage 1 over {1e-2..1e2} (decades), stage 2 over {2^-3..2^3} times the
/// stage-1 winner; each stage picks by threshold-then-min cost-sensitive
/// robust error, falling back to min robust error with a flag.
TuneReport tune_alpha(const std::function<AlphaTrial(double)>& run_alpha,
                      double threshold);

}  // namespace csrb
