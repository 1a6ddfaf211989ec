#include "csrb/train.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <limits>
#include <sstream>

#include "csrb/parallel.hpp"

namespace csrb {

void OptimizerState::step(const std::vector<Tensor*>& params,
                          const std::vector<Tensor>& grads, double lr) {
  if (params.size() != grads.size())
    throw DimensionError("optimizer: param/grad count mismatch");
  for (const Tensor& g : grads)
    if (!g.all_finite()) throw NumericError("optimizer: non-finite gradient");

  if (kind == Kind::Sgd) {
    for (std::size_t k = 0; k < params.size(); ++k)
      for (std::size_t i = 0; i < params[k]->size(); ++i)
        (*params[k])[i] -= lr * grads[k][i];
    return;
  }

  if (m1.empty()) {
    for (const Tensor* p : params) {
      m1.push_back(Tensor::zeros_like(*p));
      m2.push_back(Tensor::zeros_like(*p));
    }
  }
  ++t;
  double c1 = 1.0 - std::pow(beta1, static_cast<double>(t));
  double c2 = 1.0 - std::pow(beta2, static_cast<double>(t));
  for (std::size_t k = 0; k < params.size(); ++k) {
    Tensor& p = *params[k];
    for (std::size_t i = 0; i < p.size(); ++i) {
      double g = grads[k][i];
      m1[k][i] = beta1 * m1[k][i] + (1.0 - beta1) * g;
      m2[k][i] = beta2 * m2[k][i] + (1.0 - beta2) * g * g;
      p[i] -= lr * (m1[k][i] / c1) / (std::sqrt(m2[k][i] / c2) + eps);
    }
  }
}

void TrainConfig::validate() const {
  if (eps_start > eps_target)
    throw std::invalid_argument("eps_start must not exceed eps_target");
  if (eps_target < 0.0) throw std::invalid_argument("negative eps_target");
  if (alpha < 0.0) throw std::invalid_argument("alpha must be >= 0");
  if (batch_size < 1) throw std::invalid_argument("batch_size must be >= 1");
  if (epochs < 1) throw std::invalid_argument("epochs must be >= 1");
  if (lr <= 0.0) throw std::invalid_argument("lr must be positive");
  if (lr_decay <= 0.0 || lr_decay > 1.0)
    throw std::invalid_argument("lr_decay must be in (0, 1]");
}

double epsilon_at(const TrainConfig& cfg, std::size_t epoch) {
  if (epoch >= cfg.warmup_epochs || cfg.warmup_epochs == 0) return cfg.eps_target;
  double f = static_cast<double>(epoch) / static_cast<double>(cfg.warmup_epochs);
  return cfg.eps_start + (cfg.eps_target - cfg.eps_start) * f;
}

double lr_at(const TrainConfig& cfg, std::size_t epoch) {
  std::size_t past = epoch > cfg.warmup_epochs ? epoch - cfg.warmup_epochs : 0;
  return cfg.lr * std::pow(cfg.lr_decay, static_cast<double>(past / 10));
}

double classification_error(const Network& net, const Dataset& data,
                            std::size_t threads) {
  if (data.size() == 0) throw DataError("classification_error: empty dataset");
  std::vector<char> wrong(data.size(), 0);
  parallel_for(data.size(), threads, [&](std::size_t i) {
    wrong[i] = predict(net, data.xs[i]) != data.ys[i];
  });
  std::size_t count = 0;
  for (char w : wrong) count += w;
  return static_cast<double>(count) / static_cast<double>(data.size());
}

std::vector<CertificationRecord> certify_dataset(const Network& net, const Dataset& data,
                                                 double eps, std::size_t threads) {
  std::vector<std::vector<std::size_t>> all_targets(data.m);
  for (std::size_t y = 0; y < data.m; ++y)
    for (std::size_t j = 0; j < data.m; ++j)
      if (j != y) all_targets[y].push_back(j);
  std::vector<CertificationRecord> recs(data.size());
  parallel_for(data.size(), threads, [&](std::size_t i) {
    recs[i] = certify_example(net, data.xs[i], data.ys[i], eps,
                              all_targets[data.ys[i]], i);
  });
  return recs;
}

double overall_robust_error(const std::vector<CertificationRecord>& records) {
  if (records.empty()) throw DataError("overall_robust_error: no records");
  std::size_t bad = 0;
  for (const CertificationRecord& r : records) bad += !r.certified;
  return static_cast<double>(bad) / static_cast<double>(records.size());
}

std::pair<std::size_t, bool> select_model(const std::vector<EpochStats>& epochs,
                                          double threshold) {
  if (epochs.empty()) throw std::invalid_argument("select_model: no checkpoints");
  std::size_t best = epochs.size();
  for (std::size_t e = 0; e < epochs.size(); ++e) {
    if (!(epochs[e].val_class_err < threshold)) continue;
    if (std::isnan(epochs[e].val_robust)) continue;
    if (best == epochs.size() || epochs[e].val_robust < epochs[best].val_robust)
      best = e;
  }
  if (best != epochs.size()) return {best, false};
  best = 0;
  for (std::size_t e = 1; e < epochs.size(); ++e)
    if (epochs[e].val_class_err < epochs[best].val_class_err) best = e;
  return {best, true};
}

namespace {

double robust_metric(const Network& net, const Dataset& val, const TrainConfig& cfg,
                     const CostMatrix& C) {
  std::vector<CertificationRecord> recs =
      certify_dataset(net, val, cfg.eps_target, cfg.threads);
  if (cfg.loss == LossKind::CsRobust || cfg.loss == LossKind::StandardCs) {
    try {
      return cs_robust_error(recs, C);
    } catch (const MetricUndefined&) {
      return std::numeric_limits<double>::quiet_NaN();
    }
  }
  return overall_robust_error(recs);
}

}  // namespace

TrainResult train(const Network& init, const Dataset& train_set, const Dataset& val_set,
                  const TrainConfig& cfg, const CostMatrix& C) {
  cfg.validate();
  train_set.validate();
  val_set.validate();
  if (cfg.loss == LossKind::CsRobust || cfg.loss == LossKind::StandardCs)
    C.validate();

  TargetSets ts = target_sets(C, train_set.ys);
  LossSpec spec;
  spec.kind = cfg.loss;
  spec.alpha = cfg.alpha;
  spec.C = &C;
  spec.targets = &ts;

  Network net = init;
  OptimizerState opt =
      cfg.optimizer == OptimizerState::Kind::Adam ? OptimizerState::adam()
                                                  : OptimizerState::sgd();
  std::vector<Network> checkpoints;
  TrainHistory history;

  const std::size_t n = train_set.size();
  std::vector<std::size_t> order(n);
  for (std::size_t i = 0; i < n; ++i) order[i] = i;

  for (std::size_t epoch = 0; epoch < cfg.epochs; ++epoch) {
    spec.eps = epsilon_at(cfg, epoch);
    double lr = lr_at(cfg, epoch);
    Rng shuffle_rng =
        Rng::substream(cfg.seed, "shuffle/epoch" + std::to_string(epoch));
    for (std::size_t i = 0; i < n; ++i) order[i] = i;
    shuffle_rng.shuffle(order);

    double loss_sum = 0.0;
    std::size_t seen = 0;
    bool finite = true;
    for (std::size_t start = 0; start < n && finite; start += cfg.batch_size) {
      std::size_t end = std::min(n, start + cfg.batch_size);
      std::vector<std::size_t> batch(order.begin() + static_cast<std::ptrdiff_t>(start),
                                     order.begin() + static_cast<std::ptrdiff_t>(end));
      Tape tape;
      TapedNet tnet = tape_params(tape, net);
      try {
        Tape::Id loss = build_loss(tape, tnet, train_set, batch, spec);
        double value = tape.value(loss).item();
        if (!std::isfinite(value)) {
          finite = false;
          break;
        }
        std::vector<Tape::Id> wrt;
        for (const auto& l : tnet.layers) {
          wrt.push_back(l.W);
          wrt.push_back(l.b);
        }
        std::vector<Tensor> grads = tape.grad(loss, wrt);
        opt.step(parameters(net), grads, lr);
        loss_sum += value * static_cast<double>(batch.size());
        seen += batch.size();
      } catch (const NumericError&) {
        finite = false;
      }
    }
    if (!finite) {
      history.diverged = true;
      break;
    }

    EpochStats st;
    st.epoch = epoch;
    st.eps = spec.eps;
    st.lr = lr;
    st.train_loss = loss_sum / static_cast<double>(seen);
    st.val_class_err = classification_error(net, val_set, cfg.threads);
    st.val_robust = robust_metric(net, val_set, cfg, C);
    history.epochs.push_back(st);
    checkpoints.push_back(net);
  }

  if (checkpoints.empty()) {
    // diverged before completing the first epoch: last finite checkpoint is
    // the initial network
    history.selected_epoch = 0;
    history.selection_fallback = true;
    return {init, std::move(history)};
  }
  auto [best, fallback] = select_model(history.epochs, cfg.selection_error_threshold);
  history.selected_epoch = best;
  history.selection_fallback = fallback;
  return {checkpoints[best], std::move(history)};
}

std::string history_to_csv(const TrainHistory& h) {
  std::ostringstream os;
  os << "epoch,eps,lr,train_loss,val_class_err,val_robust_metric\n";
  char buf[200];
  for (const EpochStats& e : h.epochs) {
    std::snprintf(buf, sizeof buf, "%zu,%.17g,%.17g,%.17g,%.17g,%.17g\n", e.epoch,
                  e.eps, e.lr, e.train_loss, e.val_class_err, e.val_robust);
    os << buf;
  }
  return os.str();
}

namespace {

std::pair<std::size_t, bool> pick_alpha(const std::vector<AlphaTrial>& trials,
                                        double threshold) {
  std::size_t best = trials.size();
  for (std::size_t i = 0; i < trials.size(); ++i) {
    if (trials[i].failed || !(trials[i].class_err < threshold)) continue;
    if (best == trials.size() || trials[i].cs_robust_err < trials[best].cs_robust_err)
      best = i;
  }
  if (best != trials.size()) return {best, false};
  for (std::size_t i = 0; i < trials.size(); ++i) {
    if (trials[i].failed) continue;
    if (best == trials.size() || trials[i].cs_robust_err < trials[best].cs_robust_err)
      best = i;
  }
  if (best == trials.size())
    throw std::runtime_error("alpha tuning: every candidate run failed");
  return {best, true};
}

}  // namespace

TuneReport tune_alpha(const std::function<AlphaTrial(double)>& run_alpha,
                      double threshold) {
  TuneReport report;
  for (double a : {1e-2, 1e-1, 1.0, 1e1, 1e2}) report.coarse.push_back(run_alpha(a));
  auto [ci, cfall] = pick_alpha(report.coarse, threshold);
  report.alpha_coarse = report.coarse[ci].alpha;
  report.fallback_coarse = cfall;

  for (int p = -3; p <= 3; ++p)
    report.fine.push_back(run_alpha(std::ldexp(report.alpha_coarse, p)));
  auto [fi, ffall] = pick_alpha(report.fine, threshold);
  report.best_alpha = report.fine[fi].alpha;
  report.fallback_fine = ffall;
  return report;
}

}  // namespace csrb
