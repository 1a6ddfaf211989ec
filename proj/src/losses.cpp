#include "csrb/losses.hpp"

#include <cmath>

namespace csrb {

double ce_loss(const Tensor& logits, std::size_t y) {
  if (y >= logits.size()) throw DimensionError("ce_loss: label out of range");
  return logsumexp(logits) - logits[y];
}

namespace {

Tensor batch_matrix(const Dataset& data, const std::vector<std::size_t>& batch) {
  Tensor X({data.d, batch.size()});
  for (std::size_t k = 0; k < batch.size(); ++k) {
    const Tensor& x = data.xs[batch[k]];
    for (std::size_t i = 0; i < data.d; ++i) X.at(i, k) = x[i];
  }
  return X;
}

std::vector<std::size_t> batch_labels(const Dataset& data,
                                      const std::vector<std::size_t>& batch) {
  std::vector<std::size_t> ys(batch.size());
  for (std::size_t k = 0; k < batch.size(); ++k) ys[k] = data.ys[batch[k]];
  return ys;
}

Tape::Id batched_logits(Tape& tape, const TapedNet& tnet, Tape::Id X) {
  Tape::Id Z = X;
  for (std::size_t t = 0; t < tnet.layers.size(); ++t) {
    Tape::Id pre = tape.col_broadcast_add(tape.matmul(tnet.layers[t].W, Z),
                                          tnet.layers[t].b);
    Z = (t + 1 < tnet.layers.size()) ? tape.relu(pre) : pre;
  }
  return Z;
}

Tape::Id mean_ce_term(Tape& tape, const TapedNet& tnet, const Dataset& data,
                      const std::vector<std::size_t>& batch) {
  Tape::Id X = tape.constant(batch_matrix(data, batch));
  return tape.ce_mean(batched_logits(tape, tnet, X), batch_labels(data, batch));
}

// Dual bounds for one example against the given target columns.
Tape::Id example_J(Tape& tape, const TapedNet& tnet, const Tensor& x,
                   std::size_t y, const std::vector<std::size_t>& targets,
                   std::size_t m, double eps) {
  Tape::Id xid = tape.constant(x);
  TapedBounds tb = taped_bounds(tape, tnet, xid, eps);
  Tensor C_mat({m, targets.size()});
  for (std::size_t k = 0; k < targets.size(); ++k) {
    C_mat.at(y, k) += 1.0;
    C_mat.at(targets[k], k) -= 1.0;
  }
  Tape::Id cid = tape.constant(std::move(C_mat));
  return taped_dual_multi(tape, tnet, tb, xid, eps, cid);
}

Tape::Id overall_robust_loss(Tape& tape, const TapedNet& tnet, const Dataset& data,
                             const std::vector<std::size_t>& batch, double eps) {
  const std::size_t m = data.m;
  std::vector<std::size_t> all(m);
  for (std::size_t j = 0; j < m; ++j) all[j] = j;
  Tape::Id total = 0;
  bool first = true;
  for (std::size_t i : batch) {
    std::size_t y = data.ys[i];
    Tape::Id J = example_J(tape, tnet, data.xs[i], y, all, m, eps);
    Tape::Id nJ = tape.neg(J);
    Tape::Id ce = tape.sub(tape.logsumexp(nJ), tape.index(nJ, y));
    total = first ? ce : tape.add(total, ce);
    first = false;
  }
  return tape.scale(total, 1.0 / static_cast<double>(batch.size()));
}

Tape::Id cs_robust_loss(Tape& tape, const TapedNet& tnet, const Dataset& data,
                        const std::vector<std::size_t>& batch, const LossSpec& spec) {
  Tape::Id ce = mean_ce_term(tape, tnet, data, batch);
  if (spec.alpha == 0.0) return ce;
  const CostMatrix& C = *spec.C;
  const TargetSets& ts = *spec.targets;
  Tape::Id reg = 0;
  bool any = false;
  for (std::size_t i : batch) {
    std::size_t y = data.ys[i];
    const std::vector<std::size_t>& omega = ts.omega[y];
    if (omega.empty()) continue;
    Tape::Id J = example_J(tape, tnet, data.xs[i], y, omega, data.m, spec.eps);
    std::vector<double> weights(omega.size());
    for (std::size_t k = 0; k < omega.size(); ++k) weights[k] = C.at(y, omega[k]);
    Tape::Id term = tape.log1p_sum_exp(tape.neg(J), std::move(weights));
    term = tape.scale(term, spec.alpha / static_cast<double>(ts.counts[y]));
    reg = any ? tape.add(reg, term) : term;
    any = true;
  }
  return any ? tape.add(ce, reg) : ce;
}

Tape::Id standard_cs_loss(Tape& tape, const TapedNet& tnet, const Dataset& data,
                          const std::vector<std::size_t>& batch, const CostMatrix& C) {
  Tape::Id X = tape.constant(batch_matrix(data, batch));
  Tape::Id Z = batched_logits(tape, tnet, X);
  Tape::Id total = 0;
  bool first = true;
  for (std::size_t k = 0; k < batch.size(); ++k) {
    std::size_t y = data.ys[batch[k]];
    Tape::Id li = tape.col(Z, k);
    Tape::Id diff = tape.bsub(li, tape.index(li, y));
    std::vector<double> weights(data.m);
    for (std::size_t j = 0; j < data.m; ++j) weights[j] = C.at(y, j);
    Tape::Id term = tape.log1p_sum_exp(diff, std::move(weights));
    total = first ? term : tape.add(total, term);
    first = false;
  }
  return tape.scale(total, 1.0 / static_cast<double>(batch.size()));
}

}  // namespace

Tape::Id build_loss(Tape& tape, const TapedNet& tnet, const Dataset& data,
                    const std::vector<std::size_t>& batch, const LossSpec& spec) {
  if (batch.empty()) throw DimensionError("build_loss: empty batch");
  switch (spec.kind) {
    case LossKind::Ce:
      return mean_ce_term(tape, tnet, data, batch);
    case LossKind::OverallRobust:
      return overall_robust_loss(tape, tnet, data, batch, spec.eps);
    case LossKind::CsRobust: {
      if (spec.alpha > 0.0 && (!spec.C || !spec.targets))
        throw std::invalid_argument("cost-sensitive robust loss needs C and target sets");
      if (spec.alpha < 0.0) throw std::invalid_argument("alpha must be >= 0");
      return cs_robust_loss(tape, tnet, data, batch, spec);
    }
    case LossKind::StandardCs:
      if (!spec.C) throw std::invalid_argument("standard cost-sensitive loss needs C");
      return standard_cs_loss(tape, tnet, data, batch, *spec.C);
  }
  throw std::logic_error("unreachable loss kind");
}

double eval_loss(const Network& net, const Dataset& data,
                 const std::vector<std::size_t>& batch, const LossSpec& spec) {
  Tape tape;
  TapedNet tnet = tape_params(tape, net);
  return tape.value(build_loss(tape, tnet, data, batch, spec)).item();
}

}  // namespace csrb
