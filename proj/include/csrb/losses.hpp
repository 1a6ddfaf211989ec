#pragma once

#include <vector>

#include "csrb/certify.hpp"
#include "csrb/cost.hpp"
#include "csrb/dataset.hpp"
#include "csrb/tape.hpp"

namespace csrb {

enum class LossKind { Ce, OverallRobust, CsRobust, StandardCs };

/// Stable cross-entropy of a logits vector against class y.
double ce_loss(const Tensor& logits, std::size_t y);

struct LossSpec {
  LossKind kind = LossKind::Ce;
  double eps = 0.0;    // radius in effect (robust losses)
  double alpha = 0.0;  // regularizer weight (cost-sensitive robust)
  const CostMatrix* C = nullptr;       // cost-sensitive losses
  const TargetSets* targets = nullptr; // Omega/delta + N_j of the training split
};

/// Records the batch loss on the tape and returns the scalar root.
///
/// Shapes of the four objectives over a batch B drawn from `data`:
///   Ce             mean_i CE(f(x_i), y_i)
///   OverallRobust  mean_i CE(-J_eps(x_i, columns e_{y_i} - e_j, all j), y_i)
///   CsRobust       mean-CE term + alpha * sum_{i: delta_{y_i}} (1/N_{y_i}) *
///                    log(1 + sum_{j' in Omega_{y_i}} C_{y_i j'} e^{-J_{ij'}})
///   StandardCs     mean_i log(1 + sum_{j' != y_i} C_{y_i j'} *
///                    e^{logit_{j'} - logit_{y_i}})
///
/// At alpha == 0 (or an all-zero C) the CsRobust graph is node-for-node the
/// Ce graph, so training trajectories coincide bitwise.
Tape::Id build_loss(Tape& tape, const TapedNet& tnet, const Dataset& data,
                    const std::vector<std::size_t>& batch, const LossSpec& spec);

/// Convenience: evaluates the batch loss without keeping the tape.
double eval_loss(const Network& net, const Dataset& data,
                 const std::vector<std::size_t>& batch, const LossSpec& spec);

}  // namespace csrb
