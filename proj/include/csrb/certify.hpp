#pragma once

#include <cstdint>
#include <optional>
#include <vector>

#include "csrb/model.hpp"
#include "csrb/rng.hpp"
#include "csrb/tape.hpp"
#include "csrb/tensor.hpp"

namespace csrb {

/// Elementwise pre-activation bounds at radius eps around one input.
/// Index h-1 holds hidden level h (h = 1..L-1 for L affine layers).
struct PreactBounds {
  double epsilon = 0.0;
  std::vector<Tensor> lower;
  std::vector<Tensor> upper;
};

/// Stable/unstable classification per hidden level, with the diagonal
/// relaxation slopes. kind: -1 (always off, u <= 0 checked first),
/// +1 (always on, l >= 0), 0 (unstable, l < 0 < u).
struct NeuronPartition {
  std::vector<std::vector<std::int8_t>> kind;
  std::vector<Tensor> d;      // 0 on off, 1 on on, u/(u-l) on unstable
  std::vector<Tensor> lmask;  // l where unstable, else 0
};

NeuronPartition partition(const PreactBounds& bounds);

/// Production bound computation: closed form for the first hidden level,
/// one identity-objective matrix dual pass per deeper level.
PreactBounds compute_bounds(const Network& net, const Tensor& x, double eps);

/// Reference bound computation: a separate scalar dual pass per neuron and
/// direction. Quadratically slower; exists so the production path has an
/// independently-coded cross-check (agreement within 1e-9).
PreactBounds compute_bounds_reference(const Network& net, const Tensor& x, double eps);

/// Certified lower bound on c^T f(x + delta) over ||delta||_inf <= eps.
double dual_bound(const Network& net, const PreactBounds& bounds, const Tensor& x,
                  double eps, const Tensor& c);

/// Batched variant: columns of C_mat are objectives; returns J per column.
Tensor dual_bound_multi(const Network& net, const PreactBounds& bounds, const Tensor& x,
                        double eps, const Tensor& C_mat);

// ---- Tape-recorded variants (for training gradients) -------------------

struct TapedNet {
  struct Layer {
    Tape::Id W, b;
  };
  std::vector<Layer> layers;
};

/// Registers every weight/bias as a tape parameter.
TapedNet tape_params(Tape& tape, const Network& net);

struct TapedBounds {
  std::vector<Tape::Id> lower, upper;  // per hidden level
  std::vector<Tape::Id> d, lmask;      // relaxation data, gradients flow through
};

TapedBounds taped_bounds(Tape& tape, const TapedNet& net, Tape::Id x, double eps);

/// J per objective column, differentiable w.r.t. the taped parameters
/// (including through bounds, slopes and the lmask terms).
Tape::Id taped_dual_multi(Tape& tape, const TapedNet& net, const TapedBounds& bounds,
                          Tape::Id x, double eps, Tape::Id C_mat);

/// Taped clean forward pass; returns the logits node.
Tape::Id taped_forward(Tape& tape, const TapedNet& net, Tape::Id x);

// ---- Certification records and aggregates -------------------------------

struct CertificationRecord {
  std::size_t example_id = 0;
  std::size_t label = 0;
  std::vector<std::size_t> targets;
  std::vector<double> J;        // per target
  std::vector<bool> verdicts;   // J >= 0 per target
  bool certified = true;        // all verdicts
};

/// Bounds are computed once and shared across targets; J >= 0 certifies.
CertificationRecord certify_example(const Network& net, const Tensor& x, std::size_t y,
                                    double eps, const std::vector<std::size_t>& targets,
                                    std::size_t example_id = 0);

/// m x m grid; entry (i,j) = fraction of class-i examples with
/// J(e_i - e_j) < 0; diagonal fixed at 0; classes absent from the dataset
/// are flagged missing rather than reported as 0.
struct PairGrid {
  std::size_t m = 0;
  std::vector<double> frac;             // row-major m*m
  std::vector<std::size_t> class_count;  // examples per seed class

  double at(std::size_t i, std::size_t j) const { return frac[i * m + j]; }
  bool missing(std::size_t i) const { return class_count[i] == 0; }
};

PairGrid pairwise_grid(const Network& net, const std::vector<Tensor>& xs,
                       const std::vector<std::size_t>& ys, double eps,
                       std::size_t threads = 1);

/// CSV with class labels as header row/column; 6 decimal digits; rows of
/// missing classes emit "nan" cells.
std::string grid_to_csv(const PairGrid& grid);

/// One JSON object per record, one record per line.
std::string records_to_jsonl(const std::vector<CertificationRecord>& records);

/// Sampling adversary: tries the sign corners of a random <=12-coordinate
/// subset (remaining coordinates pinned at a random corner), then `budget`
/// uniform draws from the ball. Returns the first perturbation whose
/// prediction lands in `targets`, if any. ||delta||_inf <= eps always holds
/// for a returned delta.
std::optional<Tensor> attack_oracle(const Network& net, const Tensor& x, std::size_t y,
                                    double eps, const std::vector<std::size_t>& targets,
                                    std::size_t budget, Rng& rng);

}  // namespace csrb
