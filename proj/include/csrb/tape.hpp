#pragma once

#include <cstddef>
#include <functional>
#include <vector>

#include "csrb/tensor.hpp"

namespace csrb {

/// Reverse-mode autodiff over whole-tensor primitives.
///
/// Nodes are appended in evaluation order and hold their forward value; a
/// backward sweep in reverse order accumulates adjoints. Values are computed
/// by the same kernels as plain evaluation, so a taped forward pass is
/// bitwise identical to an untaped one.
///
/// Subgradient conventions, fixed so runs are reproducible:
///   relu'(0) = 0,  d|x|/dx at 0 = 0 (all l1-style ops).
class Tape {
 public:
  using Id = std::size_t;

  Tape() = default;

  /// Drops all nodes but keeps allocated capacity.
  void reset();

  Id constant(Tensor t);
  Id param(Tensor t);  // leaf tracked for gradients

  Id matmul(Id a, Id b);     // A B
  Id matmul_tn(Id a, Id b);  // A^T B
  Id matvec(Id W, Id v);     // W v
  Id matvec_t(Id W, Id v);   // W^T v
  Id rowscale(Id d, Id M);   // diag(d) M
  Id transpose(Id a);

  Id add(Id a, Id b);
  Id sub(Id a, Id b);
  Id mul(Id a, Id b);  // elementwise
  Id div(Id a, Id b);  // elementwise
  Id neg(Id a);
  Id scale(Id a, double s);
  Id relu(Id a);

  Id row_l1(Id W);
  Id col_l1(Id M);
  Id l1norm(Id v);  // scalar

  Id col_broadcast_add(Id M, Id v);  // M + v 1^T
  Id col(Id M, std::size_t c);       // column c as a vector
  Id bsub(Id v, Id s);               // v - s*ones, s scalar

  Id dot(Id a, Id b);           // scalar
  Id sum(Id a);                 // scalar
  Id index(Id v, std::size_t i);  // scalar v[i]
  Id logsumexp(Id v);           // scalar
  /// log(1 + sum_i w_i exp(v_i)) with constant nonnegative weights w.
  Id log1p_sum_exp(Id v, std::vector<double> weights);
  /// Mean cross-entropy over columns of a logits matrix: (1/B) sum_i
  /// [logsumexp(col_i) - col_i[y_i]].
  Id ce_mean(Id logits, std::vector<std::size_t> labels);

  std::size_t size() const { return nodes_.size(); }
  const Tensor& value(Id id) const { return nodes_[id].value; }
  bool requires_grad(Id id) const { return nodes_[id].requires_grad; }

  /// Backward sweep from a scalar root. Adjoints of previous sweeps are
  /// cleared first. Returns gradients in the order of `wrt`.
  std::vector<Tensor> grad(Id root, const std::vector<Id>& wrt);

  /// Adjoint of `id` after the most recent grad() call.
  const Tensor& adjoint(Id id) const { return adj_[id]; }

 private:
  enum class Op {
    Constant, Param, MatMul, MatMulTN, MatVec, MatVecT, RowScale, Transpose,
    Add, Sub, Mul, Div, Neg, Scale, Relu, ColBroadcastAdd, Col, BSub,
    RowL1, ColL1, L1Norm, Dot, Sum, Index, LogSumExp, Log1pSumExp, CeMean,
  };

  struct Node {
    Op op;
    Id a = 0, b = 0;
    Tensor value;
    double aux = 0.0;          // Scale factor / Index position
    std::vector<double> weights;  // Log1pSumExp only
    std::vector<std::size_t> labels;  // CeMean only
    bool requires_grad = false;
  };

  Id push(Node n);
  Id unary(Op op, Id a, Tensor value);
  Id binary(Op op, Id a, Id b, Tensor value);
  void accumulate(Id id, const Tensor& g);
  void backward_node(Id id);

  std::vector<Node> nodes_;
  std::vector<Tensor> adj_;
  std::vector<char> live_;  // adjoint touched this sweep
};

/// Central-difference gradient of f at `point`, step h per coordinate.
/// The oracle used to validate Tape::grad.
std::vector<Tensor> finite_diff(
    const std::function<double(const std::vector<Tensor>&)>& f,
    const std::vector<Tensor>& point, double h = 1e-5);

}  // namespace csrb
