#include "csrb/tape.hpp"

#include <cmath>
#include <stdexcept>

namespace csrb {

namespace {

double sign0(double x) { return x > 0.0 ? 1.0 : (x < 0.0 ? -1.0 : 0.0); }

}  // namespace

void Tape::reset() {
  nodes_.clear();
  adj_.clear();
  live_.clear();
}

Tape::Id Tape::push(Node n) {
  nodes_.push_back(std::move(n));
  return nodes_.size() - 1;
}

Tape::Id Tape::unary(Op op, Id a, Tensor value) {
  Node n;
  n.op = op;
  n.a = a;
  n.value = std::move(value);
  n.requires_grad = nodes_[a].requires_grad;
  return push(std::move(n));
}

Tape::Id Tape::binary(Op op, Id a, Id b, Tensor value) {
  Node n;
  n.op = op;
  n.a = a;
  n.b = b;
  n.value = std::move(value);
  n.requires_grad = nodes_[a].requires_grad || nodes_[b].requires_grad;
  return push(std::move(n));
}

Tape::Id Tape::constant(Tensor t) {
  Node n;
  n.op = Op::Constant;
  n.value = std::move(t);
  return push(std::move(n));
}

Tape::Id Tape::param(Tensor t) {
  Node n;
  n.op = Op::Param;
  n.value = std::move(t);
  n.requires_grad = true;
  return push(std::move(n));
}

Tape::Id Tape::matmul(Id a, Id b) {
  return binary(Op::MatMul, a, b, csrb::matmul(value(a), value(b)));
}
Tape::Id Tape::matmul_tn(Id a, Id b) {
  return binary(Op::MatMulTN, a, b, csrb::matmul_tn(value(a), value(b)));
}
Tape::Id Tape::matvec(Id W, Id v) {
  return binary(Op::MatVec, W, v, csrb::matvec(value(W), value(v)));
}
Tape::Id Tape::matvec_t(Id W, Id v) {
  return binary(Op::MatVecT, W, v, csrb::matvec_t(value(W), value(v)));
}
Tape::Id Tape::rowscale(Id d, Id M) {
  return binary(Op::RowScale, d, M, csrb::rowscale(value(d), value(M)));
}
Tape::Id Tape::transpose(Id a) {
  return unary(Op::Transpose, a, csrb::transpose(value(a)));
}

Tape::Id Tape::add(Id a, Id b) { return binary(Op::Add, a, b, csrb::add(value(a), value(b))); }
Tape::Id Tape::sub(Id a, Id b) { return binary(Op::Sub, a, b, csrb::sub(value(a), value(b))); }
Tape::Id Tape::mul(Id a, Id b) { return binary(Op::Mul, a, b, csrb::mul(value(a), value(b))); }
Tape::Id Tape::div(Id a, Id b) { return binary(Op::Div, a, b, csrb::div(value(a), value(b))); }
Tape::Id Tape::neg(Id a) { return unary(Op::Neg, a, csrb::neg(value(a))); }

Tape::Id Tape::scale(Id a, double s) {
  Id id = unary(Op::Scale, a, csrb::scale(value(a), s));
  nodes_[id].aux = s;
  return id;
}

Tape::Id Tape::relu(Id a) { return unary(Op::Relu, a, csrb::relu(value(a))); }
Tape::Id Tape::row_l1(Id W) { return unary(Op::RowL1, W, csrb::row_l1(value(W))); }
Tape::Id Tape::col_l1(Id M) { return unary(Op::ColL1, M, csrb::col_l1(value(M))); }
Tape::Id Tape::l1norm(Id v) {
  return unary(Op::L1Norm, v, Tensor::scalar(csrb::l1norm(value(v))));
}
Tape::Id Tape::dot(Id a, Id b) {
  return binary(Op::Dot, a, b, Tensor::scalar(csrb::dot(value(a), value(b))));
}
Tape::Id Tape::sum(Id a) { return unary(Op::Sum, a, Tensor::scalar(csrb::sum(value(a)))); }

Tape::Id Tape::index(Id v, std::size_t i) {
  if (i >= value(v).size())
    throw DimensionError("index: position out of range");
  Id id = unary(Op::Index, v, Tensor::scalar(value(v)[i]));
  nodes_[id].aux = static_cast<double>(i);
  return id;
}

Tape::Id Tape::logsumexp(Id v) {
  return unary(Op::LogSumExp, v, Tensor::scalar(csrb::logsumexp(value(v))));
}

Tape::Id Tape::log1p_sum_exp(Id v, std::vector<double> weights) {
  const Tensor& t = value(v);
  if (weights.size() != t.size())
    throw DimensionError("log1p_sum_exp: weight count != input size");
  std::vector<double> exps(t.size());
  for (std::size_t i = 0; i < t.size(); ++i) exps[i] = t[i];
  Id id = unary(Op::Log1pSumExp, v,
                Tensor::scalar(stable_log1p_sum_exp(weights, exps)));
  nodes_[id].weights = std::move(weights);
  return id;
}

Tape::Id Tape::col_broadcast_add(Id M, Id v) {
  return binary(Op::ColBroadcastAdd, M, v,
                csrb::col_broadcast_add(value(M), value(v)));
}

Tape::Id Tape::col(Id M, std::size_t c) {
  const Tensor& m = value(M);
  if (!m.is_matrix() || c >= m.cols()) throw DimensionError("col: bad column");
  Tensor v({m.rows()});
  for (std::size_t r = 0; r < m.rows(); ++r) v[r] = m.at(r, c);
  Id id = unary(Op::Col, M, std::move(v));
  nodes_[id].aux = static_cast<double>(c);
  return id;
}

Tape::Id Tape::bsub(Id v, Id s) {
  const Tensor& vv = value(v);
  if (!value(s).is_scalar()) throw DimensionError("bsub: subtrahend must be scalar");
  double sv = value(s).item();
  Tensor out(vv.shape());
  for (std::size_t i = 0; i < vv.size(); ++i) out[i] = vv[i] - sv;
  return binary(Op::BSub, v, s, std::move(out));
}

Tape::Id Tape::ce_mean(Id logits, std::vector<std::size_t> labels) {
  const Tensor& L = value(logits);
  if (!L.is_matrix() || labels.size() != L.cols())
    throw DimensionError("ce_mean: need one label per logits column");
  double total = 0.0;
  std::vector<double> col(L.rows());
  for (std::size_t c = 0; c < L.cols(); ++c) {
    if (labels[c] >= L.rows()) throw DimensionError("ce_mean: label out of range");
    for (std::size_t r = 0; r < L.rows(); ++r) col[r] = L.at(r, c);
    total += csrb::logsumexp(Tensor::vec(col)) - L.at(labels[c], c);
  }
  Id id = unary(Op::CeMean, logits,
                Tensor::scalar(total / static_cast<double>(L.cols())));
  nodes_[id].labels = std::move(labels);
  return id;
}

void Tape::accumulate(Id id, const Tensor& g) {
  if (!nodes_[id].requires_grad) return;
  if (!live_[id]) {
    adj_[id] = g;
    live_[id] = 1;
  } else {
    add_inplace(adj_[id], g);
  }
}

void Tape::backward_node(Id id) {
  const Node& n = nodes_[id];
  const Tensor& g = adj_[id];
  switch (n.op) {
    case Op::Constant:
    case Op::Param:
      break;
    case Op::MatMul:  // C = A B
      accumulate(n.a, csrb::matmul_nt(g, value(n.b)));
      accumulate(n.b, csrb::matmul_tn(value(n.a), g));
      break;
    case Op::MatMulTN:  // C = A^T B
      accumulate(n.a, csrb::matmul_nt(value(n.b), g));
      accumulate(n.b, csrb::matmul(value(n.a), g));
      break;
    case Op::MatVec:  // y = W v
      accumulate(n.a, csrb::outer(g, value(n.b)));
      accumulate(n.b, csrb::matvec_t(value(n.a), g));
      break;
    case Op::MatVecT:  // y = W^T v
      accumulate(n.a, csrb::outer(value(n.b), g));
      accumulate(n.b, csrb::matvec(value(n.a), g));
      break;
    case Op::RowScale: {  // M' = diag(d) M
      accumulate(n.a, csrb::rowdot(g, value(n.b)));
      accumulate(n.b, csrb::rowscale(value(n.a), g));
      break;
    }
    case Op::Transpose:
      accumulate(n.a, csrb::transpose(g));
      break;
    case Op::Add:
      accumulate(n.a, g);
      accumulate(n.b, g);
      break;
    case Op::Sub:
      accumulate(n.a, g);
      accumulate(n.b, csrb::neg(g));
      break;
    case Op::Mul:
      accumulate(n.a, csrb::mul(g, value(n.b)));
      accumulate(n.b, csrb::mul(g, value(n.a)));
      break;
    case Op::Div: {  // c = a / b
      accumulate(n.a, csrb::div(g, value(n.b)));
      Tensor gb = csrb::div(csrb::mul(g, n.value), value(n.b));
      accumulate(n.b, csrb::neg(gb));
      break;
    }
    case Op::Neg:
      accumulate(n.a, csrb::neg(g));
      break;
    case Op::Scale:
      accumulate(n.a, csrb::scale(g, n.aux));
      break;
    case Op::Relu: {
      const Tensor& x = value(n.a);
      Tensor gx(x.shape());
      for (std::size_t i = 0; i < x.size(); ++i) gx[i] = x[i] > 0.0 ? g[i] : 0.0;
      accumulate(n.a, gx);
      break;
    }
    case Op::RowL1: {
      const Tensor& W = value(n.a);
      Tensor gw(W.shape());
      for (std::size_t r = 0; r < W.rows(); ++r)
        for (std::size_t c = 0; c < W.cols(); ++c)
          gw.at(r, c) = g[r] * sign0(W.at(r, c));
      accumulate(n.a, gw);
      break;
    }
    case Op::ColL1: {
      const Tensor& M = value(n.a);
      Tensor gm(M.shape());
      for (std::size_t r = 0; r < M.rows(); ++r)
        for (std::size_t c = 0; c < M.cols(); ++c)
          gm.at(r, c) = g[c] * sign0(M.at(r, c));
      accumulate(n.a, gm);
      break;
    }
    case Op::L1Norm: {
      const Tensor& v = value(n.a);
      Tensor gv(v.shape());
      for (std::size_t i = 0; i < v.size(); ++i) gv[i] = g.item() * sign0(v[i]);
      accumulate(n.a, gv);
      break;
    }
    case Op::Dot:
      accumulate(n.a, csrb::scale(value(n.b), g.item()));
      accumulate(n.b, csrb::scale(value(n.a), g.item()));
      break;
    case Op::Sum: {
      const Tensor& a = value(n.a);
      Tensor ga(a.shape());
      for (std::size_t i = 0; i < a.size(); ++i) ga[i] = g.item();
      accumulate(n.a, ga);
      break;
    }
    case Op::Index: {
      const Tensor& v = value(n.a);
      Tensor gv(v.shape());
      gv[static_cast<std::size_t>(n.aux)] = g.item();
      accumulate(n.a, gv);
      break;
    }
    case Op::LogSumExp: {
      const Tensor& v = value(n.a);
      double s = n.value.item();
      Tensor gv(v.shape());
      for (std::size_t i = 0; i < v.size(); ++i)
        gv[i] = g.item() * std::exp(v[i] - s);
      accumulate(n.a, gv);
      break;
    }
    case Op::Log1pSumExp: {
      const Tensor& v = value(n.a);
      double s = n.value.item();
      Tensor gv(v.shape());
      for (std::size_t i = 0; i < v.size(); ++i) {
        double w = n.weights[i];
        gv[i] = w == 0.0 ? 0.0 : g.item() * std::exp(v[i] + std::log(w) - s);
      }
      accumulate(n.a, gv);
      break;
    }
    case Op::ColBroadcastAdd:
      accumulate(n.a, g);
      accumulate(n.b, csrb::row_sum(g));
      break;
    case Op::Col: {
      const Tensor& M = value(n.a);
      Tensor gm(M.shape());
      std::size_t c = static_cast<std::size_t>(n.aux);
      for (std::size_t r = 0; r < M.rows(); ++r) gm.at(r, c) = g[r];
      accumulate(n.a, gm);
      break;
    }
    case Op::BSub:
      accumulate(n.a, g);
      accumulate(n.b, Tensor::scalar(-csrb::sum(g)));
      break;
    case Op::CeMean: {  // d = (softmax(col) - onehot) * g / B per column
      const Tensor& L = value(n.a);
      double gb = g.item() / static_cast<double>(L.cols());
      Tensor gl(L.shape());
      for (std::size_t c = 0; c < L.cols(); ++c) {
        double mx = L.at(0, c);
        for (std::size_t r = 1; r < L.rows(); ++r) mx = std::max(mx, L.at(r, c));
        double z = 0.0;
        for (std::size_t r = 0; r < L.rows(); ++r) z += std::exp(L.at(r, c) - mx);
        for (std::size_t r = 0; r < L.rows(); ++r)
          gl.at(r, c) = gb * std::exp(L.at(r, c) - mx) / z;
        gl.at(n.labels[c], c) -= gb;
      }
      accumulate(n.a, gl);
      break;
    }
  }
}

std::vector<Tensor> Tape::grad(Id root, const std::vector<Id>& wrt) {
  if (!value(root).is_scalar())
    throw DimensionError("grad: root must be a scalar, got " + value(root).shape_str());
  adj_.assign(nodes_.size(), Tensor());
  live_.assign(nodes_.size(), 0);
  adj_[root] = Tensor::scalar(1.0);
  live_[root] = 1;
  for (std::size_t i = root + 1; i-- > 0;) {
    if (!live_[i] || !nodes_[i].requires_grad) continue;
    backward_node(i);
  }
  std::vector<Tensor> out;
  out.reserve(wrt.size());
  for (Id id : wrt) {
    if (live_[id])
      out.push_back(adj_[id]);
    else
      out.push_back(Tensor::zeros_like(value(id)));
  }
  return out;
}

std::vector<Tensor> finite_diff(
    const std::function<double(const std::vector<Tensor>&)>& f,
    const std::vector<Tensor>& point, double h) {
  std::vector<Tensor> grads;
  grads.reserve(point.size());
  std::vector<Tensor> p = point;
  for (std::size_t k = 0; k < p.size(); ++k) {
    Tensor g(p[k].shape());
    for (std::size_t i = 0; i < p[k].size(); ++i) {
      double orig = p[k][i];
      p[k][i] = orig + h;
      double fp = f(p);
      p[k][i] = orig - h;
      double fm = f(p);
      p[k][i] = orig;
      g[i] = (fp - fm) / (2.0 * h);
    }
    grads.push_back(std::move(g));
  }
  return grads;
}

}  // namespace csrb
