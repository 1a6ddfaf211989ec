#include "csrb/model.hpp"

#include <cmath>

namespace csrb {

void Network::validate() const {
  if (layers.empty()) throw DimensionError("network has no layers");
  for (std::size_t t = 0; t < layers.size(); ++t) {
    const AffineLayer& l = layers[t];
    if (!l.W.is_matrix() || !l.b.is_vector() || l.b.size() != l.W.rows())
      throw DimensionError("layer " + std::to_string(t) + ": bias/weight mismatch");
    if (t + 1 < layers.size() && layers[t + 1].W.cols() != l.W.rows())
      throw DimensionError("layers " + std::to_string(t) + "->" +
                           std::to_string(t + 1) + " do not chain");
  }
}

ForwardResult forward(const Network& net, const Tensor& x) {
  if (x.size() != net.input_dim())
    throw DimensionError("forward: input length " + std::to_string(x.size()) +
                         " != " + std::to_string(net.input_dim()));
  ForwardResult r;
  r.acts.push_back(x);
  for (std::size_t t = 0; t < net.layers.size(); ++t) {
    Tensor pre = add(matvec(net.layers[t].W, r.acts.back()), net.layers[t].b);
    if (t + 1 < net.layers.size()) r.acts.push_back(relu(pre));
    r.preacts.push_back(std::move(pre));
  }
  if (!r.logits().all_finite()) throw NumericError("forward: non-finite logits");
  return r;
}

Tensor forward_batch(const Network& net, const Tensor& X) {
  if (!X.is_matrix() || X.rows() != net.input_dim())
    throw DimensionError("forward_batch: expected " +
                         std::to_string(net.input_dim()) + " rows, got " + X.shape_str());
  Tensor Z = X;
  for (std::size_t t = 0; t < net.layers.size(); ++t) {
    Tensor pre = matmul(net.layers[t].W, Z);
    const Tensor& b = net.layers[t].b;
    for (std::size_t r = 0; r < pre.rows(); ++r)
      for (std::size_t c = 0; c < pre.cols(); ++c) pre.at(r, c) += b[r];
    Z = (t + 1 < net.layers.size()) ? relu(pre) : std::move(pre);
  }
  return Z;
}

std::size_t argmax_lowest(const Tensor& logits) {
  std::size_t best = 0;
  for (std::size_t i = 1; i < logits.size(); ++i)
    if (logits[i] > logits[best]) best = i;
  return best;
}

std::size_t predict(const Network& net, const Tensor& x) {
  return argmax_lowest(forward(net, x).logits());
}

Network init_params(const std::vector<std::size_t>& dims, Rng& rng) {
  if (dims.size() < 2) throw DimensionError("init_params: need at least in/out dims");
  Network net;
  for (std::size_t t = 0; t + 1 < dims.size(); ++t) {
    std::size_t in = dims[t], out = dims[t + 1];
    double sd = std::sqrt(2.0 / static_cast<double>(in));
    AffineLayer l{Tensor::matrix(out, in), Tensor({out})};
    for (std::size_t i = 0; i < l.W.size(); ++i) l.W[i] = sd * rng.normal();
    net.layers.push_back(std::move(l));
  }
  net.validate();
  return net;
}

std::vector<Tensor*> parameters(Network& net) {
  std::vector<Tensor*> ps;
  for (AffineLayer& l : net.layers) {
    ps.push_back(&l.W);
    ps.push_back(&l.b);
  }
  return ps;
}

std::vector<const Tensor*> parameters(const Network& net) {
  std::vector<const Tensor*> ps;
  for (const AffineLayer& l : net.layers) {
    ps.push_back(&l.W);
    ps.push_back(&l.b);
  }
  return ps;
}

}  // namespace csrb
