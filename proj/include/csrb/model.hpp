#pragma once

#include <cstdint>
#include <vector>

#include "csrb/rng.hpp"
#include "csrb/tensor.hpp"

namespace csrb {

struct AffineLayer {
  Tensor W;  // out x in
  Tensor b;  // out
};

/// Feed-forward ReLU network: affine -> relu repeated, ending in a bare
/// affine. With L affine layers there are K = L + 1 activation levels
/// (z_1 = input ... z_K = logits).
struct Network {
  std::vector<AffineLayer> layers;

  std::size_t input_dim() const { return layers.front().W.cols(); }
  std::size_t class_count() const { return layers.back().W.rows(); }
  std::size_t depth() const { return layers.size(); }       // affine layers L
  std::size_t K() const { return layers.size() + 1; }       // activation levels
  std::size_t hidden_levels() const { return layers.size() - 1; }

  void validate() const;  // throws DimensionError if layers do not chain
};

struct ForwardResult {
  std::vector<Tensor> preacts;  // preacts[t] = W_t z_t + b_t, t = 0..L-1
  std::vector<Tensor> acts;     // acts[0] = x; acts[t+1] = relu(preacts[t]) for hidden t
  const Tensor& logits() const { return preacts.back(); }
};

/// Full forward pass keeping intermediates (certification reuses them).
/// Throws NumericError if the output is non-finite.
ForwardResult forward(const Network& net, const Tensor& x);

/// Batched forward over a matrix whose columns are examples; returns the
/// logits matrix (m x batch).
Tensor forward_batch(const Network& net, const Tensor& X);

/// Argmax over logits; ties broken toward the lowest index.
std::size_t predict(const Network& net, const Tensor& x);
std::size_t argmax_lowest(const Tensor& logits);

/// He-style init: W ~ N(0, 2/fan_in), b = 0. dims = {input, hidden..., m}.
Network init_params(const std::vector<std::size_t>& dims, Rng& rng);

std::vector<Tensor*> parameters(Network& net);  // W0, b0, W1, b1, ...
std::vector<const Tensor*> parameters(const Network& net);

}  // namespace csrb
