#pragma once

#include <cstddef>

#include "csrb/model.hpp"
#include "csrb/tensor.hpp"

namespace csrb {

/// 2-D convolution description. Tensors are flattened channel-major:
/// index = c*(H*W) + y*W + x, for both input and output.
struct ConvSpec {
  std::size_t in_h = 0, in_w = 0, in_c = 0;
  std::size_t out_c = 0;
  std::size_t k_h = 0, k_w = 0;
  std::size_t stride = 1;
  std::size_t padding = 0;
  std::vector<double> kernel;  // [out_c][in_c][k_h][k_w]
  std::vector<double> bias;    // [out_c]; empty means zero

  std::size_t out_h() const;
  std::size_t out_w() const;
  void validate() const;
};

/// Materializes the convolution as an explicit affine layer acting on the
/// flattened input. Refuses to build matrices above `max_elements` entries.
AffineLayer lower_conv(const ConvSpec& spec,
                       std::size_t max_elements = std::size_t{1} << 26);

}  // namespace csrb
