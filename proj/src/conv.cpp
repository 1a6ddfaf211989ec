#include "csrb/conv.hpp"

#include <string>

namespace csrb {

std::size_t ConvSpec::out_h() const {
  return (in_h + 2 * padding - k_h) / stride + 1;
}

std::size_t ConvSpec::out_w() const {
  return (in_w + 2 * padding - k_w) / stride + 1;
}

void ConvSpec::validate() const {
  if (in_h == 0 || in_w == 0 || in_c == 0 || out_c == 0 || k_h == 0 || k_w == 0 ||
      stride == 0)
    throw DimensionError("conv spec: zero dimension");
  if (in_h + 2 * padding < k_h || in_w + 2 * padding < k_w)
    throw DimensionError("conv spec: kernel larger than padded input");
  if (kernel.size() != out_c * in_c * k_h * k_w)
    throw DimensionError("conv spec: kernel size " + std::to_string(kernel.size()) +
                         " != " + std::to_string(out_c * in_c * k_h * k_w));
  if (!bias.empty() && bias.size() != out_c)
    throw DimensionError("conv spec: bias length != out_c");
}

AffineLayer lower_conv(const ConvSpec& spec, std::size_t max_elements) {
  spec.validate();
  std::size_t oh = spec.out_h(), ow = spec.out_w();
  std::size_t out_dim = spec.out_c * oh * ow;
  std::size_t in_dim = spec.in_c * spec.in_h * spec.in_w;
  if (out_dim * in_dim > max_elements)
    throw DimensionError("lower_conv: matrix of " + std::to_string(out_dim * in_dim) +
                         " elements exceeds budget " + std::to_string(max_elements));

  AffineLayer layer{Tensor::matrix(out_dim, in_dim), Tensor({out_dim})};
  for (std::size_t oc = 0; oc < spec.out_c; ++oc) {
    double b = spec.bias.empty() ? 0.0 : spec.bias[oc];
    for (std::size_t oy = 0; oy < oh; ++oy) {
      for (std::size_t ox = 0; ox < ow; ++ox) {
        std::size_t row = oc * (oh * ow) + oy * ow + ox;
        layer.b[row] = b;
        for (std::size_t ic = 0; ic < spec.in_c; ++ic) {
          for (std::size_t ky = 0; ky < spec.k_h; ++ky) {
            // padded coordinates; skip taps that fall outside the input
            std::ptrdiff_t iy = static_cast<std::ptrdiff_t>(oy * spec.stride + ky) -
                                static_cast<std::ptrdiff_t>(spec.padding);
            if (iy < 0 || iy >= static_cast<std::ptrdiff_t>(spec.in_h)) continue;
            for (std::size_t kx = 0; kx < spec.k_w; ++kx) {
              std::ptrdiff_t ix = static_cast<std::ptrdiff_t>(ox * spec.stride + kx) -
                                  static_cast<std::ptrdiff_t>(spec.padding);
              if (ix < 0 || ix >= static_cast<std::ptrdiff_t>(spec.in_w)) continue;
              std::size_t col = ic * (spec.in_h * spec.in_w) +
                                static_cast<std::size_t>(iy) * spec.in_w +
                                static_cast<std::size_t>(ix);
              std::size_t kidx = ((oc * spec.in_c + ic) * spec.k_h + ky) * spec.k_w + kx;
              layer.W.at(row, col) = spec.kernel[kidx];
            }
          }
        }
      }
    }
  }
  return layer;
}

}  // namespace csrb
