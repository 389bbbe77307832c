#pragma once

// Dense 2-D convolution in CHW layout, double precision. The OpenMP kernels
// split work over output channels (forward) and input channels (backward) and are
// checked against the serial reference loops.

#include <cstddef>
#include <vector>

namespace overload::kernels {

struct Tensor3 {
  std::size_t channels = 0;
  std::size_t height = 0;
  std::size_t width = 0;
  std::vector<double> data;

  Tensor3() = default;
  Tensor3(std::size_t c, std::size_t h, std::size_t w) : channels(c), height(h), width(w), data(c * h * w, 0.0) {}

  double& at(std::size_t c, std::size_t y, std::size_t x) noexcept { return data[(c * height + y) * width + x]; }
  double at(std::size_t c, std::size_t y, std::size_t x) const noexcept { return data[(c * height + y) * width + x]; }

  friend bool operator==(const Tensor3&, const Tensor3&) = default;
};

struct ConvLayer {
  std::size_t in_channels = 0;
  std::size_t out_channels = 0;
  std::size_t kernel = 1;
  std::size_t stride = 1;
  std::size_t pad = 0;
  std::vector<double> weight;  // [out][in][ky][kx]
  std::vector<double> bias;    // [out]

  std::size_t out_size(std::size_t in) const noexcept { return (in + 2 * pad - kernel) / stride + 1; }
  std::size_t fan_in() const noexcept { return in_channels * kernel * kernel; }
  std::size_t fan_out() const noexcept { return out_channels * kernel * kernel; }
  double w(std::size_t o, std::size_t i, std::size_t ky, std::size_t kx) const noexcept {
    return weight[((o * in_channels + i) * kernel + ky) * kernel + kx];
  }

  friend bool operator==(const ConvLayer&, const ConvLayer&) = default;
};

/// out = conv(in) + bias. `out` is resized. Throws ShapeError on a channel mismatch.
void conv_forward(const ConvLayer& layer, const Tensor3& in, Tensor3& out);

/// Gradient of conv_forward with respect to its input, given the output gradient.
/// `grad_in` is resized to (in_channels, in_h, in_w).
void conv_backward_input(const ConvLayer& layer, const Tensor3& grad_out, std::size_t in_h, std::size_t in_w,
                         Tensor3& grad_in);

namespace reference {

void conv_forward_serial(const ConvLayer& layer, const Tensor3& in, Tensor3& out);
/// Scatter form of the transposed convolution.
void conv_backward_input_serial(const ConvLayer& layer, const Tensor3& grad_out, std::size_t in_h,
                                std::size_t in_w, Tensor3& grad_in);

}  // namespace reference

}  // namespace overload::kernels
