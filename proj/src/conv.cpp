#include "overload/conv.hpp"

#include <cstdint>

#include "overload/errors.hpp"

namespace overload::kernels {

namespace {

void check_input(const ConvLayer& layer, const Tensor3& in) {
  if (in.channels != layer.in_channels) throw ShapeError("convolution input has the wrong channel count");
  if (in.height + 2 * layer.pad < layer.kernel || in.width + 2 * layer.pad < layer.kernel) {
    throw ShapeError("convolution input smaller than the kernel");
  }
}

void check_grad(const ConvLayer& layer, const Tensor3& grad_out, std::size_t in_h, std::size_t in_w) {
  if (grad_out.channels != layer.out_channels || grad_out.height != layer.out_size(in_h) ||
      grad_out.width != layer.out_size(in_w)) {
    throw ShapeError("output gradient does not match the convolution output");
  }
}

// Input coordinate for output position o and kernel tap k; false when it lands in padding.
inline bool tap(std::size_t o, std::size_t k, const ConvLayer& layer, std::size_t extent, std::size_t& at) {
  const std::size_t p = o * layer.stride + k;
  if (p < layer.pad || p - layer.pad >= extent) return false;
  at = p - layer.pad;
  return true;
}

}  // namespace

void conv_forward(const ConvLayer& layer, const Tensor3& in, Tensor3& out) {
  check_input(layer, in);
  const std::size_t oh = layer.out_size(in.height);
  const std::size_t ow = layer.out_size(in.width);
  out = Tensor3(layer.out_channels, oh, ow);
  const auto outs = static_cast<std::int64_t>(layer.out_channels);

#pragma omp parallel for schedule(static)
  for (std::int64_t so = 0; so < outs; ++so) {
    const auto o = static_cast<std::size_t>(so);
    for (std::size_t y = 0; y < oh; ++y) {
      for (std::size_t x = 0; x < ow; ++x) {
        double acc = layer.bias[o];
        for (std::size_t i = 0; i < layer.in_channels; ++i) {
          for (std::size_t ky = 0; ky < layer.kernel; ++ky) {
            std::size_t iy = 0;
            if (!tap(y, ky, layer, in.height, iy)) continue;
            for (std::size_t kx = 0; kx < layer.kernel; ++kx) {
              std::size_t ix = 0;
              if (!tap(x, kx, layer, in.width, ix)) continue;
              acc += layer.w(o, i, ky, kx) * in.at(i, iy, ix);
            }
          }
        }
        out.at(o, y, x) = acc;
      }
    }
  }
}

void conv_backward_input(const ConvLayer& layer, const Tensor3& grad_out, std::size_t in_h, std::size_t in_w,
                         Tensor3& grad_in) {
  check_grad(layer, grad_out, in_h, in_w);
  grad_in = Tensor3(layer.in_channels, in_h, in_w);
  const auto ins = static_cast<std::int64_t>(layer.in_channels);

  // Gather form: each thread owns whole input channels, so no two threads write the same element.
#pragma omp parallel for schedule(static)
  for (std::int64_t si = 0; si < ins; ++si) {
    const auto i = static_cast<std::size_t>(si);
    for (std::size_t o = 0; o < layer.out_channels; ++o) {
      for (std::size_t y = 0; y < grad_out.height; ++y) {
        for (std::size_t ky = 0; ky < layer.kernel; ++ky) {
          std::size_t iy = 0;
          if (!tap(y, ky, layer, in_h, iy)) continue;
          for (std::size_t x = 0; x < grad_out.width; ++x) {
            const double g = grad_out.at(o, y, x);
            for (std::size_t kx = 0; kx < layer.kernel; ++kx) {
              std::size_t ix = 0;
              if (!tap(x, kx, layer, in_w, ix)) continue;
              grad_in.at(i, iy, ix) += layer.w(o, i, ky, kx) * g;
            }
          }
        }
      }
    }
  }
}

namespace reference {

void conv_forward_serial(const ConvLayer& layer, const Tensor3& in, Tensor3& out) {
  check_input(layer, in);
  out = Tensor3(layer.out_channels, layer.out_size(in.height), layer.out_size(in.width));
  const auto pad = static_cast<std::ptrdiff_t>(layer.pad);
  for (std::size_t o = 0; o < out.channels; ++o) {
    for (std::size_t y = 0; y < out.height; ++y) {
      for (std::size_t x = 0; x < out.width; ++x) {
        double acc = layer.bias[o];
        for (std::size_t i = 0; i < layer.in_channels; ++i) {
          for (std::size_t ky = 0; ky < layer.kernel; ++ky) {
            for (std::size_t kx = 0; kx < layer.kernel; ++kx) {
              const auto iy = static_cast<std::ptrdiff_t>(y * layer.stride + ky) - pad;
              const auto ix = static_cast<std::ptrdiff_t>(x * layer.stride + kx) - pad;
              if (iy < 0 || ix < 0 || iy >= static_cast<std::ptrdiff_t>(in.height) ||
                  ix >= static_cast<std::ptrdiff_t>(in.width)) {
                continue;
              }
              acc += layer.w(o, i, ky, kx) * in.at(i, static_cast<std::size_t>(iy), static_cast<std::size_t>(ix));
            }
          }
        }
        out.at(o, y, x) = acc;
      }
    }
  }
}

void conv_backward_input_serial(const ConvLayer& layer, const Tensor3& grad_out, std::size_t in_h,
                                std::size_t in_w, Tensor3& grad_in) {
  check_grad(layer, grad_out, in_h, in_w);
  grad_in = Tensor3(layer.in_channels, in_h, in_w);
  const auto pad = static_cast<std::ptrdiff_t>(layer.pad);
  for (std::size_t o = 0; o < grad_out.channels; ++o) {
    for (std::size_t y = 0; y < grad_out.height; ++y) {
      for (std::size_t x = 0; x < grad_out.width; ++x) {
        const double g = grad_out.at(o, y, x);
        for (std::size_t i = 0; i < layer.in_channels; ++i) {
          for (std::size_t ky = 0; ky < layer.kernel; ++ky) {
            for (std::size_t kx = 0; kx < layer.kernel; ++kx) {
              const auto iy = static_cast<std::ptrdiff_t>(y * layer.stride + ky) - pad;
              const auto ix = static_cast<std::ptrdiff_t>(x * layer.stride + kx) - pad;
              if (iy < 0 || ix < 0 || iy >= static_cast<std::ptrdiff_t>(in_h) ||
                  ix >= static_cast<std::ptrdiff_t>(in_w)) {
                continue;
              }
              grad_in.at(i, static_cast<std::size_t>(iy), static_cast<std::size_t>(ix)) +=
                  layer.w(o, i, ky, kx) * g;
            }
          }
        }
      }
    }
  }
}

}  // namespace reference

}  // namespace overload::kernels
