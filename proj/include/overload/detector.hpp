#pragma once

#include <array>
#include <cstddef>
#include <cstdint>
#include <span>
#include <vector>

#include "overload/conv.hpp"
#include "overload/geometry.hpp"
#include "overload/nms.hpp"

namespace overload {

/// Row-major HWC image with values in [0, 1].
struct ImageTensor {
  std::size_t height = 0;
  std::size_t width = 0;
  std::size_t channels = 3;
  std::vector<double> data;

  ImageTensor() = default;
  ImageTensor(std::size_t h, std::size_t w, std::size_t c = 3, double fill = 0.0)
      : height(h), width(w), channels(c), data(h * w * c, fill) {}

  std::size_t size() const noexcept { return data.size(); }
  double& at(std::size_t y, std::size_t x, std::size_t c) noexcept { return data[(y * width + x) * channels + c]; }
  double at(std::size_t y, std::size_t x, std::size_t c) const noexcept {
    return data[(y * width + x) * channels + c];
  }
  bool same_shape(const ImageTensor& o) const noexcept {
    return height == o.height && width == o.width && channels == o.channels;
  }

  friend bool operator==(const ImageTensor&, const ImageTensor&) = default;
};

inline constexpr std::size_t kStride = 8;
inline constexpr std::size_t kInputChannels = 3;
inline constexpr std::size_t kDefaultClasses = 4;
inline constexpr std::array<Anchor, 3> kAnchors{{{16.0, 16.0}, {32.0, 32.0}, {64.0, 32.0}}};
inline constexpr std::size_t kNumAnchors = kAnchors.size();
inline constexpr double kObjectnessBias = -2.0;
/// Multiplier on the Glorot-uniform bound of every layer. 1.0 gives the textbook
/// initialization; the default makes the untrained head respond to small input changes.
inline constexpr double kDefaultGain = 3.0;
/// The forward pass subtracts this from every pixel before the first convolution.
inline constexpr double kInputCenter = 0.5;
inline constexpr const char* kArchTag = "ovl-micro-v1";

/// conv3x3/2 (3->8) -> ReLU -> conv3x3/2 (8->16) -> ReLU -> conv3x3/2 (16->32) -> ReLU
/// -> conv1x1 (32 -> A(5+K)).
struct ModelWeights {
  std::uint64_t seed = 0;
  std::size_t classes = kDefaultClasses;
  double gain = kDefaultGain;
  std::array<kernels::ConvLayer, 4> layers;

  std::size_t row_width() const noexcept { return 5 + classes; }

  friend bool operator==(const ModelWeights&, const ModelWeights&) = default;
};

/// Weights uniform in +-gain*sqrt(6/(fan_in+fan_out)) (fan = channels*k*k), drawn layer
/// by layer in [out][in][ky][kx] order from SplitMix64(seed). Biases are zero except
/// the objectness bias of every anchor.
ModelWeights init_weights(std::uint64_t seed, std::size_t classes = kDefaultClasses, double gain = kDefaultGain);

/// Raw head output: one row of 5+K values per (cell, anchor) slot.
/// Row index = (gy * grid_w + gx) * anchors + a.
struct DetectorTensor {
  std::size_t grid_h = 0;
  std::size_t grid_w = 0;
  std::size_t anchors = kNumAnchors;
  std::size_t cols = 5 + kDefaultClasses;
  double stride = static_cast<double>(kStride);
  std::vector<double> data;

  std::size_t rows() const noexcept { return grid_h * grid_w * anchors; }
  std::span<double> row(std::size_t r) noexcept { return {data.data() + r * cols, cols}; }
  std::span<const double> row(std::size_t r) const noexcept { return {data.data() + r * cols, cols}; }
  DecodeSpec decode_spec(std::size_t r) const noexcept;
  bool same_shape(const DetectorTensor& o) const noexcept {
    return grid_h == o.grid_h && grid_w == o.grid_w && anchors == o.anchors && cols == o.cols;
  }
};

/// Activations of one forward call, needed by the backward pass.
struct ForwardPass {
  kernels::Tensor3 input;                      // centered CHW input
  std::array<kernels::Tensor3, 3> hidden;      // post-ReLU outputs of the three 3x3 layers
  DetectorTensor output;
};

/// Throws ShapeError unless the image has 3 channels and both sides are positive
/// multiples of 8.
void check_input_shape(const ImageTensor& x);

ForwardPass forward_with_state(const ModelWeights& w, const ImageTensor& x);
DetectorTensor forward(const ModelWeights& w, const ImageTensor& x);

/// Gradient of <upstream, forward(w, x)> with respect to x, reusing the ReLU masks
/// of `pass`. Throws ShapeError when upstream does not match the forward output.
ImageTensor backward_input(const ModelWeights& w, const ForwardPass& pass, const DetectorTensor& upstream);
ImageTensor backward_input(const ModelWeights& w, const ImageTensor& x, const DetectorTensor& upstream);

/// Applies geometry::decode to every row.
CandidateSet decode_all(const DetectorTensor& out);

/// Number of slots whose objectness * max class probability exceeds t_conf.
std::size_t count_above(const DetectorTensor& out, float t_conf);

inline constexpr double kDefaultNoiseContrast = 0.2;

/// Uniform noise image 0.5 + contrast * (u - 0.5), HWC order, each value rounded to
/// float32 so the image survives the OVL1 format unchanged.
ImageTensor seeded_noise_image(std::uint64_t seed, std::size_t height = 64, std::size_t width = 64,
                               double contrast = kDefaultNoiseContrast);

}  // namespace overload
