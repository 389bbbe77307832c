#include "overload/detector.hpp"

#include <cmath>
#include <string>

#include "overload/errors.hpp"
#include "overload/rng.hpp"

namespace overload {

namespace {

kernels::ConvLayer make_layer(SplitMix64& rng, std::size_t in, std::size_t out, std::size_t k, std::size_t stride,
                              std::size_t pad, double gain) {
  kernels::ConvLayer l;
  l.in_channels = in;
  l.out_channels = out;
  l.kernel = k;
  l.stride = stride;
  l.pad = pad;
  const double bound = gain * std::sqrt(6.0 / static_cast<double>(l.fan_in() + l.fan_out()));
  l.weight.resize(out * in * k * k);
  for (double& v : l.weight) v = (2.0 * rng.uniform() - 1.0) * bound;
  l.bias.assign(out, 0.0);
  return l;
}

void relu(kernels::Tensor3& t) {
  for (double& v : t.data) v = v > 0.0 ? v : 0.0;
}

// Zeroes gradient entries whose forward activation was clipped by the ReLU.
void relu_mask(kernels::Tensor3& grad, const kernels::Tensor3& act) {
  for (std::size_t i = 0; i < grad.data.size(); ++i) {
    if (!(act.data[i] > 0.0)) grad.data[i] = 0.0;
  }
}

}  // namespace

ModelWeights init_weights(std::uint64_t seed, std::size_t classes, double gain) {
  if (classes < 1) throw ConfigError("detector needs at least one class");
  if (!(gain > 0.0) || !std::isfinite(gain)) throw ConfigError("weight gain must be positive");
  ModelWeights w;
  w.seed = seed;
  w.classes = classes;
  w.gain = gain;
  SplitMix64 rng(seed);
  w.layers[0] = make_layer(rng, kInputChannels, 8, 3, 2, 1, gain);
  w.layers[1] = make_layer(rng, 8, 16, 3, 2, 1, gain);
  w.layers[2] = make_layer(rng, 16, 32, 3, 2, 1, gain);
  w.layers[3] = make_layer(rng, 32, kNumAnchors * w.row_width(), 1, 1, 0, gain);
  for (std::size_t a = 0; a < kNumAnchors; ++a) w.layers[3].bias[a * w.row_width() + 4] = kObjectnessBias;
  return w;
}

DecodeSpec DetectorTensor::decode_spec(std::size_t r) const noexcept {
  const std::size_t cell = r / anchors;
  DecodeSpec s;
  s.cell_x = cell % grid_w;
  s.cell_y = cell / grid_w;
  s.anchor = kAnchors[r % anchors];
  s.stride = stride;
  s.image_width = static_cast<double>(grid_w) * stride;
  s.image_height = static_cast<double>(grid_h) * stride;
  return s;
}

void check_input_shape(const ImageTensor& x) {
  if (x.channels != kInputChannels) {
    throw ShapeError("detector expects 3 channels, got " + std::to_string(x.channels));
  }
  if (x.height == 0 || x.width == 0 || x.height % kStride != 0 || x.width % kStride != 0) {
    throw ShapeError("image sides must be positive multiples of 8, got " + std::to_string(x.height) + "x" +
                     std::to_string(x.width));
  }
  if (x.data.size() != x.height * x.width * x.channels) throw ShapeError("image buffer size mismatch");
}

ForwardPass forward_with_state(const ModelWeights& w, const ImageTensor& x) {
  check_input_shape(x);
  ForwardPass p;
  p.input = kernels::Tensor3(x.channels, x.height, x.width);
  for (std::size_t y = 0; y < x.height; ++y) {
    for (std::size_t xx = 0; xx < x.width; ++xx) {
      for (std::size_t c = 0; c < x.channels; ++c) p.input.at(c, y, xx) = x.at(y, xx, c) - kInputCenter;
    }
  }

  kernels::conv_forward(w.layers[0], p.input, p.hidden[0]);
  relu(p.hidden[0]);
  kernels::conv_forward(w.layers[1], p.hidden[0], p.hidden[1]);
  relu(p.hidden[1]);
  kernels::conv_forward(w.layers[2], p.hidden[1], p.hidden[2]);
  relu(p.hidden[2]);
  kernels::Tensor3 head;
  kernels::conv_forward(w.layers[3], p.hidden[2], head);

  DetectorTensor& out = p.output;
  out.grid_h = head.height;
  out.grid_w = head.width;
  out.anchors = kNumAnchors;
  out.cols = w.row_width();
  out.data.resize(out.rows() * out.cols);
  for (std::size_t gy = 0; gy < out.grid_h; ++gy) {
    for (std::size_t gx = 0; gx < out.grid_w; ++gx) {
      for (std::size_t a = 0; a < out.anchors; ++a) {
        auto r = out.row((gy * out.grid_w + gx) * out.anchors + a);
        for (std::size_t j = 0; j < out.cols; ++j) r[j] = head.at(a * out.cols + j, gy, gx);
      }
    }
  }
  return p;
}

DetectorTensor forward(const ModelWeights& w, const ImageTensor& x) { return forward_with_state(w, x).output; }

ImageTensor backward_input(const ModelWeights& w, const ForwardPass& pass, const DetectorTensor& upstream) {
  if (!upstream.same_shape(pass.output) || upstream.data.size() != pass.output.data.size()) {
    throw ShapeError("upstream gradient does not match the detector output");
  }
  kernels::Tensor3 g(upstream.anchors * upstream.cols, upstream.grid_h, upstream.grid_w);
  for (std::size_t gy = 0; gy < upstream.grid_h; ++gy) {
    for (std::size_t gx = 0; gx < upstream.grid_w; ++gx) {
      for (std::size_t a = 0; a < upstream.anchors; ++a) {
        const auto r = upstream.row((gy * upstream.grid_w + gx) * upstream.anchors + a);
        for (std::size_t j = 0; j < upstream.cols; ++j) g.at(a * upstream.cols + j, gy, gx) = r[j];
      }
    }
  }

  kernels::Tensor3 prev;
  kernels::conv_backward_input(w.layers[3], g, pass.hidden[2].height, pass.hidden[2].width, prev);
  for (int l = 2; l >= 0; --l) {
    const auto li = static_cast<std::size_t>(l);
    relu_mask(prev, pass.hidden[li]);
    const kernels::Tensor3& below = li == 0 ? pass.input : pass.hidden[li - 1];
    kernels::Tensor3 next;
    kernels::conv_backward_input(w.layers[li], prev, below.height, below.width, next);
    prev = std::move(next);
  }

  ImageTensor grad(pass.input.height, pass.input.width, pass.input.channels);
  for (std::size_t y = 0; y < grad.height; ++y) {
    for (std::size_t x = 0; x < grad.width; ++x) {
      for (std::size_t c = 0; c < grad.channels; ++c) grad.at(y, x, c) = prev.at(c, y, x);
    }
  }
  return grad;
}

ImageTensor backward_input(const ModelWeights& w, const ImageTensor& x, const DetectorTensor& upstream) {
  return backward_input(w, forward_with_state(w, x), upstream);
}

CandidateSet decode_all(const DetectorTensor& out) {
  CandidateSet set;
  set.candidates.reserve(out.rows());
  for (std::size_t r = 0; r < out.rows(); ++r) set.candidates.push_back(decode(out.row(r), out.decode_spec(r)));
  return set;
}

std::size_t count_above(const DetectorTensor& out, float t_conf) {
  std::size_t n = 0;
  for (std::size_t r = 0; r < out.rows(); ++r) {
    const auto row = out.row(r);
    const float obj = static_cast<float>(sigmoid(row[4]));
    float best = 0.0f;
    for (std::size_t j = 5; j < row.size(); ++j) best = std::max(best, static_cast<float>(sigmoid(row[j])));
    if (obj * best > t_conf) ++n;
  }
  return n;
}

ImageTensor seeded_noise_image(std::uint64_t seed, std::size_t height, std::size_t width, double contrast) {
  if (!(contrast >= 0.0 && contrast <= 1.0)) throw ConfigError("noise contrast must lie in [0, 1]");
  ImageTensor img(height, width, kInputChannels);
  SplitMix64 rng(seed);
  for (double& v : img.data) v = static_cast<double>(static_cast<float>(0.5 + contrast * (rng.uniform() - 0.5)));
  return img;
}

}  // namespace overload
