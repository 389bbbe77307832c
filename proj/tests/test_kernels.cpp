#include <gtest/gtest.h>

#include <cmath>

#include "overload/conv.hpp"
#include "overload/costmodel.hpp"
#include "overload/nms_kernels.hpp"
#include "overload/rng.hpp"

using namespace overload;
using namespace overload::kernels;

namespace {

struct Problem {
  std::vector<Box> boxes;
  std::vector<int> classes;
};

Problem make_problem(std::size_t n, std::uint64_t seed) {
  const auto set = gen_synthetic(Scenario::random, n, 3, seed);
  Problem p;
  for (const auto& c : set.candidates) {
    p.boxes.push_back(c.box);
    p.classes.push_back(c.class_id);
  }
  return p;
}

ConvLayer random_layer(SplitMix64& rng, std::size_t in, std::size_t out, std::size_t k, std::size_t s, std::size_t pad) {
  ConvLayer l{in, out, k, s, pad, {}, {}};
  l.weight.resize(in * out * k * k);
  for (auto& v : l.weight) v = rng.uniform(-1, 1);
  l.bias.resize(out);
  for (auto& v : l.bias) v = rng.uniform(-1, 1);
  return l;
}

Tensor3 random_tensor(SplitMix64& rng, std::size_t c, std::size_t h, std::size_t w) {
  Tensor3 t(c, h, w);
  for (auto& v : t.data) v = rng.uniform(-1, 1);
  return t;
}

}  // namespace

TEST(MaskKernels, OmpMatchesSerialBitForBit) {
  for (std::size_t n : {0u, 1u, 63u, 64u, 65u, 129u, 700u}) {
    for (auto metric : {OverlapMetric::iou, OverlapMetric::giou, OverlapMetric::diou, OverlapMetric::ciou}) {
      for (bool aware : {true, false}) {
        const auto p = make_problem(n, n + 1);
        const MaskProblem mp{p.boxes, p.classes, metric, 0.3f, aware};
        SuppressionMask a(n), b(n);
        const auto ra = build_mask_omp(mp, a);
        const auto rb = reference::build_mask_serial(mp, b);
        EXPECT_EQ(a, b);
        EXPECT_EQ(ra.evaluations, rb.evaluations);
        EXPECT_EQ(ra.complete_rows, n);
        EXPECT_EQ(rb.complete_rows, n);
      }
    }
  }
}

TEST(MaskKernels, OnlyUpperTriangle) {
  const auto p = make_problem(200, 4);
  const MaskProblem mp{p.boxes, p.classes, OverlapMetric::iou, 0.0f, false};
  SuppressionMask m(200);
  build_mask_omp(mp, m);
  for (std::size_t i = 0; i < 200; ++i) {
    for (std::size_t j = 0; j <= i; ++j) EXPECT_FALSE(m.test(i, j));
    for (std::size_t j = i + 1; j < 200; ++j) EXPECT_EQ(m.test(i, j), iou(p.boxes[i], p.boxes[j]) > 0.0f);
  }
}

TEST(MaskKernels, ExpiredDeadlineBuildsNothing) {
  const auto p = make_problem(300, 4);
  const MaskProblem mp{p.boxes, p.classes, OverlapMetric::iou, 0.5f, true};
  SuppressionMask m(300);
  const auto past = std::chrono::steady_clock::now() - std::chrono::seconds(1);
  const auto r = build_mask_omp(mp, m, past);
  EXPECT_TRUE(r.timed_out);
  EXPECT_EQ(r.complete_rows, 0u);
  const auto s = reference::build_mask_serial(mp, m, past);
  EXPECT_TRUE(s.timed_out);
  EXPECT_EQ(s.evaluations, 0u);
}

TEST(MaskKernels, PruneRespectsLimit) {
  SuppressionMask m(10);
  const auto r = prune(m, 10, 4);
  EXPECT_EQ(r.kept, (std::vector<std::size_t>{0, 1, 2, 3}));
  EXPECT_EQ(prune(m, 3, 100).kept.size(), 3u);
}

TEST(ConvKernels, ForwardMatchesSerialExactly) {
  SplitMix64 rng(1);
  const std::size_t cases[][5] = {{3, 8, 3, 2, 1}, {8, 16, 3, 2, 1}, {5, 7, 1, 1, 0}, {2, 3, 3, 1, 1}};
  for (const auto& c : cases) {
    const auto l = random_layer(rng, c[0], c[1], c[2], c[3], c[4]);
    const auto in = random_tensor(rng, c[0], 13, 16);
    Tensor3 a, b;
    conv_forward(l, in, a);
    reference::conv_forward_serial(l, in, b);
    EXPECT_EQ(a, b);
  }
}

TEST(ConvKernels, BackwardMatchesSerial) {
  SplitMix64 rng(2);
  const auto l = random_layer(rng, 4, 6, 3, 2, 1);
  const auto g = random_tensor(rng, 6, l.out_size(15), l.out_size(12));
  Tensor3 a, b;
  conv_backward_input(l, g, 15, 12, a);
  reference::conv_backward_input_serial(l, g, 15, 12, b);
  ASSERT_EQ(a.data.size(), b.data.size());
  for (std::size_t i = 0; i < a.data.size(); ++i) EXPECT_NEAR(a.data[i], b.data[i], 1e-12);
}

TEST(ConvKernels, BackwardIsAdjointOfForward) {
  // <conv(x) - bias, g> == <x, conv^T(g)>
  SplitMix64 rng(3);
  auto l = random_layer(rng, 3, 5, 3, 2, 1);
  std::fill(l.bias.begin(), l.bias.end(), 0.0);
  const auto x = random_tensor(rng, 3, 16, 10);
  Tensor3 y, gx;
  conv_forward(l, x, y);
  const auto g = random_tensor(rng, 5, y.height, y.width);
  conv_backward_input(l, g, 16, 10, gx);
  double lhs = 0.0, rhs = 0.0;
  for (std::size_t i = 0; i < y.data.size(); ++i) lhs += y.data[i] * g.data[i];
  for (std::size_t i = 0; i < x.data.size(); ++i) rhs += x.data[i] * gx.data[i];
  EXPECT_NEAR(lhs, rhs, 1e-10 * std::max(1.0, std::abs(lhs)));
}
