// OpenMP kernels against their serial references, plus matrix vs greedy NMS.
#include <benchmark/benchmark.h>

#include <vector>

#include "overload/conv.hpp"
#include "overload/costmodel.hpp"
#include "overload/detector.hpp"
#include "overload/nms.hpp"
#include "overload/nms_kernels.hpp"

using namespace overload;

namespace {

struct Problem {
  std::vector<Box> boxes;
  std::vector<int> classes;
};

Problem problem(std::size_t n) {
  const auto set = gen_synthetic(Scenario::random, n, 4, 1);
  Problem p;
  for (const auto& c : set.candidates) {
    p.boxes.push_back(c.box);
    p.classes.push_back(static_cast<int>(c.class_id));
  }
  return p;
}

template <auto Build>
void BM_Mask(benchmark::State& st) {
  const auto p = problem(static_cast<std::size_t>(st.range(0)));
  const kernels::MaskProblem mp{p.boxes, p.classes};
  for (auto _ : st) {
    kernels::SuppressionMask mask(p.boxes.size());
    benchmark::DoNotOptimize(Build(mp, mask, {}));
  }
  st.SetComplexityN(st.range(0));
}

void BM_MaskSerial(benchmark::State& st) { BM_Mask<&kernels::reference::build_mask_serial>(st); }
void BM_MaskOmp(benchmark::State& st) { BM_Mask<&kernels::build_mask_omp>(st); }
BENCHMARK(BM_MaskSerial)->RangeMultiplier(4)->Range(256, 16384)->Complexity(benchmark::oNSquared);
BENCHMARK(BM_MaskOmp)->RangeMultiplier(4)->Range(256, 16384)->Complexity(benchmark::oNSquared);

const auto& layer0() {
  static const auto w = init_weights(1);
  return w.layers[0];
}

kernels::Tensor3 input() {
  kernels::Tensor3 t(3, 64, 64);
  for (std::size_t i = 0; i < t.data.size(); ++i) t.data[i] = static_cast<double>(i % 97) / 97.0;
  return t;
}

void BM_ConvForwardSerial(benchmark::State& st) {
  const auto in = input();
  kernels::Tensor3 out;
  for (auto _ : st) kernels::reference::conv_forward_serial(layer0(), in, out);
}
void BM_ConvForwardOmp(benchmark::State& st) {
  const auto in = input();
  kernels::Tensor3 out;
  for (auto _ : st) kernels::conv_forward(layer0(), in, out);
}
void BM_ConvBackwardSerial(benchmark::State& st) {
  const auto in = input();
  kernels::Tensor3 out, grad;
  kernels::conv_forward(layer0(), in, out);
  for (auto _ : st) kernels::reference::conv_backward_input_serial(layer0(), out, 64, 64, grad);
}
void BM_ConvBackwardOmp(benchmark::State& st) {
  const auto in = input();
  kernels::Tensor3 out, grad;
  kernels::conv_forward(layer0(), in, out);
  for (auto _ : st) kernels::conv_backward_input(layer0(), out, 64, 64, grad);
}
BENCHMARK(BM_ConvForwardSerial);
BENCHMARK(BM_ConvForwardOmp);
BENCHMARK(BM_ConvBackwardSerial);
BENCHMARK(BM_ConvBackwardOmp);

void BM_NmsMatrix(benchmark::State& st) {
  const auto set = gen_synthetic(Scenario::random, static_cast<std::size_t>(st.range(0)), 4, 2);
  NmsConfig cfg;
  cfg.timeout.reset();
  for (auto _ : st) benchmark::DoNotOptimize(nms_matrix(set, cfg));
}
void BM_NmsGreedy(benchmark::State& st) {
  const auto set = gen_synthetic(Scenario::random, static_cast<std::size_t>(st.range(0)), 4, 2);
  NmsConfig cfg;
  cfg.timeout.reset();
  for (auto _ : st) benchmark::DoNotOptimize(nms_greedy(set, cfg));
}
BENCHMARK(BM_NmsMatrix)->RangeMultiplier(4)->Range(256, 16384);
BENCHMARK(BM_NmsGreedy)->RangeMultiplier(4)->Range(256, 16384);

}  // namespace

BENCHMARK_MAIN();
