#include "overload/nms_kernels.hpp"

#include <algorithm>
#include <atomic>

#ifdef _OPENMP
#include <omp.h>
#endif

namespace overload::kernels {

namespace {

using Clock = std::chrono::steady_clock;

bool expired(const Deadline& deadline) {
  return deadline.has_value() && Clock::now() >= *deadline;
}

// Fills row i one 64-bit word at a time so the inner loop has a fixed trip count.
template <OverlapMetric M>
std::uint64_t fill_row(const MaskProblem& p, std::span<std::uint64_t> row, std::size_t i) {
  const std::size_t n = p.boxes.size();
  const Box bi = p.boxes[i];
  const int ci = p.classes[i];
  const float thr = p.t_iou;
  const bool class_aware = p.class_aware;
  for (std::size_t w = (i + 1) / 64; w < row.size(); ++w) {
    const std::size_t lo = std::max(i + 1, w * 64);
    const std::size_t hi = std::min(n, w * 64 + 64);
    std::uint64_t word = 0;
    for (std::size_t j = lo; j < hi; ++j) {
      const bool hit = overlap<M>(bi, p.boxes[j]) > thr && (!class_aware || p.classes[j] == ci);
      word |= static_cast<std::uint64_t>(hit) << (j % 64);
    }
    row[w] = word;
  }
  return n - 1 - i;
}

template <OverlapMetric M>
MaskBuildResult build_omp_impl(const MaskProblem& p, SuppressionMask& mask, const Deadline& deadline) {
  const std::size_t n = p.boxes.size();
  std::vector<unsigned char> done(n, 0);
  std::atomic<bool> stop{false};
  std::uint64_t evaluations = 0;

#pragma omp parallel for schedule(dynamic, 16) reduction(+ : evaluations)
  for (std::int64_t si = 0; si < static_cast<std::int64_t>(n); ++si) {
    if (stop.load(std::memory_order_relaxed)) continue;
    if (expired(deadline)) {
      stop.store(true, std::memory_order_relaxed);
      continue;
    }
    const auto i = static_cast<std::size_t>(si);
    evaluations += fill_row<M>(p, mask.row(i), i);
    done[i] = 1;
  }

  MaskBuildResult r;
  r.evaluations = evaluations;
  r.timed_out = stop.load();
  r.complete_rows = static_cast<std::size_t>(std::find(done.begin(), done.end(), 0) - done.begin());
  return r;
}

template <OverlapMetric M>
MaskBuildResult build_serial_impl(const MaskProblem& p, SuppressionMask& mask, const Deadline& deadline) {
  const std::size_t n = p.boxes.size();
  MaskBuildResult r;
  for (std::size_t i = 0; i < n; ++i) {
    if (expired(deadline)) {
      r.timed_out = true;
      break;
    }
    // Plain per-pair loop, deliberately not sharing fill_row with the OpenMP path.
    auto row = mask.row(i);
    for (std::size_t j = i + 1; j < n; ++j) {
      const bool same = !p.class_aware || p.classes[j] == p.classes[i];
      if (overlap<M>(p.boxes[i], p.boxes[j]) > p.t_iou && same) row[j / 64] |= 1ULL << (j % 64);
      ++r.evaluations;
    }
    r.complete_rows = i + 1;
  }
  return r;
}

}  // namespace

int max_threads() noexcept {
#ifdef _OPENMP
  return omp_get_max_threads();
#else
  return 1;
#endif
}

MaskBuildResult build_mask_omp(const MaskProblem& problem, SuppressionMask& mask, Deadline deadline) {
  switch (problem.metric) {
    case OverlapMetric::iou: return build_omp_impl<OverlapMetric::iou>(problem, mask, deadline);
    case OverlapMetric::giou: return build_omp_impl<OverlapMetric::giou>(problem, mask, deadline);
    case OverlapMetric::diou: return build_omp_impl<OverlapMetric::diou>(problem, mask, deadline);
    case OverlapMetric::ciou: return build_omp_impl<OverlapMetric::ciou>(problem, mask, deadline);
  }
  return {};
}

namespace reference {

MaskBuildResult build_mask_serial(const MaskProblem& problem, SuppressionMask& mask, Deadline deadline) {
  switch (problem.metric) {
    case OverlapMetric::iou: return build_serial_impl<OverlapMetric::iou>(problem, mask, deadline);
    case OverlapMetric::giou: return build_serial_impl<OverlapMetric::giou>(problem, mask, deadline);
    case OverlapMetric::diou: return build_serial_impl<OverlapMetric::diou>(problem, mask, deadline);
    case OverlapMetric::ciou: return build_serial_impl<OverlapMetric::ciou>(problem, mask, deadline);
  }
  return {};
}

}  // namespace reference

PruneResult prune(const SuppressionMask& mask, std::size_t decidable, std::size_t max_keep, Deadline deadline) {
  PruneResult r;
  const std::size_t words = mask.words_per_row();
  std::vector<std::uint64_t> removed(words, 0);
  decidable = std::min(decidable, mask.size());
  for (std::size_t i = 0; i < decidable && r.kept.size() < max_keep; ++i) {
    if ((removed[i / 64] >> (i % 64)) & 1ULL) continue;
    r.kept.push_back(i);
    const auto row = mask.row(i);
    for (std::size_t w = i / 64; w < words; ++w) removed[w] |= row[w];
    if (expired(deadline)) {
      r.timed_out = true;
      break;
    }
  }
  return r;
}

}  // namespace overload::kernels
