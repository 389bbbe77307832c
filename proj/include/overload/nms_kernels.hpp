#pragma once

// Pairwise suppression-mask kernels. Row i holds one bit per j > i, set when
// candidate i would suppress candidate j. The OpenMP kernel and the serial
// reference must produce bit-identical masks.

#include <chrono>
#include <cstddef>
#include <cstdint>
#include <optional>
#include <span>
#include <vector>

#include "overload/geometry.hpp"

namespace overload::kernels {

using Deadline = std::optional<std::chrono::steady_clock::time_point>;

/// Threads the OpenMP kernels will use (1 when built without OpenMP).
int max_threads() noexcept;

class SuppressionMask {
 public:
  SuppressionMask() = default;
  explicit SuppressionMask(std::size_t n)
      : n_(n), words_((n + 63) / 64), bits_(n * ((n + 63) / 64), 0) {}

  std::size_t size() const noexcept { return n_; }
  std::size_t words_per_row() const noexcept { return words_; }

  std::span<std::uint64_t> row(std::size_t i) noexcept { return {bits_.data() + i * words_, words_}; }
  std::span<const std::uint64_t> row(std::size_t i) const noexcept {
    return {bits_.data() + i * words_, words_};
  }
  bool test(std::size_t i, std::size_t j) const noexcept {
    return (bits_[i * words_ + j / 64] >> (j % 64)) & 1ULL;
  }

  friend bool operator==(const SuppressionMask&, const SuppressionMask&) = default;

 private:
  std::size_t n_ = 0;
  std::size_t words_ = 0;
  std::vector<std::uint64_t> bits_;
};

/// Ranked candidates as the kernels see them.
struct MaskProblem {
  std::span<const Box> boxes;
  std::span<const int> classes;
  OverlapMetric metric = OverlapMetric::iou;
  float t_iou = 0.45f;
  bool class_aware = true;
};

struct MaskBuildResult {
  std::size_t complete_rows = 0;  // leading rows [0, complete_rows) are fully built
  std::uint64_t evaluations = 0;
  bool timed_out = false;
};

/// OpenMP kernel, one dynamic-scheduled task per row.
MaskBuildResult build_mask_omp(const MaskProblem& problem, SuppressionMask& mask, Deadline deadline = {});

/// Pruning pass over the first `decidable` candidates. Returns kept ranks in order.
struct PruneResult {
  std::vector<std::size_t> kept;
  bool timed_out = false;
};
PruneResult prune(const SuppressionMask& mask, std::size_t decidable, std::size_t max_keep,
                  Deadline deadline = {});

namespace reference {

/// Straight double loop; the baseline build_mask_omp is checked against.
MaskBuildResult build_mask_serial(const MaskProblem& problem, SuppressionMask& mask, Deadline deadline = {});

}  // namespace reference

}  // namespace overload::kernels
