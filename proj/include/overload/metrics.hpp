#pragma once

#include <array>
#include <cstddef>
#include <span>
#include <string>
#include <vector>

#include "overload/nms.hpp"

namespace overload {

/// Values at min, 10th, 25th, 50th, 75th, 90th percentile and max.
struct PercentileReport {
  static constexpr std::array<double, 7> kLevels{0.0, 0.10, 0.25, 0.50, 0.75, 0.90, 1.0};
  static constexpr std::array<const char*, 7> kLabels{"min", "10%", "25%", "50%", "75%", "90%", "max"};
  std::array<double, 7> values{};
};

/// Nearest-rank quantiles: rank = ceil(q * n), at least 1. Throws DataError on empty input.
PercentileReport percentile_report(std::span<const double> samples);

/// Greedy one-to-one matching in descending clean confidence: a clean box is recalled
/// when an unmatched adversarial box of the same class overlaps it with IoU above
/// iou_thresh (the highest-IoU such box is taken). Returns 1 for an empty clean set.
double recall(std::span<const BoxCandidate> clean, std::span<const BoxCandidate> adv, float iou_thresh = 0.5f);

/// |confidence_filter(set, t_conf)|.
std::size_t count_objects(const CandidateSet& set, float t_conf);

/// One image's worth of a latency table row.
struct ImageStats {
  double objects = 0.0;  // candidates fed into NMS
  double boxes = 0.0;    // boxes NMS returned
  double time_ms = 0.0;
};

/// Plain-text table: rows are percentiles, columns are objects, boxes and time for
/// the adversarial and the original images.
std::string render_latency_table(std::span<const ImageStats> adversarial, std::span<const ImageStats> original);

}  // namespace overload
