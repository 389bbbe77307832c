#pragma once

#include <chrono>
#include <cstddef>
#include <cstdint>
#include <optional>
#include <string>
#include <vector>

#include "overload/geometry.hpp"

namespace overload {

using Seconds = std::chrono::duration<double>;

struct CandidateSet {
  std::vector<BoxCandidate> candidates;
  std::string image_id;

  std::size_t size() const noexcept { return candidates.size(); }
  bool empty() const noexcept { return candidates.empty(); }
};

/// Which implementation builds the pairwise suppression mask.
enum class KernelBackend { serial, omp };

struct NmsConfig {
  float t_conf = 0.25f;
  float t_iou = 0.45f;
  OverlapMetric metric = OverlapMetric::iou;
  bool class_aware = true;
  std::size_t max_detections = 300;
  /// Defense cap on the number of candidates entering the pairwise stage; 1000 is the
  /// recommended setting when enabled.
  std::optional<std::size_t> max_candidates;
  std::optional<Seconds> timeout = Seconds(0.5);
  KernelBackend backend = KernelBackend::omp;

  /// Throws ConfigError when a field is out of range.
  void validate() const;
};

inline constexpr std::size_t kRecommendedCandidateCap = 1000;

struct NmsReport {
  std::vector<BoxCandidate> kept;
  std::size_t n_input = 0;        // candidates surviving the confidence filter
  std::uint64_t n_pairwise = 0;   // overlap-metric evaluations performed
  Seconds elapsed{0.0};
  bool timed_out = false;
  bool capped = false;
};

/// Keeps candidates with objectness * max class probability strictly above t_conf,
/// preserving order.
CandidateSet confidence_filter(const CandidateSet& set, float t_conf);

/// Matrix NMS: filter, optional cap, rank by confidence (ties by original index),
/// evaluate every upper-triangular pair into a suppression bitmask, then prune.
/// The pairwise work is |C|(|C|-1)/2 regardless of box layout.
NmsReport nms_matrix(const CandidateSet& set, const NmsConfig& cfg);

/// Classical greedy NMS; evaluates only pairs whose second member is still alive.
/// Serves as the sequential oracle for nms_matrix.
NmsReport nms_greedy(const CandidateSet& set, const NmsConfig& cfg);

}  // namespace overload
