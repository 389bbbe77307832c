#pragma once

#include <algorithm>
#include <cmath>
#include <cstddef>
#include <span>
#include <string_view>
#include <utility>
#include <vector>

namespace overload {

/// Axis-aligned box in corner form (pixels). The constructor normalizes so that
/// x1 <= x2 and y1 <= y2.
struct Box {
  float x1 = 0.0f;
  float y1 = 0.0f;
  float x2 = 0.0f;
  float y2 = 0.0f;

  constexpr Box() = default;
  constexpr Box(float ax1, float ay1, float ax2, float ay2) noexcept
      : x1(std::min(ax1, ax2)), y1(std::min(ay1, ay2)), x2(std::max(ax1, ax2)), y2(std::max(ay1, ay2)) {}

  constexpr float width() const noexcept { return x2 - x1; }
  constexpr float height() const noexcept { return y2 - y1; }
  constexpr float area() const noexcept { return width() * height(); }
  constexpr float cx() const noexcept { return 0.5f * (x1 + x2); }
  constexpr float cy() const noexcept { return 0.5f * (y1 + y2); }
  constexpr bool degenerate() const noexcept { return width() <= 0.0f || height() <= 0.0f; }

  friend constexpr bool operator==(const Box&, const Box&) = default;
};

/// One detector proposal. Class scores are independent sigmoids and need not sum to one.
struct BoxCandidate {
  Box box;
  float objectness = 0.0f;
  std::vector<float> class_probs;
  int class_id = 0;

  float max_prob() const noexcept {
    return class_probs.empty() ? 0.0f : class_probs[static_cast<std::size_t>(class_id)];
  }
  /// objectness * max class probability; used for both filtering and ranking.
  float confidence() const noexcept { return objectness * max_prob(); }

  friend bool operator==(const BoxCandidate&, const BoxCandidate&) = default;
};

/// Index of the largest score, lowest index on ties. Empty input gives 0.
int argmax_class(std::span<const float> probs) noexcept;

/// Builds a candidate and derives class_id. Throws DataError when a score is
/// outside [0, 1] or not finite.
BoxCandidate make_candidate(const Box& box, float objectness, std::vector<float> class_probs);

enum class OverlapMetric { iou, giou, diou, ciou };

std::string_view to_string(OverlapMetric metric) noexcept;
/// Throws ConfigError on unknown names.
OverlapMetric parse_overlap_metric(std::string_view name);

inline float intersection_area(const Box& a, const Box& b) noexcept {
  const float iw = std::max(0.0f, std::min(a.x2, b.x2) - std::max(a.x1, b.x1));
  const float ih = std::max(0.0f, std::min(a.y2, b.y2) - std::max(a.y1, b.y1));
  return iw * ih;
}

/// Intersection over union; 0 when the union is empty.
inline float iou(const Box& a, const Box& b) noexcept {
  const float inter = intersection_area(a, b);
  const float uni = a.area() + b.area() - inter;
  return uni > 0.0f ? inter / uni : 0.0f;
}

/// IoU minus the fraction of the enclosing box not covered by the union.
inline float giou(const Box& a, const Box& b) noexcept {
  const double inter = intersection_area(a, b);
  const double uni = static_cast<double>(a.area()) + static_cast<double>(b.area()) - inter;
  const double ov = uni > 0.0 ? inter / uni : 0.0;
  const double ew = static_cast<double>(std::max(a.x2, b.x2)) - std::min(a.x1, b.x1);
  const double eh = static_cast<double>(std::max(a.y2, b.y2)) - std::min(a.y1, b.y1);
  const double enclosing = ew * eh;
  if (enclosing <= 0.0) return static_cast<float>(ov);
  return static_cast<float>(ov - (enclosing - uni) / enclosing);
}

namespace detail {
// IoU minus squared center distance over squared enclosing diagonal, in double.
inline double diou_d(const Box& a, const Box& b, double& iou_out) noexcept {
  const double inter = intersection_area(a, b);
  const double uni = static_cast<double>(a.area()) + static_cast<double>(b.area()) - inter;
  iou_out = uni > 0.0 ? inter / uni : 0.0;
  const double dx = static_cast<double>(a.cx()) - b.cx();
  const double dy = static_cast<double>(a.cy()) - b.cy();
  const double ew = static_cast<double>(std::max(a.x2, b.x2)) - std::min(a.x1, b.x1);
  const double eh = static_cast<double>(std::max(a.y2, b.y2)) - std::min(a.y1, b.y1);
  const double diag2 = ew * ew + eh * eh;
  if (diag2 <= 0.0) return iou_out;
  return iou_out - (dx * dx + dy * dy) / diag2;
}
}  // namespace detail

inline float diou(const Box& a, const Box& b) noexcept {
  double ov = 0.0;
  return static_cast<float>(detail::diou_d(a, b, ov));
}

/// DIoU minus the aspect-ratio consistency term, clamped to [-1, 1].
inline float ciou(const Box& a, const Box& b) noexcept {
  double ov = 0.0;
  const double d = detail::diou_d(a, b, ov);
  constexpr double kPi = 3.14159265358979323846;
  const double da = std::atan2(static_cast<double>(a.width()), static_cast<double>(a.height())) -
                    std::atan2(static_cast<double>(b.width()), static_cast<double>(b.height()));
  const double v = 4.0 / (kPi * kPi) * da * da;
  const double alpha = v > 0.0 ? v / ((1.0 - ov) + v) : 0.0;
  return static_cast<float>(std::clamp(d - alpha * v, -1.0, 1.0));
}

template <OverlapMetric M>
inline float overlap(const Box& a, const Box& b) noexcept {
  if constexpr (M == OverlapMetric::iou) {
    return iou(a, b);
  } else if constexpr (M == OverlapMetric::giou) {
    return giou(a, b);
  } else if constexpr (M == OverlapMetric::diou) {
    return diou(a, b);
  } else {
    return ciou(a, b);
  }
}

inline float overlap(OverlapMetric metric, const Box& a, const Box& b) noexcept {
  switch (metric) {
    case OverlapMetric::iou: return iou(a, b);
    case OverlapMetric::giou: return giou(a, b);
    case OverlapMetric::diou: return diou(a, b);
    case OverlapMetric::ciou: return ciou(a, b);
  }
  return iou(a, b);
}

struct Anchor {
  double width = 0.0;
  double height = 0.0;
};

/// Where a raw detector row lives: grid cell, anchor, stride and the image it decodes into.
struct DecodeSpec {
  std::size_t cell_x = 0;
  std::size_t cell_y = 0;
  Anchor anchor;
  double stride = 1.0;
  double image_width = 0.0;
  double image_height = 0.0;
};

inline constexpr double kDecodeLogSizeClamp = 6.0;

inline double sigmoid(double t) noexcept { return 1.0 / (1.0 + std::exp(-t)); }

/// Anchor-grid decode of one row (t_x, t_y, t_w, t_h, t_obj, t_1..t_K):
///   center = (sigmoid(t) + cell) * stride, size = anchor * exp(clamp(t_wh, -6, 6)),
///   objectness and class scores are sigmoids. The box is clipped to the image.
BoxCandidate decode(std::span<const double> raw_row, const DecodeSpec& spec);

}  // namespace overload
