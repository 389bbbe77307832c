#include "overload/geometry.hpp"

#include <string>

#include "overload/errors.hpp"

namespace overload {

int argmax_class(std::span<const float> probs) noexcept {
  int best = 0;
  for (std::size_t i = 1; i < probs.size(); ++i) {
    if (probs[i] > probs[static_cast<std::size_t>(best)]) best = static_cast<int>(i);
  }
  return best;
}

namespace {
bool unit_score(float v) { return std::isfinite(v) && v >= 0.0f && v <= 1.0f; }
}  // namespace

BoxCandidate make_candidate(const Box& box, float objectness, std::vector<float> class_probs) {
  if (!unit_score(objectness)) {
    throw DataError("objectness outside [0, 1]: " + std::to_string(objectness));
  }
  for (float p : class_probs) {
    if (!unit_score(p)) throw DataError("class probability outside [0, 1]: " + std::to_string(p));
  }
  if (!std::isfinite(box.x1) || !std::isfinite(box.y1) || !std::isfinite(box.x2) || !std::isfinite(box.y2)) {
    throw DataError("non-finite box coordinate");
  }
  BoxCandidate c;
  c.box = box;
  c.objectness = objectness;
  c.class_id = argmax_class(class_probs);
  c.class_probs = std::move(class_probs);
  return c;
}

std::string_view to_string(OverlapMetric metric) noexcept {
  switch (metric) {
    case OverlapMetric::iou: return "iou";
    case OverlapMetric::giou: return "giou";
    case OverlapMetric::diou: return "diou";
    case OverlapMetric::ciou: return "ciou";
  }
  return "iou";
}

OverlapMetric parse_overlap_metric(std::string_view name) {
  if (name == "iou") return OverlapMetric::iou;
  if (name == "giou") return OverlapMetric::giou;
  if (name == "diou") return OverlapMetric::diou;
  if (name == "ciou") return OverlapMetric::ciou;
  throw ConfigError("unknown overlap metric '" + std::string(name) + "'");
}

BoxCandidate decode(std::span<const double> raw_row, const DecodeSpec& spec) {
  if (raw_row.size() < 5) throw ShapeError("decode needs at least 5 raw values per row");
  const double cx = (sigmoid(raw_row[0]) + static_cast<double>(spec.cell_x)) * spec.stride;
  const double cy = (sigmoid(raw_row[1]) + static_cast<double>(spec.cell_y)) * spec.stride;
  const double w = spec.anchor.width * std::exp(std::clamp(raw_row[2], -kDecodeLogSizeClamp, kDecodeLogSizeClamp));
  const double h = spec.anchor.height * std::exp(std::clamp(raw_row[3], -kDecodeLogSizeClamp, kDecodeLogSizeClamp));

  const auto clip_x = [&](double v) { return static_cast<float>(std::clamp(v, 0.0, spec.image_width)); };
  const auto clip_y = [&](double v) { return static_cast<float>(std::clamp(v, 0.0, spec.image_height)); };

  BoxCandidate c;
  c.box = Box(clip_x(cx - 0.5 * w), clip_y(cy - 0.5 * h), clip_x(cx + 0.5 * w), clip_y(cy + 0.5 * h));
  c.objectness = static_cast<float>(sigmoid(raw_row[4]));
  c.class_probs.reserve(raw_row.size() - 5);
  for (std::size_t i = 5; i < raw_row.size(); ++i) {
    c.class_probs.push_back(static_cast<float>(sigmoid(raw_row[i])));
  }
  c.class_id = argmax_class(c.class_probs);
  return c;
}

}  // namespace overload
