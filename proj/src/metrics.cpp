#include "overload/metrics.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <numeric>

#include "overload/errors.hpp"

namespace overload {

PercentileReport percentile_report(std::span<const double> samples) {
  if (samples.empty()) throw DataError("percentile report of an empty sample");
  std::vector<double> s(samples.begin(), samples.end());
  std::sort(s.begin(), s.end());
  const std::size_t n = s.size();
  PercentileReport r;
  for (std::size_t k = 0; k < r.values.size(); ++k) {
    const double q = PercentileReport::kLevels[k];
    auto rank = static_cast<std::size_t>(std::ceil(q * static_cast<double>(n) - 1e-9));
    rank = std::clamp<std::size_t>(rank, 1, n);
    r.values[k] = s[rank - 1];
  }
  return r;
}

double recall(std::span<const BoxCandidate> clean, std::span<const BoxCandidate> adv, float iou_thresh) {
  if (clean.empty()) return 1.0;
  std::vector<std::size_t> order(clean.size());
  std::iota(order.begin(), order.end(), std::size_t{0});
  std::stable_sort(order.begin(), order.end(),
                   [&](std::size_t a, std::size_t b) { return clean[a].confidence() > clean[b].confidence(); });

  std::vector<unsigned char> used(adv.size(), 0);
  std::size_t matched = 0;
  for (std::size_t ci : order) {
    const BoxCandidate& c = clean[ci];
    std::size_t best = adv.size();
    float best_iou = iou_thresh;
    for (std::size_t j = 0; j < adv.size(); ++j) {
      if (used[j] || adv[j].class_id != c.class_id) continue;
      const float v = iou(c.box, adv[j].box);
      if (v > best_iou) {
        best_iou = v;
        best = j;
      }
    }
    if (best < adv.size()) {
      used[best] = 1;
      ++matched;
    }
  }
  return static_cast<double>(matched) / static_cast<double>(std::max<std::size_t>(1, clean.size()));
}

std::size_t count_objects(const CandidateSet& set, float t_conf) { return confidence_filter(set, t_conf).size(); }

std::string render_latency_table(std::span<const ImageStats> adversarial, std::span<const ImageStats> original) {
  const auto column = [](std::span<const ImageStats> v, double ImageStats::*field) {
    std::vector<double> xs;
    xs.reserve(v.size());
    for (const auto& s : v) xs.push_back(s.*field);
    return xs;
  };

  std::array<PercentileReport, 6> cols{};
  const std::array<std::span<const ImageStats>, 2> groups{adversarial, original};
  for (std::size_t g = 0; g < 2; ++g) {
    if (groups[g].empty()) throw DataError("latency table needs at least one image per group");
    cols[g * 3 + 0] = percentile_report(column(groups[g], &ImageStats::objects));
    cols[g * 3 + 1] = percentile_report(column(groups[g], &ImageStats::boxes));
    cols[g * 3 + 2] = percentile_report(column(groups[g], &ImageStats::time_ms));
  }

  std::string out;
  char line[160];
  std::snprintf(line, sizeof line, "%-6s | %10s %10s %10s | %10s %10s %10s\n", "", "adv obj", "adv box", "adv ms",
                "orig obj", "orig box", "orig ms");
  out += line;
  for (std::size_t k = 0; k < 7; ++k) {
    std::snprintf(line, sizeof line, "%-6s | %10.0f %10.0f %10.3f | %10.0f %10.0f %10.3f\n",
                  PercentileReport::kLabels[k], cols[0].values[k], cols[1].values[k], cols[2].values[k],
                  cols[3].values[k], cols[4].values[k], cols[5].values[k]);
    out += line;
  }
  return out;
}

}  // namespace overload
