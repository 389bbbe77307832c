#include "overload/nms.hpp"

#include <algorithm>
#include <numeric>

#include "overload/errors.hpp"
#include "overload/nms_kernels.hpp"

namespace overload {

using Clock = std::chrono::steady_clock;

void NmsConfig::validate() const {
  if (!(t_conf >= 0.0f && t_conf <= 1.0f)) throw ConfigError("t_conf must lie in [0, 1]");
  if (!(t_iou >= 0.0f && t_iou <= 1.0f)) throw ConfigError("t_iou must lie in [0, 1]");
  if (max_detections < 1) throw ConfigError("max_detections must be >= 1");
  if (max_candidates && *max_candidates < 1) throw ConfigError("max_candidates must be >= 1");
  if (timeout && !(timeout->count() > 0.0)) throw ConfigError("timeout must be positive");
}

CandidateSet confidence_filter(const CandidateSet& set, float t_conf) {
  CandidateSet out;
  out.image_id = set.image_id;
  for (const auto& c : set.candidates) {
    if (c.confidence() > t_conf) out.candidates.push_back(c);
  }
  return out;
}

namespace {

// Filtered candidates in rank order: confidence descending, original index ascending.
struct Ranking {
  std::vector<std::size_t> order;  // indices into the input set
  std::size_t n_input = 0;
  bool capped = false;
};

Ranking rank_candidates(const CandidateSet& set, const NmsConfig& cfg) {
  Ranking r;
  std::vector<float> conf(set.size());
  for (std::size_t i = 0; i < set.size(); ++i) {
    conf[i] = set.candidates[i].confidence();
    if (conf[i] > cfg.t_conf) r.order.push_back(i);
  }
  r.n_input = r.order.size();

  const auto before = [&](std::size_t a, std::size_t b) {
    return conf[a] > conf[b] || (conf[a] == conf[b] && a < b);
  };
  if (cfg.max_candidates && r.order.size() > *cfg.max_candidates) {
    const auto keep = static_cast<std::ptrdiff_t>(*cfg.max_candidates);
    std::partial_sort(r.order.begin(), r.order.begin() + keep, r.order.end(), before);
    r.order.resize(*cfg.max_candidates);
    r.capped = true;
  } else {
    std::sort(r.order.begin(), r.order.end(), before);
  }
  return r;
}

kernels::Deadline deadline_for(const NmsConfig& cfg, Clock::time_point start) {
  if (!cfg.timeout) return std::nullopt;
  return start + std::chrono::duration_cast<Clock::duration>(*cfg.timeout);
}

}  // namespace

NmsReport nms_matrix(const CandidateSet& set, const NmsConfig& cfg) {
  cfg.validate();
  const auto start = Clock::now();
  const auto deadline = deadline_for(cfg, start);

  NmsReport report;
  const Ranking ranking = rank_candidates(set, cfg);
  report.n_input = ranking.n_input;
  report.capped = ranking.capped;

  const std::size_t n = ranking.order.size();
  std::vector<Box> boxes(n);
  std::vector<int> classes(n);
  for (std::size_t r = 0; r < n; ++r) {
    const auto& c = set.candidates[ranking.order[r]];
    boxes[r] = c.box;
    classes[r] = c.class_id;
  }

  kernels::SuppressionMask mask(n);
  const kernels::MaskProblem problem{boxes, classes, cfg.metric, cfg.t_iou, cfg.class_aware};
  const auto built = cfg.backend == KernelBackend::omp
                         ? kernels::build_mask_omp(problem, mask, deadline)
                         : kernels::reference::build_mask_serial(problem, mask, deadline);
  report.n_pairwise = built.evaluations;

  // After an interrupted build only the leading complete rows can be decided; pruning
  // them is cheap, so it runs to completion.
  const auto pruned = kernels::prune(mask, built.complete_rows, cfg.max_detections,
                                     built.timed_out ? kernels::Deadline{} : deadline);
  report.timed_out = built.timed_out || pruned.timed_out;
  report.kept.reserve(pruned.kept.size());
  for (std::size_t r : pruned.kept) report.kept.push_back(set.candidates[ranking.order[r]]);

  report.elapsed = Clock::now() - start;
  return report;
}

NmsReport nms_greedy(const CandidateSet& set, const NmsConfig& cfg) {
  cfg.validate();
  const auto start = Clock::now();
  const auto deadline = deadline_for(cfg, start);

  NmsReport report;
  const Ranking ranking = rank_candidates(set, cfg);
  report.n_input = ranking.n_input;
  report.capped = ranking.capped;

  const std::size_t n = ranking.order.size();
  std::vector<unsigned char> suppressed(n, 0);
  for (std::size_t r = 0; r < n; ++r) {
    if (suppressed[r]) continue;
    const auto& head = set.candidates[ranking.order[r]];
    report.kept.push_back(head);
    if (report.kept.size() >= cfg.max_detections) break;
    if (deadline && Clock::now() >= *deadline) {
      report.timed_out = true;
      break;
    }
    for (std::size_t q = r + 1; q < n; ++q) {
      if (suppressed[q]) continue;
      const auto& other = set.candidates[ranking.order[q]];
      if (cfg.class_aware && other.class_id != head.class_id) continue;
      ++report.n_pairwise;
      if (overlap(cfg.metric, head.box, other.box) > cfg.t_iou) suppressed[q] = 1;
    }
  }

  report.elapsed = Clock::now() - start;
  return report;
}

}  // namespace overload
