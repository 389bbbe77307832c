#include <gtest/gtest.h>

#include <algorithm>
#include <numeric>
#include <thread>

#include "overload/costmodel.hpp"
#include "overload/errors.hpp"
#include "overload/nms.hpp"
#include "overload/rng.hpp"

using namespace overload;

namespace {

BoxCandidate cand(Box b, float obj, std::vector<float> p) { return make_candidate(b, obj, std::move(p)); }

// Textbook list-based NMS, written without the library's ranking code.
std::vector<BoxCandidate> oracle_nms(const CandidateSet& set, const NmsConfig& cfg) {
  std::vector<std::pair<float, std::size_t>> live;
  for (std::size_t i = 0; i < set.size(); ++i) {
    const auto& c = set.candidates[i];
    const float conf = c.objectness * *std::max_element(c.class_probs.begin(), c.class_probs.end());
    if (conf > cfg.t_conf) live.push_back({conf, i});
  }
  std::vector<BoxCandidate> kept;
  while (!live.empty() && kept.size() < cfg.max_detections) {
    auto best = live.begin();
    for (auto it = live.begin(); it != live.end(); ++it) {
      if (it->first > best->first || (it->first == best->first && it->second < best->second)) best = it;
    }
    const BoxCandidate head = set.candidates[best->second];
    live.erase(best);
    kept.push_back(head);
    std::erase_if(live, [&](const auto& e) {
      const auto& o = set.candidates[e.second];
      const bool same = !cfg.class_aware || o.class_id == head.class_id;
      return same && overlap(cfg.metric, head.box, o.box) > cfg.t_iou;
    });
  }
  return kept;
}

CandidateSet random_set(SplitMix64& rng, std::size_t n, std::size_t k) {
  CandidateSet s;
  for (std::size_t i = 0; i < n; ++i) {
    const float cx = static_cast<float>(rng.uniform(0, 200)), cy = static_cast<float>(rng.uniform(0, 200));
    const float w = static_cast<float>(rng.uniform(5, 60)), h = static_cast<float>(rng.uniform(5, 60));
    std::vector<float> p(k);
    for (auto& v : p) v = static_cast<float>(rng.uniform());
    // coarse objectness values so equal confidences occur
    const float obj = static_cast<float>(rng.below(20) + 1) / 20.0f;
    s.candidates.push_back(cand(Box(cx - w / 2, cy - h / 2, cx + w / 2, cy + h / 2), obj, std::move(p)));
  }
  return s;
}

}  // namespace

TEST(ConfidenceFilter, Examples) {
  EXPECT_TRUE(confidence_filter(CandidateSet{}, 0.25f).empty());
  CandidateSet s;
  s.candidates.push_back(cand(Box(0, 0, 1, 1), 0.9f, {0.6f}));
  EXPECT_EQ(confidence_filter(s, 0.25f).size(), 1u);
  s.candidates[0] = cand(Box(0, 0, 1, 1), 0.5f, {0.5f});
  EXPECT_EQ(confidence_filter(s, 0.25f).size(), 0u);
}

TEST(ConfidenceFilter, PreservesOrder) {
  SplitMix64 rng(1);
  const auto s = random_set(rng, 100, 3);
  const auto f = confidence_filter(s, 0.3f);
  std::size_t j = 0;
  for (const auto& c : s.candidates) {
    if (c.confidence() > 0.3f) EXPECT_EQ(f.candidates.at(j++), c);
  }
  EXPECT_EQ(j, f.size());
}

TEST(NmsMatrix, Examples) {
  CandidateSet s;
  s.candidates.push_back(cand(Box(0, 0, 10, 10), 0.9f, {1.0f}));
  s.candidates.push_back(cand(Box(0, 0, 10, 10), 0.8f, {1.0f}));
  NmsConfig cfg;
  auto r = nms_matrix(s, cfg);
  ASSERT_EQ(r.kept.size(), 1u);
  EXPECT_EQ(r.kept[0].objectness, 0.9f);
  EXPECT_EQ(r.n_pairwise, 1u);

  cfg.t_iou = 1.0f;
  EXPECT_EQ(nms_matrix(s, cfg).kept.size(), 2u);

  cfg.t_iou = 0.45f;
  s.candidates[1] = cand(Box(0, 0, 10, 10), 0.8f, {0.1f, 1.0f});
  EXPECT_EQ(nms_matrix(s, cfg).kept.size(), 2u);
  cfg.class_aware = false;
  EXPECT_EQ(nms_matrix(s, cfg).kept.size(), 1u);
}

TEST(NmsGreedy, IdenticalBoxesCountOnePass) {
  CandidateSet s;
  for (int i = 0; i < 100; ++i) s.candidates.push_back(cand(Box(0, 0, 10, 10), 0.99f, {0.99f}));
  NmsConfig cfg;
  const auto g = nms_greedy(s, cfg);
  EXPECT_EQ(g.kept.size(), 1u);
  EXPECT_EQ(g.n_pairwise, 99u);
  EXPECT_EQ(nms_matrix(s, cfg).n_pairwise, 4950u);
}

TEST(NmsGreedy, DisjointBoxesAllKept) {
  CandidateSet s;
  for (int i = 0; i < 50; ++i) {
    s.candidates.push_back(cand(Box(i * 10.0f, 0, i * 10.0f + 5, 5), 0.9f, {0.9f}));
  }
  NmsConfig cfg;
  EXPECT_EQ(nms_greedy(s, cfg).kept.size(), 50u);
  EXPECT_EQ(nms_matrix(s, cfg).kept, nms_greedy(s, cfg).kept);
}

TEST(NmsProperty, MatrixGreedyAndOracleAgree) {
  SplitMix64 rng(2024);
  const OverlapMetric metrics[] = {OverlapMetric::iou, OverlapMetric::giou, OverlapMetric::diou, OverlapMetric::ciou};
  for (int t = 0; t < 120; ++t) {
    const auto s = random_set(rng, rng.below(500) + 1, rng.below(4) + 1);
    NmsConfig cfg;
    cfg.timeout.reset();
    cfg.t_iou = static_cast<float>(rng.uniform(0.0, 1.0));
    cfg.metric = metrics[t % 4];
    cfg.class_aware = t % 3 != 0;
    cfg.max_detections = rng.below(2) ? 300 : rng.below(20) + 1;
    cfg.backend = t % 2 ? KernelBackend::omp : KernelBackend::serial;
    const auto m = nms_matrix(s, cfg);
    const auto g = nms_greedy(s, cfg);
    ASSERT_EQ(m.kept, g.kept) << "trial " << t;
    ASSERT_EQ(m.kept, oracle_nms(s, cfg)) << "trial " << t;
    EXPECT_EQ(m.n_pairwise, m.n_input * (m.n_input - (m.n_input > 0)) / 2);
    EXPECT_LE(g.n_pairwise, m.n_pairwise);
    EXPECT_LE(m.kept.size(), std::min(m.n_input, cfg.max_detections));
  }
}

TEST(NmsProperty, WorkDependsOnlyOnCount) {
  for (std::size_t n : {0u, 1u, 2u, 63u, 64u, 65u, 300u}) {
    NmsConfig cfg;
    std::uint64_t first = 0;
    for (auto sc : {Scenario::worst, Scenario::best, Scenario::random}) {
      const auto r = nms_matrix(gen_synthetic(sc, n, 3, 5), cfg);
      if (sc == Scenario::worst) first = r.n_pairwise;
      EXPECT_EQ(r.n_pairwise, first);
      EXPECT_EQ(r.n_pairwise, n * (n ? n - 1 : 0) / 2);
    }
  }
}

TEST(NmsProperty, MonotoneThreshold) {
  SplitMix64 rng(77);
  for (int t = 0; t < 30; ++t) {
    const auto s = random_set(rng, 200, 2);
    NmsConfig cfg;
    cfg.max_detections = 1000;
    std::size_t prev = 0;
    for (float thr : {0.0f, 0.1f, 0.3f, 0.45f, 0.6f, 0.8f, 0.95f, 1.0f}) {
      cfg.t_iou = thr;
      const auto r = nms_matrix(s, cfg);
      EXPECT_GE(r.kept.size(), prev);
      prev = r.kept.size();
      if (thr == 1.0f) EXPECT_EQ(r.kept.size(), r.n_input);
    }
  }
}

TEST(NmsProperty, CapBoundsWork) {
  const auto s = gen_synthetic(Scenario::random, 3000, 4, 1);
  NmsConfig cfg;
  cfg.max_candidates = 1000;
  const auto r = nms_matrix(s, cfg);
  EXPECT_TRUE(r.capped);
  EXPECT_EQ(r.n_input, 3000u);
  EXPECT_LE(r.n_pairwise, 499500u);
  cfg.max_candidates = 5000;
  EXPECT_FALSE(nms_matrix(s, cfg).capped);
}

TEST(NmsProperty, CapKeepsHighestConfidence) {
  SplitMix64 rng(8);
  const auto s = random_set(rng, 300, 2);
  NmsConfig capped;
  capped.max_candidates = 40;
  capped.t_iou = 1.0f;
  const auto r = nms_matrix(s, capped);
  std::vector<float> conf;
  for (const auto& c : confidence_filter(s, capped.t_conf).candidates) conf.push_back(c.confidence());
  std::sort(conf.rbegin(), conf.rend());
  ASSERT_EQ(r.kept.size(), 40u);
  for (std::size_t i = 0; i < 40; ++i) EXPECT_EQ(r.kept[i].confidence(), conf[i]);
}

TEST(NmsProperty, Deterministic) {
  SplitMix64 rng(31);
  const auto s = random_set(rng, 400, 3);
  NmsConfig cfg;
  EXPECT_EQ(nms_matrix(s, cfg).kept, nms_matrix(s, cfg).kept);
}

TEST(NmsTimeout, PartialPrefix) {
  const auto s = gen_synthetic(Scenario::random, 6000, 4, 3);
  NmsConfig cfg;
  cfg.timeout = Seconds(1e-4);
  cfg.max_detections = 100000;
  const auto r = nms_matrix(s, cfg);
  EXPECT_TRUE(r.timed_out);
  EXPECT_LT(r.n_pairwise, 6000ull * 5999ull / 2);

  // Kept boxes are a prefix of the untimed result.
  cfg.timeout.reset();
  const auto full = nms_matrix(s, cfg);
  ASSERT_LE(r.kept.size(), full.kept.size());
  for (std::size_t i = 0; i < r.kept.size(); ++i) EXPECT_EQ(r.kept[i], full.kept[i]);

  cfg.timeout = Seconds(1e-4);
  const auto g = nms_greedy(s, cfg);
  EXPECT_TRUE(g.timed_out);
}

TEST(NmsConfigValidate, Rejects) {
  NmsConfig cfg;
  cfg.max_detections = 0;
  EXPECT_THROW(nms_matrix({}, cfg), ConfigError);
  cfg = {};
  cfg.max_candidates = 0;
  EXPECT_THROW(cfg.validate(), ConfigError);
  cfg = {};
  cfg.t_iou = 1.5f;
  EXPECT_THROW(cfg.validate(), ConfigError);
}
