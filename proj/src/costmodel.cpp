#include "overload/costmodel.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <string>

#include "overload/errors.hpp"
#include "overload/rng.hpp"

namespace overload {

std::string_view to_string(Scenario s) noexcept {
  switch (s) {
    case Scenario::worst: return "worst";
    case Scenario::best: return "best";
    case Scenario::random: return "random";
  }
  return "random";
}

Scenario parse_scenario(std::string_view name) {
  if (name == "worst") return Scenario::worst;
  if (name == "best") return Scenario::best;
  if (name == "random") return Scenario::random;
  throw ConfigError("unknown scenario '" + std::string(name) + "'");
}

namespace {

BoxCandidate synthetic_candidate(const Box& box, std::size_t cls, std::size_t k) {
  BoxCandidate c;
  c.box = box;
  c.objectness = kSyntheticScore;
  c.class_probs.assign(std::max<std::size_t>(k, 1), 0.01f);
  c.class_probs[cls] = kSyntheticScore;
  c.class_id = static_cast<int>(cls);
  return c;
}

}  // namespace

CandidateSet gen_synthetic(Scenario scenario, std::size_t n, std::size_t k_classes, std::uint64_t seed) {
  const std::size_t k = std::max<std::size_t>(k_classes, 1);
  const double side = kSyntheticImageSize;
  SplitMix64 rng(seed);
  CandidateSet set;
  set.image_id = std::string(to_string(scenario)) + "-" + std::to_string(n) + "-" + std::to_string(seed);
  set.candidates.reserve(n);

  switch (scenario) {
    case Scenario::best: {
      const Box box(200.0f, 200.0f, 264.0f, 296.0f);
      for (std::size_t i = 0; i < n; ++i) set.candidates.push_back(synthetic_candidate(box, 0, k));
      break;
    }
    case Scenario::worst: {
      const auto g = static_cast<std::size_t>(std::ceil(std::sqrt(static_cast<double>(n))));
      const double cell = g > 0 ? side / static_cast<double>(g) : side;
      for (std::size_t i = 0; i < n; ++i) {
        const double cx = (static_cast<double>(i % g) + 0.5 + rng.uniform(-0.2, 0.2)) * cell;
        const double cy = (static_cast<double>(i / g) + 0.5 + rng.uniform(-0.2, 0.2)) * cell;
        const double half = 0.3 * cell;
        const Box box(static_cast<float>(cx - half), static_cast<float>(cy - half),
                      static_cast<float>(cx + half), static_cast<float>(cy + half));
        set.candidates.push_back(synthetic_candidate(box, i % k, k));
      }
      break;
    }
    case Scenario::random: {
      for (std::size_t i = 0; i < n; ++i) {
        const double cx = rng.uniform(0.0, side);
        const double cy = rng.uniform(0.0, side);
        const double w = rng.uniform(8.0, 128.0);
        const double h = rng.uniform(8.0, 128.0);
        const auto clip = [&](double v) { return static_cast<float>(std::clamp(v, 0.0, side)); };
        const Box box(clip(cx - 0.5 * w), clip(cy - 0.5 * h), clip(cx + 0.5 * w), clip(cy + 0.5 * h));
        set.candidates.push_back(synthetic_candidate(box, i % k, k));
      }
      break;
    }
  }
  return set;
}

std::vector<TimingSample> benchmark(std::span<const std::size_t> sizes, std::span<const Scenario> scenarios,
                                    const NmsConfig& cfg, const BenchmarkOptions& opts) {
  if (sizes.empty()) throw ConfigError("benchmark needs at least one size");
  if (opts.repeats < 1) throw ConfigError("benchmark repeats must be >= 1");

  std::vector<TimingSample> out;
  for (std::size_t n : sizes) {
    for (Scenario sc : scenarios) {
      const CandidateSet set = gen_synthetic(sc, n, opts.k_classes, opts.seed);
      NmsConfig run_cfg = cfg;
      run_cfg.timeout.reset();
      if (sc == Scenario::worst) run_cfg.t_iou = 1.0f;

      const auto timed_run = [&] {
        const auto t0 = std::chrono::steady_clock::now();
        const NmsReport r = nms_matrix(set, run_cfg);
        const Seconds dt = std::chrono::steady_clock::now() - t0;
        if (dt > opts.safety_limit) {
          throw BenchmarkLimitError("nms_matrix on " + std::to_string(n) + " candidates took " +
                                    std::to_string(dt.count()) + " s");
        }
        (void)r;
        return dt;
      };

      timed_run();
      std::vector<Seconds> runs;
      runs.reserve(opts.repeats);
      for (std::size_t r = 0; r < opts.repeats; ++r) runs.push_back(timed_run());
      std::sort(runs.begin(), runs.end());
      out.push_back({n, sc, runs[runs.size() / 2], opts.repeats});
    }
  }
  return out;
}

namespace {

double median_of(std::vector<double> v) {
  std::sort(v.begin(), v.end());
  const std::size_t m = v.size() / 2;
  return v.size() % 2 ? v[m] : 0.5 * (v[m - 1] + v[m]);
}

}  // namespace

FitResult fit(std::span<const TimingSample> samples, double factor) {
  if (samples.size() < 5) throw FitDegenerateError("fit needs at least 5 samples");
  if (!(factor > 1.0)) throw ConfigError("plateau factor must exceed 1");

  std::vector<TimingSample> s(samples.begin(), samples.end());
  std::stable_sort(s.begin(), s.end(), [](const auto& a, const auto& b) { return a.n < b.n; });
  if (s.front().n == 0 || s.back().n < 10 * s.front().n) {
    throw FitDegenerateError("fit needs samples spanning at least one decade of n");
  }

  const double e0 = s.front().elapsed.count();
  std::vector<double> plateau;
  for (const auto& x : s) {
    if (x.elapsed.count() > factor * e0) break;
    plateau.push_back(x.elapsed.count());
  }
  const double t_base = median_of(plateau);

  const auto brk = std::find_if(s.begin(), s.end(), [&](const auto& x) { return x.elapsed.count() > factor * t_base; });
  if (brk == s.end()) throw FitDegenerateError("no sample rises above the plateau");
  const std::size_t n_break = brk->n;

  double sxy = 0.0;
  double sxx = 0.0;
  std::vector<const TimingSample*> seg;
  for (const auto& x : s) {
    if (x.n <= n_break) continue;
    const double q = static_cast<double>(x.n) * static_cast<double>(x.n);
    sxy += q * x.elapsed.count();
    sxx += q * q;
    seg.push_back(&x);
  }
  if (seg.empty()) throw FitDegenerateError("no sample lies above the break point n=" + std::to_string(n_break));

  FitResult r;
  r.params.alpha = sxy / sxx;
  r.params.t_base = Seconds(t_base);
  r.params.n_break = n_break;
  r.segment = seg.size();

  double mean = 0.0;
  for (const auto* x : seg) mean += x->elapsed.count();
  mean /= static_cast<double>(seg.size());
  double ss_res = 0.0;
  double ss_tot = 0.0;
  for (const auto* x : seg) {
    const double q = static_cast<double>(x->n) * static_cast<double>(x->n);
    const double e = x->elapsed.count();
    ss_res += (e - r.params.alpha * q) * (e - r.params.alpha * q);
    ss_tot += (e - mean) * (e - mean);
  }
  r.r2 = ss_tot > 0.0 ? 1.0 - ss_res / ss_tot : (ss_res == 0.0 ? 1.0 : 0.0);
  return r;
}

std::map<Scenario, FitResult> fit_by_scenario(std::span<const TimingSample> samples, double factor) {
  std::map<Scenario, std::vector<TimingSample>> groups;
  for (const auto& s : samples) groups[s.scenario].push_back(s);
  std::map<Scenario, FitResult> out;
  for (const auto& [sc, group] : groups) out.emplace(sc, fit(group, factor));
  return out;
}

Seconds predict_time(const CostModelParams& params, std::size_t n) noexcept {
  if (n > params.n_break) {
    const double nn = static_cast<double>(n);
    return Seconds(params.alpha * nn * nn);
  }
  return params.t_base;
}

double loglog_slope(std::span<const TimingSample> samples, std::size_t n_min) {
  double sx = 0.0, sy = 0.0, sxx = 0.0, sxy = 0.0;
  std::size_t m = 0;
  for (const auto& s : samples) {
    if (s.n <= n_min || s.elapsed.count() <= 0.0) continue;
    const double x = std::log(static_cast<double>(s.n));
    const double y = std::log(s.elapsed.count());
    sx += x;
    sy += y;
    sxx += x * x;
    sxy += x * y;
    ++m;
  }
  if (m < 2) return std::numeric_limits<double>::quiet_NaN();
  const double dm = static_cast<double>(m);
  const double den = dm * sxx - sx * sx;
  if (den == 0.0) return std::numeric_limits<double>::quiet_NaN();
  return (dm * sxy - sx * sy) / den;
}

}  // namespace overload
