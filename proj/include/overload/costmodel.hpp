#pragma once

#include <cstddef>
#include <cstdint>
#include <map>
#include <span>
#include <string_view>
#include <vector>

#include "overload/nms.hpp"

namespace overload {

enum class Scenario { worst, best, random };

std::string_view to_string(Scenario s) noexcept;
/// Throws ConfigError on unknown names.
Scenario parse_scenario(std::string_view name);

/// Piecewise latency model: t_base for n <= n_break, alpha * n^2 above.
struct CostModelParams {
  double alpha = 0.0;  // seconds per candidate^2
  Seconds t_base{0.0};
  std::size_t n_break = 1;
};

struct TimingSample {
  std::size_t n = 0;
  Scenario scenario = Scenario::random;
  Seconds elapsed{0.0};
  std::size_t repeats = 0;
};

struct FitResult {
  CostModelParams params;
  double r2 = 0.0;            // on the quadratic segment
  std::size_t segment = 0;    // samples with n > n_break
};

inline constexpr double kSyntheticImageSize = 640.0;
inline constexpr float kSyntheticScore = 0.99f;

/// Synthetic candidate sets. Every candidate has objectness 0.99 and a top class
/// probability of 0.99.
///   best:   n copies of one box, all class 0
///   worst:  distinct boxes on a jittered grid, class = index % k
///   random: centers and sizes uniform in a 640x640 image, class = index % k
CandidateSet gen_synthetic(Scenario scenario, std::size_t n, std::size_t k_classes, std::uint64_t seed);

struct BenchmarkOptions {
  std::size_t repeats = 3;
  Seconds safety_limit{30.0};
  std::uint64_t seed = 0;
  std::size_t k_classes = 4;
};

/// Times nms_matrix on fresh synthetic sets: one warm-up, then the median of
/// `repeats` runs per (size, scenario). The worst scenario runs at t_iou = 1.0 and
/// the timeout is disabled so every run does the full pairwise work. Throws
/// BenchmarkLimitError when a single run exceeds the safety limit.
std::vector<TimingSample> benchmark(std::span<const std::size_t> sizes, std::span<const Scenario> scenarios,
                                    const NmsConfig& cfg, const BenchmarkOptions& opts = {});

/// Fits the piecewise model. The plateau is the longest run of smallest-n samples
/// within `factor` of the first one; t_base is its median; n_break is the smallest n
/// whose elapsed exceeds factor * t_base; alpha is the least-squares slope of elapsed
/// against n^2 through the origin over n > n_break.
/// Throws FitDegenerateError with fewer than 5 samples, less than a decade of n, or
/// no sample above the break.
FitResult fit(std::span<const TimingSample> samples, double factor = 2.0);

/// One fit per scenario present in the samples.
std::map<Scenario, FitResult> fit_by_scenario(std::span<const TimingSample> samples, double factor = 2.0);

Seconds predict_time(const CostModelParams& params, std::size_t n) noexcept;

/// Least-squares slope of log(elapsed) against log(n) over samples with n > n_min.
/// Returns NaN with fewer than two such samples.
double loglog_slope(std::span<const TimingSample> samples, std::size_t n_min);

}  // namespace overload
