#pragma once

#include <cstddef>
#include <cstdint>
#include <optional>
#include <span>
#include <vector>

#include "overload/costmodel.hpp"

namespace overload {

/// Times are in seconds throughout the simulator.
struct Request {
  std::size_t id = 0;
  double arrival_time = 0.0;  // when the client issues the request (open-loop workloads)
  double t_trans = 0.0;
  std::size_t candidate_count = 0;
  bool is_adversarial = false;
};

enum class NmsTimeSource { cost_model, measured };

struct SimConfig {
  double t_infer = 0.020;
  double t_trans = 0.0;
  CostModelParams cost_model{1e-9, Seconds(0.001), 1000};
  NmsTimeSource source = NmsTimeSource::cost_model;
  std::optional<double> timeout = 0.5;
  double adversarial_ratio = 0.0;
  std::size_t adv_candidates = 20000;
  std::size_t clean_candidates = 10;
  /// Closed loop: request i is issued when request i-1 completes (saturated pipeline,
  /// batch size 1). Open loop: requests are issued at their arrival_time.
  bool closed_loop = true;
  /// Measured mode: kernel settings and synthetic-set seed for the live nms_matrix runs.
  NmsConfig measured_nms{};
  std::uint64_t measured_seed = 0;

  void validate() const;
};

struct SimRecord {
  std::size_t id = 0;
  double arrival = 0.0;  // issue time
  double t_wait = 0.0;
  double t_comp = 0.0;   // t_wait + t_infer + nms_time
  double t_total = 0.0;  // t_trans + t_wait + t_infer + effective_nms
  double nms_time = 0.0;
  double effective_nms = 0.0;
  bool timed_out = false;
  bool is_adversarial = false;
};

struct SimTrace {
  std::vector<SimRecord> records;
  double mean_total = 0.0;
  double makespan = 0.0;
  double fps = 0.0;
  double ratio = 0.0;
  std::size_t timed_out = 0;
};

/// Exactly ceil(ratio * n) requests are adversarial, at positions drawn by a seeded
/// Fisher-Yates shuffle. Arrival times are all zero (closed loop fills them in).
std::vector<Request> synthesize_workload(std::size_t n_requests, const SimConfig& cfg, std::uint64_t seed);

/// FIFO single-server run. Service = t_infer + min(nms_time, timeout); timed_out when
/// nms_time exceeds the timeout. In measured mode each distinct candidate count is
/// timed once with nms_matrix on a random synthetic set.
SimTrace simulate(std::span<const Request> workload, const SimConfig& cfg);

/// One workload and simulation per ratio, same seed throughout.
std::vector<SimTrace> ratio_sweep(std::size_t n_requests, std::span<const double> ratios, const SimConfig& cfg,
                                  std::uint64_t seed);

}  // namespace overload
