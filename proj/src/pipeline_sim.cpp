#include "overload/pipeline_sim.hpp"

#include <algorithm>
#include <cmath>
#include <map>
#include <numeric>

#include "overload/errors.hpp"
#include "overload/rng.hpp"

namespace overload {

void SimConfig::validate() const {
  if (!(t_infer > 0.0)) throw ConfigError("t_infer must be positive");
  if (!(t_trans >= 0.0)) throw ConfigError("t_trans must be non-negative");
  if (!(adversarial_ratio >= 0.0 && adversarial_ratio <= 1.0)) throw ConfigError("adversarial ratio must lie in [0, 1]");
  if (timeout && !(*timeout > 0.0)) throw ConfigError("timeout must be positive");
  if (source == NmsTimeSource::cost_model && !(cost_model.alpha > 0.0)) {
    throw ConfigError("cost model alpha must be positive");
  }
}

std::vector<Request> synthesize_workload(std::size_t n_requests, const SimConfig& cfg, std::uint64_t seed) {
  cfg.validate();
  if (n_requests < 1) throw ConfigError("workload needs at least one request");

  // The small slack keeps products such as 0.7 * 10 from rounding up past the integer.
  const double raw = cfg.adversarial_ratio * static_cast<double>(n_requests);
  const auto n_adv = std::min(n_requests, static_cast<std::size_t>(std::ceil(raw - 1e-9)));

  std::vector<std::size_t> order(n_requests);
  std::iota(order.begin(), order.end(), std::size_t{0});
  SplitMix64 rng(seed);
  for (std::size_t i = n_requests - 1; i > 0; --i) std::swap(order[i], order[rng.below(i + 1)]);

  std::vector<Request> w(n_requests);
  for (std::size_t i = 0; i < n_requests; ++i) {
    w[i].id = i;
    w[i].t_trans = cfg.t_trans;
    w[i].candidate_count = cfg.clean_candidates;
  }
  for (std::size_t k = 0; k < n_adv; ++k) {
    w[order[k]].is_adversarial = true;
    w[order[k]].candidate_count = cfg.adv_candidates;
  }
  return w;
}

namespace {

class NmsClock {
 public:
  explicit NmsClock(const SimConfig& cfg) : cfg_(cfg) {}

  double operator()(std::size_t n) {
    if (cfg_.source == NmsTimeSource::cost_model) return predict_time(cfg_.cost_model, n).count();
    auto it = cache_.find(n);
    if (it == cache_.end()) {
      NmsConfig nc = cfg_.measured_nms;
      nc.timeout.reset();
      const CandidateSet set = gen_synthetic(Scenario::random, n, 4, cfg_.measured_seed);
      it = cache_.emplace(n, nms_matrix(set, nc).elapsed.count()).first;
    }
    return it->second;
  }

 private:
  const SimConfig& cfg_;
  std::map<std::size_t, double> cache_;
};

}  // namespace

SimTrace simulate(std::span<const Request> workload, const SimConfig& cfg) {
  cfg.validate();
  NmsClock nms_clock(cfg);
  SimTrace trace;
  trace.ratio = cfg.adversarial_ratio;
  trace.records.reserve(workload.size());

  double server_free = 0.0;
  double last_done = 0.0;
  double first_issue = 0.0;
  double prev_arrival = 0.0;
  for (std::size_t i = 0; i < workload.size(); ++i) {
    const Request& req = workload[i];
    if (!cfg.closed_loop && i > 0 && req.arrival_time < prev_arrival) {
      throw DataError("arrival times must be non-decreasing");
    }
    prev_arrival = req.arrival_time;

    SimRecord rec;
    rec.id = req.id;
    rec.is_adversarial = req.is_adversarial;
    rec.arrival = cfg.closed_loop ? last_done : req.arrival_time;
    if (i == 0) first_issue = rec.arrival;

    const double at_server = rec.arrival + req.t_trans;
    const double start = std::max(at_server, server_free);
    rec.t_wait = start - at_server;
    rec.nms_time = nms_clock(req.candidate_count);
    rec.timed_out = cfg.timeout && rec.nms_time > *cfg.timeout;
    rec.effective_nms = rec.timed_out ? *cfg.timeout : rec.nms_time;
    const double done = start + cfg.t_infer + rec.effective_nms;
    rec.t_comp = rec.t_wait + cfg.t_infer + rec.nms_time;
    rec.t_total = req.t_trans + rec.t_wait + cfg.t_infer + rec.effective_nms;

    server_free = done;
    last_done = std::max(last_done, done);
    trace.mean_total += rec.t_total;
    trace.timed_out += rec.timed_out ? 1 : 0;
    trace.records.push_back(rec);
  }

  if (!trace.records.empty()) {
    trace.mean_total /= static_cast<double>(trace.records.size());
    trace.makespan = last_done - first_issue;
    trace.fps = trace.makespan > 0.0 ? static_cast<double>(trace.records.size()) / trace.makespan : 0.0;
  }
  return trace;
}

std::vector<SimTrace> ratio_sweep(std::size_t n_requests, std::span<const double> ratios, const SimConfig& cfg,
                                  std::uint64_t seed) {
  std::vector<SimTrace> out;
  for (double r : ratios) {
    SimConfig c = cfg;
    c.adversarial_ratio = r;
    const auto w = synthesize_workload(n_requests, c, seed);
    out.push_back(simulate(w, c));
  }
  return out;
}

}  // namespace overload
