#include "overload/attack.hpp"

#include <algorithm>
#include <cmath>
#include <stdexcept>
#include <string>

#include "overload/errors.hpp"

namespace overload {

std::string_view to_string(LossKind k) noexcept {
  switch (k) {
    case LossKind::log: return "log";
    case LossKind::tanh: return "tanh";
    case LossKind::half_square: return "half_square";
    case LossKind::neg_log_one_minus: return "neg_log_one_minus";
  }
  return "log";
}

std::string_view to_string(StepMode m) noexcept { return m == StepMode::sign ? "sign" : "raw"; }

std::string_view to_string(EnsembleMode m) noexcept {
  return m == EnsembleMode::average ? "average" : "round_robin";
}

LossKind parse_loss_kind(std::string_view name) {
  if (name == "log") return LossKind::log;
  if (name == "tanh") return LossKind::tanh;
  if (name == "half_square") return LossKind::half_square;
  if (name == "neg_log_one_minus") return LossKind::neg_log_one_minus;
  throw ConfigError("unknown loss '" + std::string(name) + "'");
}

StepMode parse_step_mode(std::string_view name) {
  if (name == "sign") return StepMode::sign;
  if (name == "raw") return StepMode::raw;
  throw ConfigError("unknown step mode '" + std::string(name) + "'");
}

EnsembleMode parse_ensemble_mode(std::string_view name) {
  if (name == "average") return EnsembleMode::average;
  if (name == "round_robin") return EnsembleMode::round_robin;
  throw ConfigError("unknown ensemble mode '" + std::string(name) + "'");
}

void AttackConfig::validate() const {
  if (!(epsilon > 0.0)) throw ConfigError("epsilon must be positive");
  if (!(eta >= 0.0) || !std::isfinite(eta)) throw ConfigError("eta must be non-negative");
  if (steps < 1) throw ConfigError("steps must be >= 1");
  if (grid_m < 1) throw ConfigError("grid_m must be >= 1");
  if (!(t_conf >= 0.0 && t_conf <= 1.0)) throw ConfigError("t_conf must lie in [0, 1]");
  if (stagnation_window < 1) throw ConfigError("stagnation_window must be >= 1");
  if (!(stagnation_decay > 0.0 && stagnation_decay <= 1.0)) throw ConfigError("stagnation_decay must lie in (0, 1]");
  if (!(w_min >= 0.0 && w_min <= 1.0)) throw ConfigError("w_min must lie in [0, 1]");
}

double f_conf(double c, double p, double t_conf) noexcept { return c * p > t_conf ? c : c * p; }

namespace {
constexpr double kLo = 1e-12;
constexpr double kHi = 1.0 - 1e-12;
}  // namespace

double loss_shape(LossKind kind, double x) noexcept {
  switch (kind) {
    case LossKind::log: return std::log(std::max(x, kLo));
    case LossKind::tanh: return std::tanh(x);
    case LossKind::half_square: return 0.5 * x * x;
    case LossKind::neg_log_one_minus: return -std::log1p(-std::min(x, kHi));
  }
  return 0.0;
}

double loss_shape_derivative(LossKind kind, double x) noexcept {
  switch (kind) {
    case LossKind::log: return x >= kLo ? 1.0 / x : 0.0;
    case LossKind::tanh: {
      const double t = std::tanh(x);
      return 1.0 - t * t;
    }
    case LossKind::half_square: return x;
    case LossKind::neg_log_one_minus: return x <= kHi ? 1.0 / (1.0 - x) : 0.0;
  }
  return 0.0;
}

LossResult loss(const DetectorTensor& out, const AttackConfig& cfg) {
  LossResult r;
  r.grad = out;
  std::fill(r.grad.data.begin(), r.grad.data.end(), 0.0);
  for (std::size_t s = 0; s < out.rows(); ++s) {
    const auto row = out.row(s);
    auto g = r.grad.row(s);
    const double c = sigmoid(row[4]);
    const double dc = c * (1.0 - c);
    for (std::size_t j = 5; j < row.size(); ++j) {
      const double p = sigmoid(row[j]);
      const double cp = c * p;
      if (cp > cfg.t_conf) {
        r.value += loss_shape(cfg.loss, c);
        g[4] += loss_shape_derivative(cfg.loss, c) * dc;
      } else {
        const double d = loss_shape_derivative(cfg.loss, cp);
        r.value += loss_shape(cfg.loss, cp);
        g[4] += d * p * dc;
        g[j] += d * c * p * (1.0 - p);
      }
    }
  }
  return r;
}

namespace {

std::size_t cell_of(double coord, double extent, std::size_t m) {
  if (!(coord > 0.0)) return 0;
  const auto c = static_cast<std::size_t>(coord / extent * static_cast<double>(m));
  return std::min(c, m - 1);
}

}  // namespace

std::vector<std::size_t> cell_capacity(const DetectorTensor& out, std::size_t m) {
  std::vector<std::size_t> cap(m * m, 0);
  const double iw = static_cast<double>(out.grid_w) * out.stride;
  const double ih = static_cast<double>(out.grid_h) * out.stride;
  for (std::size_t gy = 0; gy < out.grid_h; ++gy) {
    for (std::size_t gx = 0; gx < out.grid_w; ++gx) {
      const std::size_t cx = cell_of((static_cast<double>(gx) + 0.5) * out.stride, iw, m);
      const std::size_t cy = cell_of((static_cast<double>(gy) + 0.5) * out.stride, ih, m);
      cap[cy * m + cx] += out.anchors;
    }
  }
  return cap;
}

std::vector<std::size_t> cell_counts(const DetectorTensor& out, std::size_t m, double t_conf) {
  std::vector<std::size_t> counts(m * m, 0);
  const double iw = static_cast<double>(out.grid_w) * out.stride;
  const double ih = static_cast<double>(out.grid_h) * out.stride;
  for (std::size_t r = 0; r < out.rows(); ++r) {
    const auto row = out.row(r);
    const float obj = static_cast<float>(sigmoid(row[4]));
    float best = 0.0f;
    for (std::size_t j = 5; j < row.size(); ++j) best = std::max(best, static_cast<float>(sigmoid(row[j])));
    if (!(obj * best > static_cast<float>(t_conf))) continue;
    const DecodeSpec spec = out.decode_spec(r);
    const double cx = (sigmoid(row[0]) + static_cast<double>(spec.cell_x)) * spec.stride;
    const double cy = (sigmoid(row[1]) + static_cast<double>(spec.cell_y)) * spec.stride;
    ++counts[cell_of(cy, ih, m) * m + cell_of(cx, iw, m)];
  }
  return counts;
}

SpatialGrid update_weights(const SpatialGrid& grid, std::span<const std::size_t> counts,
                           std::span<const std::size_t> capacity, const AttackConfig& cfg) {
  const std::size_t cells = grid.m * grid.m;
  if (counts.size() != cells || capacity.size() != cells) throw ShapeError("attention grid size mismatch");
  SpatialGrid next = grid;
  for (std::size_t i = 0; i < cells; ++i) {
    next.stagnation[i] = counts[i] > grid.last_counts[i] ? 0 : grid.stagnation[i] + 1;
    next.last_counts[i] = counts[i];
    double density = 0.0;
    if (capacity[i] > 0) {
      density = static_cast<double>(counts[i]) / static_cast<double>(capacity[i]);
    } else {
      density = counts[i] > 0 ? 1.0 : 0.0;
    }
    const double decay = std::pow(cfg.stagnation_decay, static_cast<double>(next.stagnation[i] / cfg.stagnation_window));
    next.weights[i] = std::clamp((1.0 - density) * decay, cfg.w_min, 1.0);
  }
  return next;
}

ImageTensor pgd_step(const ImageTensor& x, const ImageTensor& x_org, const ImageTensor& grad,
                     const SpatialGrid& grid, const AttackConfig& cfg) {
  if (!x.same_shape(x_org) || !x.same_shape(grad) || x.data.size() != x_org.data.size() ||
      x.data.size() != grad.data.size()) {
    throw ShapeError("pgd_step operands differ in shape");
  }
  if (grid.weights.size() != grid.m * grid.m || grid.m == 0) throw ShapeError("attention grid is malformed");

  ImageTensor out = x;
  const double eps = cfg.epsilon;
  for (std::size_t yy = 0; yy < x.height; ++yy) {
    const std::size_t cy = std::min(grid.m - 1, yy * grid.m / x.height);
    for (std::size_t xx = 0; xx < x.width; ++xx) {
      const std::size_t cx = std::min(grid.m - 1, xx * grid.m / x.width);
      const double w = grid.weights[cy * grid.m + cx];
      for (std::size_t c = 0; c < x.channels; ++c) {
        const std::size_t i = (yy * x.width + xx) * x.channels + c;
        const double g = grad.data[i];
        const double delta = cfg.step_mode == StepMode::sign ? static_cast<double>((g > 0.0) - (g < 0.0)) : g;
        const double org = x_org.data[i];
        double v = x.data[i] + cfg.eta * w * delta;
        v = std::clamp(v, org - eps, org + eps);
        v = std::clamp(v, 0.0, 1.0);
        // org +- eps is rounded; walk back until the budget holds as written.
        while (std::abs(v - org) > eps) v = std::nextafter(v, org);
        out.data[i] = v;
      }
    }
  }
  return out;
}

namespace {

void check_budget(const ImageTensor& x, const ImageTensor& x_org, double eps, StepRecord& rec) {
  double linf = 0.0;
  double lo = 1.0;
  double hi = 0.0;
  for (std::size_t i = 0; i < x.data.size(); ++i) {
    linf = std::max(linf, std::abs(x.data[i] - x_org.data[i]));
    lo = std::min(lo, x.data[i]);
    hi = std::max(hi, x.data[i]);
  }
  rec.linf = linf;
  rec.min_pixel = lo;
  rec.max_pixel = hi;
  if (linf > eps || lo < 0.0 || hi > 1.0) {
    throw std::logic_error("perturbation budget violated at step " + std::to_string(rec.step));
  }
}

void add_into(std::vector<std::size_t>& acc, const std::vector<std::size_t>& v) {
  if (acc.empty()) acc.assign(v.size(), 0);
  for (std::size_t i = 0; i < v.size(); ++i) acc[i] += v[i];
}

}  // namespace

AttackResult ensemble_attack(std::span<const ModelWeights> models, const ImageTensor& x_org,
                             const AttackConfig& cfg, EnsembleMode mode) {
  cfg.validate();
  if (models.empty()) throw ConfigError("ensemble needs at least one model");
  check_input_shape(x_org);
  const std::size_t n_models = models.size();

  AttackResult res;
  ImageTensor x = x_org;
  SpatialGrid grid(cfg.grid_m);
  std::vector<std::size_t> capacity;

  for (std::size_t step = 0; step < cfg.steps; ++step) {
    StepRecord rec;
    rec.step = step;
    std::vector<ForwardPass> passes;
    passes.reserve(n_models);
    for (const auto& w : models) {
      passes.push_back(forward_with_state(w, x));
      if (!passes.back().output.same_shape(passes.front().output)) {
        throw ShapeError("ensemble models disagree on output geometry");
      }
    }
    if (step == 0) {
      for (const auto& p : passes) res.trace.clean_counts.push_back(count_above(p.output, static_cast<float>(cfg.t_conf)));
      for (std::size_t k = 0; k < n_models; ++k) add_into(capacity, cell_capacity(passes[k].output, cfg.grid_m));
    }

    ImageTensor grad;
    const std::size_t chosen = step % n_models;
    for (std::size_t k = 0; k < n_models; ++k) {
      const LossResult lr = loss(passes[k].output, cfg);
      rec.loss += lr.value;
      rec.count += count_above(passes[k].output, static_cast<float>(cfg.t_conf));
      add_into(rec.cell_counts, cell_counts(passes[k].output, cfg.grid_m, cfg.t_conf));
      if (mode == EnsembleMode::round_robin && k != chosen) continue;
      ImageTensor g = backward_input(models[k], passes[k], lr.grad);
      if (grad.data.empty()) {
        grad = std::move(g);
      } else {
        for (std::size_t i = 0; i < grad.data.size(); ++i) grad.data[i] += g.data[i];
      }
    }
    if (mode == EnsembleMode::average && n_models > 1) {
      const double inv = 1.0 / static_cast<double>(n_models);
      for (double& v : grad.data) v *= inv;
    }

    if (cfg.spatial_attention) grid = update_weights(grid, rec.cell_counts, capacity, cfg);
    x = pgd_step(x, x_org, grad, grid, cfg);
    check_budget(x, x_org, cfg.epsilon, rec);
    res.trace.steps.push_back(std::move(rec));
  }

  for (const auto& w : models) res.trace.final_counts.push_back(count_above(forward(w, x), static_cast<float>(cfg.t_conf)));
  res.adversarial = std::move(x);
  return res;
}

AttackResult overload_attack(const ModelWeights& w, const ImageTensor& x_org, const AttackConfig& cfg) {
  return ensemble_attack(std::span<const ModelWeights>(&w, 1), x_org, cfg, EnsembleMode::average);
}

}  // namespace overload
