#pragma once

#include <cstddef>
#include <span>
#include <string_view>
#include <vector>

#include "overload/detector.hpp"

namespace overload {

/// Shape F_l applied to each confidence term: log x, tanh x, x^2/2, -log(1-x).
enum class LossKind { log, tanh, half_square, neg_log_one_minus };
enum class StepMode { sign, raw };
enum class EnsembleMode { average, round_robin };

std::string_view to_string(LossKind k) noexcept;
std::string_view to_string(StepMode m) noexcept;
std::string_view to_string(EnsembleMode m) noexcept;
LossKind parse_loss_kind(std::string_view name);
StepMode parse_step_mode(std::string_view name);
EnsembleMode parse_ensemble_mode(std::string_view name);

struct AttackConfig {
  double epsilon = 8.0 / 255.0;
  double eta = 2.0 / 255.0;
  std::size_t steps = 100;
  std::size_t grid_m = 8;
  LossKind loss = LossKind::log;
  StepMode step_mode = StepMode::sign;
  double t_conf = 0.25;
  bool spatial_attention = true;
  std::size_t stagnation_window = 5;
  double stagnation_decay = 0.5;
  double w_min = 0.05;

  /// Throws ConfigError. eta = 0 is accepted and gives a null step.
  void validate() const;
};

/// m x m attention field, row-major by (cell_y, cell_x).
struct SpatialGrid {
  std::size_t m = 0;
  std::vector<double> weights;
  std::vector<std::size_t> last_counts;
  std::vector<std::size_t> stagnation;

  SpatialGrid() = default;
  explicit SpatialGrid(std::size_t m_) : m(m_), weights(m_ * m_, 1.0), last_counts(m_ * m_, 0), stagnation(m_ * m_, 0) {}
};

/// c if c * p > t_conf, else c * p.
double f_conf(double c, double p, double t_conf) noexcept;

/// F_l and its derivative, with the argument clamped to [1e-12, 1 - 1e-12] where
/// the function would be singular (derivative 0 outside the clamp).
double loss_shape(LossKind kind, double x) noexcept;
double loss_shape_derivative(LossKind kind, double x) noexcept;

struct LossResult {
  double value = 0.0;
  DetectorTensor grad;  // dL / d(raw output)
};

/// Sum over every slot and class of F_l(f_conf(sigmoid(t_obj), sigmoid(t_i))), with
/// the gradient of whichever branch is active.
LossResult loss(const DetectorTensor& out, const AttackConfig& cfg);

/// Slots per attention cell: how many detector cells have their center inside it, times anchors.
std::vector<std::size_t> cell_capacity(const DetectorTensor& out, std::size_t m);

/// Above-threshold slots per attention cell, placed by the decoded box center taken
/// before clipping to the image.
std::vector<std::size_t> cell_counts(const DetectorTensor& out, std::size_t m, double t_conf);

/// D = counts / cap; the stagnation counter grows while counts fail to increase and
/// resets otherwise; W = clamp((1 - D) * decay^floor(stagnation / window), w_min, 1).
SpatialGrid update_weights(const SpatialGrid& grid, std::span<const std::size_t> counts,
                           std::span<const std::size_t> capacity, const AttackConfig& cfg);

/// x' = x + eta * W(cell) * step(grad), projected onto the eps-ball around x_org and
/// onto [0, 1]. Throws ShapeError on mismatched shapes.
ImageTensor pgd_step(const ImageTensor& x, const ImageTensor& x_org, const ImageTensor& grad,
                     const SpatialGrid& grid, const AttackConfig& cfg);

struct StepRecord {
  std::size_t step = 0;
  double loss = 0.0;
  std::size_t count = 0;                  // above-threshold slots before the update
  std::vector<std::size_t> cell_counts;
  double linf = 0.0;                      // max |x - x_org| after the update
  double min_pixel = 0.0;
  double max_pixel = 0.0;
};

struct AttackTrace {
  std::vector<StepRecord> steps;
  std::vector<std::size_t> clean_counts;  // one entry per model
  std::vector<std::size_t> final_counts;
};

struct AttackResult {
  ImageTensor adversarial;
  AttackTrace trace;
};

AttackResult overload_attack(const ModelWeights& w, const ImageTensor& x_org, const AttackConfig& cfg);

/// Per step the input gradient is the mean over models (average) or the gradient of
/// model step % M (round_robin). Counts and losses are summed across models.
/// A single-model ensemble follows overload_attack exactly.
AttackResult ensemble_attack(std::span<const ModelWeights> models, const ImageTensor& x_org,
                             const AttackConfig& cfg, EnsembleMode mode);

}  // namespace overload
