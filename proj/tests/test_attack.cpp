#include <gtest/gtest.h>

#include <cmath>
#include <numeric>

#include "overload/attack.hpp"
#include "overload/errors.hpp"
#include "overload/rng.hpp"

using namespace overload;

namespace {

constexpr LossKind kAllLosses[] = {LossKind::log, LossKind::tanh, LossKind::half_square, LossKind::neg_log_one_minus};

DetectorTensor tensor(std::size_t rows, std::size_t classes) {
  DetectorTensor t;
  t.grid_h = 1;
  t.grid_w = rows;
  t.anchors = 1;
  t.cols = 5 + classes;
  t.data.assign(rows * t.cols, 0.0);
  return t;
}

AttackConfig quick(std::size_t steps) {
  AttackConfig c;
  c.steps = steps;
  return c;
}

// Plain PGD on the confidence loss, written directly against the detector API.
ImageTensor plain_pgd(const ModelWeights& w, const ImageTensor& x0, const AttackConfig& cfg) {
  ImageTensor x = x0;
  for (std::size_t s = 0; s < cfg.steps; ++s) {
    const auto pass = forward_with_state(w, x);
    const auto g = backward_input(w, pass, loss(pass.output, cfg).grad);
    for (std::size_t i = 0; i < x.size(); ++i) {
      const double d = g.data[i] > 0 ? 1.0 : (g.data[i] < 0 ? -1.0 : 0.0);
      double v = x.data[i] + cfg.eta * 1.0 * d;
      v = std::clamp(v, x0.data[i] - cfg.epsilon, x0.data[i] + cfg.epsilon);
      v = std::clamp(v, 0.0, 1.0);
      while (std::abs(v - x0.data[i]) > cfg.epsilon) v = std::nextafter(v, x0.data[i]);
      x.data[i] = v;
    }
  }
  return x;
}

}  // namespace

TEST(FConf, Examples) {
  EXPECT_DOUBLE_EQ(f_conf(0.9, 0.6, 0.25), 0.9);
  EXPECT_DOUBLE_EQ(f_conf(0.2, 0.1, 0.25), 0.2 * 0.1);
  EXPECT_DOUBLE_EQ(f_conf(1.0, 1.0, 0.99), 1.0);
  EXPECT_DOUBLE_EQ(f_conf(0.5, 0.5, 0.25), 0.25);
}

TEST(Loss, Examples) {
  auto t = tensor(3, 2);
  std::fill(t.data.begin(), t.data.end(), 40.0);
  AttackConfig cfg;
  EXPECT_EQ(loss(t, cfg).value, 0.0);

  auto one = tensor(1, 1);
  one.data = {0, 0, 0, 0, 0.0, 40.0};  // c = 0.5, p = 1 -> f_conf = 0.5
  cfg.loss = LossKind::half_square;
  EXPECT_NEAR(loss(one, cfg).value, 0.125, 1e-15);
}

TEST(Loss, GradientMatchesFiniteDifferences) {
  for (std::uint64_t seed = 1; seed <= 5; ++seed) {
    SplitMix64 rng(seed);
    auto t = tensor(4, 4);
    for (double& v : t.data) v = rng.uniform(-4, 4);
    for (auto kind : kAllLosses) {
      AttackConfig cfg;
      cfg.loss = kind;
      const auto base = loss(t, cfg);
      for (std::size_t r = 0; r < t.rows(); ++r) {
        for (std::size_t j = 4; j < t.cols; ++j) {
          // skip entries whose perturbation could cross the f_conf switch
          const auto row = t.row(r);
          bool near_switch = false;
          for (std::size_t k = 5; k < t.cols; ++k) {
            near_switch = near_switch || std::abs(sigmoid(row[4]) * sigmoid(row[k]) - cfg.t_conf) < 1e-4;
          }
          if (near_switch) continue;
          const double h = 1e-6;
          auto tp = t, tm = t;
          tp.row(r)[j] += h;
          tm.row(r)[j] -= h;
          const double fd = (loss(tp, cfg).value - loss(tm, cfg).value) / (2 * h);
          const double an = base.grad.row(r)[j];
          EXPECT_LT(std::abs(fd - an) / std::max({std::abs(fd), std::abs(an), 1e-3}), 1e-6)
              << to_string(kind) << " seed " << seed << " r " << r << " j " << j;
        }
        for (std::size_t j = 0; j < 4; ++j) EXPECT_EQ(base.grad.row(r)[j], 0.0);
      }
    }
  }
}

TEST(LossShape, MonotoneAndDerivativeShape) {
  for (auto kind : kAllLosses) {
    double prev = -INFINITY, prev_d = loss_shape_derivative(kind, 1e-3);
    for (int i = 1; i < 1000; ++i) {
      const double x = i / 1000.0;
      const double v = loss_shape(kind, x);
      EXPECT_GE(v, prev) << to_string(kind);
      prev = v;
      const double d = loss_shape_derivative(kind, x);
      if (kind == LossKind::log || kind == LossKind::tanh) {
        EXPECT_LE(d, prev_d + 1e-15) << to_string(kind);
      } else {
        EXPECT_GE(d, prev_d - 1e-15) << to_string(kind);
      }
      prev_d = d;
    }
  }
  EXPECT_TRUE(std::isfinite(loss_shape(LossKind::log, 0.0)));
  EXPECT_TRUE(std::isfinite(loss_shape(LossKind::neg_log_one_minus, 1.0)));
}

TEST(UpdateWeights, Examples) {
  AttackConfig cfg;
  SpatialGrid g(1);
  const std::size_t cap[] = {3};
  const std::size_t empty[] = {0};
  auto next = update_weights(g, empty, cap, cfg);
  EXPECT_DOUBLE_EQ(next.weights[0], 1.0);

  const std::size_t full[] = {3};
  EXPECT_DOUBLE_EQ(update_weights(g, full, cap, cfg).weights[0], cfg.w_min);

  SpatialGrid s(1);
  for (std::size_t i = 0; i < 2 * cfg.stagnation_window; ++i) s = update_weights(s, empty, cap, cfg);
  EXPECT_EQ(s.stagnation[0], 10u);
  EXPECT_DOUBLE_EQ(s.weights[0], cfg.stagnation_decay * cfg.stagnation_decay);

  const std::size_t one[] = {1};
  s = update_weights(s, one, cap, cfg);
  EXPECT_EQ(s.stagnation[0], 0u);
  EXPECT_NEAR(s.weights[0], 2.0 / 3.0, 1e-15);

  const std::size_t zero_cap[] = {0};
  EXPECT_DOUBLE_EQ(update_weights(SpatialGrid(1), one, zero_cap, cfg).weights[0], cfg.w_min);
  EXPECT_THROW(update_weights(SpatialGrid(2), one, cap, cfg), ShapeError);
}

TEST(UpdateWeights, AlwaysWithinBounds) {
  SplitMix64 rng(12);
  AttackConfig cfg;
  cfg.w_min = 0.1;
  SpatialGrid g(4);
  std::vector<std::size_t> cap(16, 5), counts(16);
  for (int step = 0; step < 200; ++step) {
    for (auto& c : counts) c = rng.below(6);
    g = update_weights(g, counts, cap, cfg);
    for (double w : g.weights) {
      EXPECT_GE(w, cfg.w_min);
      EXPECT_LE(w, 1.0);
    }
  }
}

TEST(PgdStep, Examples) {
  ImageTensor x(1, 1, 1, 0.5), grad(1, 1, 1, 1.0);
  const ImageTensor org = x;
  AttackConfig cfg;
  cfg.eta = 0.01;
  cfg.epsilon = 0.03;
  SpatialGrid g(1);
  auto y = pgd_step(x, org, grad, g, cfg);
  EXPECT_NEAR(y.data[0], 0.51, 1e-12);
  for (int i = 0; i < 4; ++i) y = pgd_step(y, org, grad, g, cfg);
  EXPECT_NEAR(y.data[0], 0.53, 1e-12);
  EXPECT_LE(std::abs(y.data[0] - org.data[0]), cfg.epsilon);

  const ImageTensor zero(1, 1, 1, 0.0);
  EXPECT_EQ(pgd_step(x, org, zero, g, cfg), x);
  EXPECT_THROW(pgd_step(x, org, ImageTensor(2, 1, 1), g, cfg), ShapeError);
}

TEST(PgdStep, WeightsScaleByCell) {
  ImageTensor x(2, 2, 1, 0.5), grad(2, 2, 1, -1.0);
  AttackConfig cfg;
  cfg.eta = 0.01;
  SpatialGrid g(2);
  g.weights = {1.0, 0.5, 0.25, 0.0};
  const auto y = pgd_step(x, x, grad, g, cfg);
  EXPECT_NEAR(y.at(0, 0, 0), 0.49, 1e-12);
  EXPECT_NEAR(y.at(0, 1, 0), 0.495, 1e-12);
  EXPECT_NEAR(y.at(1, 0, 0), 0.4975, 1e-12);
  EXPECT_EQ(y.at(1, 1, 0), 0.5);
}

TEST(PgdStep, ProjectionHoldsLiterally) {
  SplitMix64 rng(3);
  AttackConfig cfg;
  cfg.step_mode = StepMode::raw;
  cfg.eta = 1.0;
  ImageTensor x(8, 8, 3), org(8, 8, 3), grad(8, 8, 3);
  for (std::size_t i = 0; i < x.size(); ++i) {
    org.data[i] = x.data[i] = rng.uniform();
    grad.data[i] = rng.uniform(-5, 5);
  }
  for (int s = 0; s < 10; ++s) {
    x = pgd_step(x, org, grad, SpatialGrid(4), cfg);
    for (std::size_t i = 0; i < x.size(); ++i) {
      EXPECT_LE(std::abs(x.data[i] - org.data[i]), cfg.epsilon);
      EXPECT_GE(x.data[i], 0.0);
      EXPECT_LE(x.data[i], 1.0);
    }
  }
}

TEST(CellAssignment, CountsAndCapacity) {
  const auto w = init_weights(1);
  const auto y = forward(w, seeded_noise_image(2));
  const auto cap = cell_capacity(y, 8);
  for (auto c : cap) EXPECT_EQ(c, 3u);
  const auto cap3 = cell_capacity(y, 3);
  EXPECT_EQ(std::accumulate(cap3.begin(), cap3.end(), std::size_t{0}), 192u);
  for (double t : {0.0, 0.1, 0.25}) {
    const auto counts = cell_counts(y, 8, t);
    EXPECT_EQ(std::accumulate(counts.begin(), counts.end(), std::size_t{0}), count_above(y, static_cast<float>(t)));
    for (std::size_t i = 0; i < counts.size(); ++i) EXPECT_LE(counts[i], cap[i]);
  }
}

TEST(Attack, NullStepKeepsImage) {
  const auto w = init_weights(1);
  const auto x = seeded_noise_image(5);
  auto cfg = quick(1);
  cfg.eta = 0.0;
  const auto r = overload_attack(w, x, cfg);
  EXPECT_EQ(r.adversarial, x);
  EXPECT_EQ(r.trace.clean_counts, r.trace.final_counts);
  ASSERT_EQ(r.trace.steps.size(), 1u);
}

TEST(Attack, RaisesCountAndRespectsBudget) {
  const auto w = init_weights(1);
  const auto x = seeded_noise_image(9);
  const auto cfg = quick(50);
  const auto r = overload_attack(w, x, cfg);
  EXPECT_GT(r.trace.final_counts[0], r.trace.clean_counts[0]);
  EXPECT_EQ(r.trace.steps.size(), 50u);
  for (const auto& s : r.trace.steps) {
    EXPECT_LE(s.linf, cfg.epsilon);
    EXPECT_GE(s.min_pixel, 0.0);
    EXPECT_LE(s.max_pixel, 1.0);
  }
  EXPECT_EQ(overload_attack(w, x, cfg).adversarial, r.adversarial);
}

TEST(Attack, WithoutAttentionIsPlainPgd) {
  const auto w = init_weights(3);
  const auto x = seeded_noise_image(4);
  auto cfg = quick(12);
  cfg.spatial_attention = false;
  EXPECT_EQ(overload_attack(w, x, cfg).adversarial, plain_pgd(w, x, cfg));
}

TEST(Ensemble, SingleModelMatchesOverload) {
  const auto w = init_weights(2);
  const auto x = seeded_noise_image(6);
  const auto cfg = quick(15);
  const auto a = overload_attack(w, x, cfg);
  const std::vector<ModelWeights> one{w};
  const auto b = ensemble_attack(one, x, cfg, EnsembleMode::average);
  EXPECT_EQ(a.adversarial, b.adversarial);
  for (std::size_t i = 0; i < a.trace.steps.size(); ++i) {
    EXPECT_EQ(a.trace.steps[i].loss, b.trace.steps[i].loss);
    EXPECT_EQ(a.trace.steps[i].cell_counts, b.trace.steps[i].cell_counts);
  }
}

TEST(Ensemble, ZeroGradientModelsLeaveImage) {
  auto w = init_weights(1);
  for (auto& l : w.layers) std::fill(l.weight.begin(), l.weight.end(), 0.0);
  const std::vector<ModelWeights> two{w, w};
  const auto x = seeded_noise_image(1);
  EXPECT_EQ(ensemble_attack(two, x, quick(3), EnsembleMode::average).adversarial, x);
  EXPECT_THROW(ensemble_attack({}, x, quick(3), EnsembleMode::average), ConfigError);
}

TEST(Ensemble, RoundRobinUsesRotatingModel) {
  const std::vector<ModelWeights> two{init_weights(1), init_weights(2)};
  const auto x = seeded_noise_image(3);
  auto cfg = quick(1);
  cfg.spatial_attention = false;
  const auto rr = ensemble_attack(two, x, cfg, EnsembleMode::round_robin);
  EXPECT_EQ(rr.adversarial, overload_attack(two[0], x, cfg).adversarial);
  cfg.steps = 2;
  const auto rr2 = ensemble_attack(two, x, cfg, EnsembleMode::round_robin);
  auto one = cfg;
  one.steps = 1;
  const auto first = overload_attack(two[0], x, one).adversarial;
  const auto pass = forward_with_state(two[1], first);
  const auto g = backward_input(two[1], pass, loss(pass.output, cfg).grad);
  EXPECT_EQ(rr2.adversarial, pgd_step(first, x, g, SpatialGrid(cfg.grid_m), cfg));
}

TEST(Ensemble, TwoModelsBothIncrease) {
  const std::vector<ModelWeights> two{init_weights(1), init_weights(2)};
  const auto r = ensemble_attack(two, seeded_noise_image(9), quick(50), EnsembleMode::average);
  ASSERT_EQ(r.trace.final_counts.size(), 2u);
  EXPECT_GT(r.trace.final_counts[0], r.trace.clean_counts[0]);
  EXPECT_GT(r.trace.final_counts[1], r.trace.clean_counts[1]);
}

TEST(AttackConfigValidate, Rejects) {
  AttackConfig c;
  c.epsilon = 0.0;
  EXPECT_THROW(c.validate(), ConfigError);
  c = {};
  c.steps = 0;
  EXPECT_THROW(c.validate(), ConfigError);
  c = {};
  c.stagnation_decay = 0.0;
  EXPECT_THROW(c.validate(), ConfigError);
  EXPECT_THROW(parse_loss_kind("square"), ConfigError);
  EXPECT_EQ(parse_loss_kind("neg_log_one_minus"), LossKind::neg_log_one_minus);
}
