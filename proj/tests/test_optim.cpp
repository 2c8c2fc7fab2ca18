#include <cmath>

#include "disco/errors.hpp"
#include "disco/optim.hpp"
#include "doctest.h"

using namespace disco;

TEST_CASE("vanilla SGD step") {
  std::vector<double> p{1.0, -2.0, 0.5}, g{0.5, 1.0, -4.0};
  SlotState state;
  const OptimizerConfig cfg{.kind = OptimizerKind::kSgdMomentum, .lr = 0.1, .momentum = 0.0};
  optimizer_step(p, g, state, cfg, cfg.lr, 1);
  CHECK(p[0] == doctest::Approx(0.95).epsilon(1e-15));
  CHECK(p[1] == doctest::Approx(-2.1).epsilon(1e-15));
  CHECK(p[2] == doctest::Approx(0.9).epsilon(1e-15));
}

TEST_CASE("weight decay is added to the gradient") {
  std::vector<double> p{2.0}, g{0.0};
  SlotState state;
  const OptimizerConfig cfg{.kind = OptimizerKind::kSgdMomentum, .lr = 0.1, .momentum = 0.0, .weight_decay = 0.5};
  optimizer_step(p, g, state, cfg, cfg.lr, 1);
  CHECK(p[0] == doctest::Approx(2.0 - 0.1 * 0.5 * 2.0));
}

TEST_CASE("momentum velocity decays by the momentum factor") {
  std::vector<double> p{0.0}, g{1.0};
  SlotState state;
  const OptimizerConfig cfg{.kind = OptimizerKind::kSgdMomentum, .lr = 0.01, .momentum = 0.9};
  std::size_t step = 0;
  for (; step < 5; ++step) optimizer_step(p, g, state, cfg, cfg.lr, step + 1);
  g[0] = 0.0;
  double prev_v = state.first[0], prev_p = p[0];
  for (int k = 0; k < 10; ++k, ++step) {
    optimizer_step(p, g, state, cfg, cfg.lr, step + 1);
    CHECK(state.first[0] == doctest::Approx(0.9 * prev_v).epsilon(1e-14));
    CHECK(prev_p - p[0] == doctest::Approx(cfg.lr * state.first[0]).epsilon(1e-12));
    prev_v = state.first[0];
    prev_p = p[0];
  }
}

TEST_CASE("Adam and AdaMax steps approach lr under a constant gradient") {
  for (auto kind : {OptimizerKind::kAdam, OptimizerKind::kAdaMax}) {
    CAPTURE(to_string(kind));
    std::vector<double> p{0.0, 0.0}, g{0.3, -7.0};
    SlotState state;
    const OptimizerConfig cfg{.kind = kind, .lr = 1e-3};
    std::vector<double> before = p;
    // Bias correction makes even the first step ~lr.
    optimizer_step(p, g, state, cfg, cfg.lr, 1);
    CHECK(std::abs(p[0] - before[0]) == doctest::Approx(1e-3).epsilon(1e-6));
    for (std::size_t s = 2; s <= 2000; ++s) {
      before = p;
      optimizer_step(p, g, state, cfg, cfg.lr, s);
    }
    CHECK(before[0] - p[0] == doctest::Approx(1e-3).epsilon(1e-6));
    CHECK(p[1] - before[1] == doctest::Approx(1e-3).epsilon(1e-6));
  }
}

TEST_CASE("optimizer over tensors") {
  Tensor a({2}, std::vector<double>{1.0, 1.0});
  Tensor b({1}, 5.0);
  a.set_requires_grad(true);
  b.set_requires_grad(true);
  Optimizer opt({a, b}, {.kind = OptimizerKind::kSgdMomentum, .lr = 0.5, .momentum = 0.0});
  opt.zero_grad();
  a.grad()[0] = 1.0;
  opt.step();
  CHECK(a.data()[0] == 0.5);
  CHECK(a.data()[1] == 1.0);
  CHECK(b.data()[0] == 5.0);
  CHECK(opt.steps() == 1);
  opt.set_learning_rate(0.25);
  CHECK(opt.learning_rate() == 0.25);
}

TEST_CASE("plateau schedule") {
  const ScheduleConfig cfg{.kind = ScheduleKind::kPlateau, .factor = 0.5, .patience = 10, .threshold = 1e-2};
  SUBCASE("strictly improving metric keeps the rate") {
    LrSchedule s(cfg, 0.1);
    double metric = 0.1;
    for (int e = 0; e < 50; ++e, metric *= 1.05) CHECK(s.update(e, metric) == 0.1);
  }
  SUBCASE("flat metric reduces at epoch 11 after the best") {
    LrSchedule s(cfg, 0.1);
    int first_reduction = -1;
    for (int e = 0; e < 40 && first_reduction < 0; ++e)
      if (s.update(e, 0.5) < 0.1) first_reduction = e;
    CHECK(first_reduction == 11);
    CHECK(s.lr() == 0.05);
  }
  SUBCASE("improvement below the threshold does not count") {
    LrSchedule s(cfg, 0.1);
    int first_reduction = -1;
    for (int e = 0; e < 40 && first_reduction < 0; ++e)
      if (s.update(e, 0.5 + 1e-4 * e) < 0.1) first_reduction = e;
    CHECK(first_reduction == 11);
  }
}

TEST_CASE("step schedule") {
  const ScheduleConfig cfg{.kind = ScheduleKind::kStep, .factor = 0.2, .milestones = {60, 120, 160, 200}};
  LrSchedule s(cfg, 0.1);
  CHECK(s.step_lr_for_epoch(0) == 0.1);
  CHECK(s.step_lr_for_epoch(59) == 0.1);
  CHECK(s.step_lr_for_epoch(60) == doctest::Approx(0.02).epsilon(1e-15));
  CHECK(s.step_lr_for_epoch(120) == doctest::Approx(0.004).epsilon(1e-15));
  double lr = 0.1;
  for (int e = 0; e < 60; ++e) lr = s.update(e, 0.0);
  CHECK(lr == doctest::Approx(0.02).epsilon(1e-15));
}

TEST_CASE("constant schedule and validation") {
  LrSchedule s({.kind = ScheduleKind::kConstant}, 0.3);
  for (int e = 0; e < 5; ++e) CHECK(s.update(e, 0.0) == 0.3);
  CHECK_THROWS_AS((ScheduleConfig{.factor = 0.0}.validate()), ConfigError);
  CHECK_THROWS_AS((ScheduleConfig{.patience = -1}.validate()), ConfigError);
  CHECK_THROWS_AS((OptimizerConfig{.lr = 0.0}.validate()), ConfigError);
  CHECK_THROWS_AS(parse_optimizer_kind("rmsprop"), ConfigError);
  CHECK(parse_schedule_kind("step") == ScheduleKind::kStep);
}
