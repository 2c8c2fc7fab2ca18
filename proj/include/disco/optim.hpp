#pragma once

#include <cstddef>
#include <span>
#include <string>
#include <vector>

#include "disco/tensor.hpp"

namespace disco {

enum class OptimizerKind { kSgdMomentum, kAdam, kAdaMax };

std::string to_string(OptimizerKind kind);
OptimizerKind parse_optimizer_kind(const std::string& name);

struct OptimizerConfig {
  OptimizerKind kind = OptimizerKind::kAdam;
  double lr = 1e-3;
  double momentum = 0.9;
  // L2 penalty added to the gradient of every parameter, independent of the
  // learning-rate schedule.
  double weight_decay = 0.0;
  double beta1 = 0.9;
  double beta2 = 0.999;
  double eps = 1e-8;

  void validate() const;
};

// Per-tensor optimizer memory: velocity (SGD) or first moment (Adam/AdaMax),
// plus the second moment (Adam) or infinity norm (AdaMax).
struct SlotState {
  std::vector<double> first;
  std::vector<double> second;
};

// One update of a single tensor. `step` is the 1-based update count used for
// bias correction.
void optimizer_step(std::span<double> params, std::span<const double> grads,
                    SlotState& state, const OptimizerConfig& cfg, double lr,
                    std::size_t step);

class Optimizer {
 public:
  Optimizer(std::vector<Tensor> params, OptimizerConfig cfg);

  void zero_grad();
  // Tensors without a gradient buffer are treated as having zero gradient.
  void step();

  double learning_rate() const { return lr_; }
  void set_learning_rate(double lr) { lr_ = lr; }
  std::size_t steps() const { return steps_; }
  const std::vector<SlotState>& slots() const { return slots_; }

 private:
  std::vector<Tensor> params_;
  OptimizerConfig cfg_;
  std::vector<SlotState> slots_;
  double lr_;
  std::size_t steps_ = 0;
};

enum class ScheduleKind { kConstant, kPlateau, kStep };

std::string to_string(ScheduleKind kind);
ScheduleKind parse_schedule_kind(const std::string& name);

struct ScheduleConfig {
  ScheduleKind kind = ScheduleKind::kPlateau;
  double factor = 0.5;
  // Plateau: epochs without improvement tolerated before a reduction.
  int patience = 10;
  // Plateau: relative improvement over the best metric needed to count.
  double threshold = 1e-2;
  // Step: 0-based epochs from which the next reduction applies.
  std::vector<int> milestones;

  void validate() const;
};

/// Learning-rate schedule driven once per epoch.
///
/// Plateau mode maximizes the metric (validation accuracy): an epoch counts
/// as an improvement when metric > best * (1 + threshold), and the rate is
/// multiplied by `factor` once more than `patience` epochs in a row fail to
/// improve. Step mode multiplies by `factor` at each milestone.
class LrSchedule {
 public:
  LrSchedule(ScheduleConfig cfg, double base_lr);

  // Called after `epoch` finishes; returns the rate for epoch + 1.
  double update(int epoch, double metric);
  double lr() const { return lr_; }
  // Step mode: rate in effect during `epoch`.
  double step_lr_for_epoch(int epoch) const;

 private:
  ScheduleConfig cfg_;
  double base_lr_;
  double lr_;
  double best_;
  int bad_epochs_ = 0;
};

}  // namespace disco
