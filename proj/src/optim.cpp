#include "disco/optim.hpp"

#include <algorithm>
#include <cmath>
#include <limits>

#include "disco/errors.hpp"

namespace disco {

std::string to_string(OptimizerKind kind) {
  switch (kind) {
    case OptimizerKind::kSgdMomentum:
      return "sgd_momentum";
    case OptimizerKind::kAdam:
      return "adam";
    case OptimizerKind::kAdaMax:
      return "adamax";
  }
  return "unknown";
}

OptimizerKind parse_optimizer_kind(const std::string& name) {
  if (name == "sgd_momentum" || name == "sgd") return OptimizerKind::kSgdMomentum;
  if (name == "adam") return OptimizerKind::kAdam;
  if (name == "adamax") return OptimizerKind::kAdaMax;
  throw ConfigError("unknown optimizer '" + name + "'");
}

void OptimizerConfig::validate() const {
  if (!(lr > 0.0)) throw ConfigError("optimizer: lr must be > 0");
  if (!(momentum >= 0.0 && momentum < 1.0)) throw ConfigError("optimizer: momentum must be in [0,1)");
  if (!(weight_decay >= 0.0)) throw ConfigError("optimizer: weight_decay must be >= 0");
  if (!(beta1 >= 0.0 && beta1 < 1.0) || !(beta2 >= 0.0 && beta2 < 1.0)) {
    throw ConfigError("optimizer: betas must be in [0,1)");
  }
  if (!(eps > 0.0)) throw ConfigError("optimizer: eps must be > 0");
}

void optimizer_step(std::span<double> params, std::span<const double> grads,
                    SlotState& state, const OptimizerConfig& cfg, double lr,
                    std::size_t step) {
  if (grads.size() != params.size()) {
    throw DimensionError("optimizer_step: gradient size does not match parameters");
  }
  const std::size_t n = params.size();
  if (state.first.size() != n) state.first.assign(n, 0.0);
  if (cfg.kind != OptimizerKind::kSgdMomentum && state.second.size() != n) {
    state.second.assign(n, 0.0);
  }
  const double t = static_cast<double>(step);
  switch (cfg.kind) {
    case OptimizerKind::kSgdMomentum:
      for (std::size_t i = 0; i < n; ++i) {
        const double g = grads[i] + cfg.weight_decay * params[i];
        state.first[i] = cfg.momentum * state.first[i] + g;
        params[i] -= lr * state.first[i];
      }
      break;
    case OptimizerKind::kAdam: {
      const double c1 = 1.0 - std::pow(cfg.beta1, t);
      const double c2 = 1.0 - std::pow(cfg.beta2, t);
      for (std::size_t i = 0; i < n; ++i) {
        const double g = grads[i] + cfg.weight_decay * params[i];
        state.first[i] = cfg.beta1 * state.first[i] + (1.0 - cfg.beta1) * g;
        state.second[i] = cfg.beta2 * state.second[i] + (1.0 - cfg.beta2) * g * g;
        const double m_hat = state.first[i] / c1;
        const double v_hat = state.second[i] / c2;
        params[i] -= lr * m_hat / (std::sqrt(v_hat) + cfg.eps);
      }
      break;
    }
    case OptimizerKind::kAdaMax: {
      const double c1 = 1.0 - std::pow(cfg.beta1, t);
      for (std::size_t i = 0; i < n; ++i) {
        const double g = grads[i] + cfg.weight_decay * params[i];
        state.first[i] = cfg.beta1 * state.first[i] + (1.0 - cfg.beta1) * g;
        state.second[i] = std::max(cfg.beta2 * state.second[i], std::abs(g));
        params[i] -= (lr / c1) * state.first[i] / (state.second[i] + cfg.eps);
      }
      break;
    }
  }
}

Optimizer::Optimizer(std::vector<Tensor> params, OptimizerConfig cfg)
    : params_(std::move(params)), cfg_(cfg), slots_(params_.size()), lr_(cfg.lr) {
  cfg_.validate();
}

void Optimizer::zero_grad() {
  for (auto& p : params_) p.zero_grad();
}

void Optimizer::step() {
  ++steps_;
  for (std::size_t i = 0; i < params_.size(); ++i) {
    auto& p = params_[i];
    if (p.has_grad()) {
      optimizer_step(p.data(), p.grad(), slots_[i], cfg_, lr_, steps_);
    } else {
      const std::vector<double> zeros(p.numel(), 0.0);
      optimizer_step(p.data(), zeros, slots_[i], cfg_, lr_, steps_);
    }
  }
}

std::string to_string(ScheduleKind kind) {
  switch (kind) {
    case ScheduleKind::kConstant:
      return "constant";
    case ScheduleKind::kPlateau:
      return "plateau";
    case ScheduleKind::kStep:
      return "step";
  }
  return "unknown";
}

ScheduleKind parse_schedule_kind(const std::string& name) {
  if (name == "constant") return ScheduleKind::kConstant;
  if (name == "plateau") return ScheduleKind::kPlateau;
  if (name == "step") return ScheduleKind::kStep;
  throw ConfigError("unknown schedule '" + name + "'");
}

void ScheduleConfig::validate() const {
  if (kind == ScheduleKind::kConstant) return;
  if (!(factor > 0.0)) throw ConfigError("schedule: factor must be > 0");
  if (kind == ScheduleKind::kPlateau) {
    if (patience < 1) throw ConfigError("schedule: patience must be >= 1");
    if (!(threshold > 0.0)) throw ConfigError("schedule: threshold must be > 0");
  }
  if (kind == ScheduleKind::kStep) {
    for (int m : milestones)
      if (m < 1) throw ConfigError("schedule: milestones must be >= 1");
    if (!std::is_sorted(milestones.begin(), milestones.end())) {
      throw ConfigError("schedule: milestones must be increasing");
    }
  }
}

LrSchedule::LrSchedule(ScheduleConfig cfg, double base_lr)
    : cfg_(std::move(cfg)),
      base_lr_(base_lr),
      lr_(base_lr),
      best_(-std::numeric_limits<double>::infinity()) {
  cfg_.validate();
}

double LrSchedule::step_lr_for_epoch(int epoch) const {
  double lr = base_lr_;
  for (int m : cfg_.milestones)
    if (epoch >= m) lr *= cfg_.factor;
  return lr;
}

double LrSchedule::update(int epoch, double metric) {
  switch (cfg_.kind) {
    case ScheduleKind::kConstant:
      break;
    case ScheduleKind::kStep:
      lr_ = step_lr_for_epoch(epoch + 1);
      break;
    case ScheduleKind::kPlateau:
      if (metric > best_ * (1.0 + cfg_.threshold) || best_ == -std::numeric_limits<double>::infinity()) {
        best_ = metric;
        bad_epochs_ = 0;
      } else {
        ++bad_epochs_;
      }
      if (bad_epochs_ > cfg_.patience) {
        lr_ *= cfg_.factor;
        bad_epochs_ = 0;
      }
      break;
  }
  return lr_;
}

}  // namespace disco
