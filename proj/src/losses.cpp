#include "disco/losses.hpp"

#include <cmath>
#include <string>

#include "disco/errors.hpp"
#include "disco/ops.hpp"

namespace disco {

void LossConfig::validate() const {
  if (!(lambda1 >= 0.0) || !(lambda2 >= 0.0)) {
    throw ConfigError("loss weights must be non-negative");
  }
  if (gate_epoch < 0) throw ConfigError("gate_epoch must be >= 0");
  if (!(epsilon > 0.0)) throw ConfigError("epsilon must be > 0");
}

NormalizedLabels normalize_labels(const LabelMatrix& y) {
  const std::size_t m = y.samples(), n = y.classes();
  const auto counts = y.class_counts();
  NormalizedLabels out{Tensor({m, n}), {}};
  auto v = out.matrix.data();
  for (std::size_t i = 0; i < m; ++i) {
    const auto j = static_cast<std::size_t>(y.id(i));
    v[i * n + j] = 1.0 / static_cast<double>(counts[j]);
  }
  for (std::size_t j = 0; j < n; ++j)
    if (counts[j] == 0) out.absent.push_back(j);
  return out;
}

Tensor class_mean_activations(const Tensor& pooled, const Tensor& ybar,
                              Tape* tape) {
  if (pooled.rank() != 2 || ybar.rank() != 2 || pooled.dim(0) != ybar.dim(0)) {
    throw DimensionError("class_mean_activations: pooled " +
                         shape_str(pooled.shape()) + " vs labels " +
                         shape_str(ybar.shape()));
  }
  return matmul(transpose(pooled, tape), ybar, tape);
}

Tensor row_normalize(const Tensor& s, double epsilon, Tape* tape) {
  if (s.rank() != 2) {
    throw DimensionError("row_normalize: expected a matrix, got " +
                         shape_str(s.shape()));
  }
  const std::size_t c = s.dim(0), n = s.dim(1);
  auto vs = s.data();
  std::vector<double> denom(c);
  Tensor out({c, n});
  auto vo = out.data();
  for (std::size_t i = 0; i < c; ++i) {
    double acc = 0.0;
    for (std::size_t j = 0; j < n; ++j) {
      const double e = vs[i * n + j];
      if (e < 0.0) {
        throw ContractError("row_normalize: negative score at (" +
                            std::to_string(i) + "," + std::to_string(j) + ")");
      }
      acc += e;
    }
    denom[i] = acc + epsilon;
    for (std::size_t j = 0; j < n; ++j) vo[i * n + j] = vs[i * n + j] / denom[i];
  }
  ensure_finite(out, "row_normalize");
  if (tracking(tape, {&s})) {
    out.set_requires_grad(true);
    tape->record([s, out, denom, c, n]() mutable {
      auto go = out.ensure_grad();
      auto gs = s.ensure_grad();
      auto vo = out.data();
      for (std::size_t i = 0; i < c; ++i) {
        double dot = 0.0;
        for (std::size_t j = 0; j < n; ++j) dot += go[i * n + j] * vo[i * n + j];
        for (std::size_t j = 0; j < n; ++j)
          gs[i * n + j] += (go[i * n + j] - dot) / denom[i];
      }
    });
  }
  return out;
}

Tensor gini_loss(const Tensor& sbar, Tape* tape) {
  if (sbar.rank() != 2 || sbar.dim(0) == 0) {
    throw DimensionError("gini_loss: expected a non-empty c x n matrix, got " +
                         shape_str(sbar.shape()));
  }
  const std::size_t c = sbar.dim(0), n = sbar.dim(1);
  auto v = sbar.data();
  double acc = 0.0;
  for (std::size_t i = 0; i < c; ++i) {
    double sq = 0.0;
    for (std::size_t j = 0; j < n; ++j) sq += v[i * n + j] * v[i * n + j];
    acc += 1.0 - sq;
  }
  Tensor out = Tensor::scalar(acc / static_cast<double>(c));
  ensure_finite(out, "gini_loss");
  if (tracking(tape, {&sbar})) {
    out.set_requires_grad(true);
    tape->record([sbar, out, c]() mutable {
      const double g = out.ensure_grad()[0];
      auto gs = sbar.ensure_grad();
      auto v = sbar.data();
      const double k = -2.0 * g / static_cast<double>(c);
      for (std::size_t i = 0; i < gs.size(); ++i) gs[i] += k * v[i];
    });
  }
  return out;
}

Tensor feature_histogram(const Tensor& sbar, double epsilon, Tape* tape) {
  if (sbar.rank() != 2) {
    throw DimensionError("feature_histogram: expected a matrix, got " +
                         shape_str(sbar.shape()));
  }
  const std::size_t c = sbar.dim(0), n = sbar.dim(1);
  auto v = sbar.data();
  Tensor out({n});
  auto vo = out.data();
  double total = 0.0;
  for (std::size_t j = 0; j < c; ++j)
    for (std::size_t i = 0; i < n; ++i) vo[i] += v[j * n + i];
  for (std::size_t i = 0; i < n; ++i) total += vo[i];
  if (total == 0.0) {
    throw DegenerateInputError("feature_histogram: normalized scores are all zero");
  }
  const double denom = total + epsilon;
  for (std::size_t i = 0; i < n; ++i) vo[i] /= denom;
  ensure_finite(out, "feature_histogram");
  if (tracking(tape, {&sbar})) {
    out.set_requires_grad(true);
    tape->record([sbar, out, denom, c, n]() mutable {
      auto go = out.ensure_grad();
      auto gs = sbar.ensure_grad();
      auto vo = out.data();
      double dot = 0.0;
      for (std::size_t i = 0; i < n; ++i) dot += go[i] * vo[i];
      for (std::size_t j = 0; j < c; ++j)
        for (std::size_t i = 0; i < n; ++i)
          gs[j * n + i] += (go[i] - dot) / denom;
    });
  }
  return out;
}

Tensor class_histogram(const LabelMatrix& y) {
  if (y.samples() == 0) throw DegenerateInputError("class_histogram: empty batch");
  const auto counts = y.class_counts();
  Tensor out({counts.size()});
  auto v = out.data();
  const double m = static_cast<double>(y.samples());
  for (std::size_t i = 0; i < counts.size(); ++i)
    v[i] = static_cast<double>(counts[i]) / m;
  return out;
}

Tensor kl_loss(const Tensor& hs, const Tensor& hy, double epsilon, bool reverse,
               Tape* tape) {
  if (hs.numel() != hy.numel()) {
    throw DimensionError("kl_loss: histogram lengths differ (" +
                         std::to_string(hs.numel()) + " vs " +
                         std::to_string(hy.numel()) + ")");
  }
  const std::size_t n = hs.numel();
  auto p = hs.data(), q = hy.data();
  double acc = 0.0;
  for (std::size_t i = 0; i < n; ++i) {
    if (reverse) {
      acc += q[i] * std::log((q[i] + epsilon) / (p[i] + epsilon));
    } else {
      acc += p[i] * std::log((p[i] + epsilon) / (q[i] + epsilon));
    }
  }
  Tensor out = Tensor::scalar(acc);
  ensure_finite(out, "kl_loss");
  if (tracking(tape, {&hs})) {
    out.set_requires_grad(true);
    tape->record([hs, hy, out, epsilon, reverse, n]() mutable {
      const double g = out.ensure_grad()[0];
      auto gp = hs.ensure_grad();
      auto p = hs.data(), q = hy.data();
      for (std::size_t i = 0; i < n; ++i) {
        const double pe = p[i] + epsilon;
        if (reverse) {
          gp[i] += g * (-q[i] / pe);
        } else {
          gp[i] += g * (std::log(pe / (q[i] + epsilon)) + p[i] / pe);
        }
      }
    });
  }
  return out;
}

DiscoTerms disco_loss(const Tensor& activations, const LabelMatrix& y,
                      const LossConfig& cfg, Tape* tape) {
  if (activations.rank() != 4) {
    throw DimensionError("disco_loss: activations must be m x c x h x w, got " +
                         shape_str(activations.shape()));
  }
  if (activations.dim(0) != y.samples()) {
    throw DimensionError("disco_loss: " + std::to_string(activations.dim(0)) +
                         " activation rows vs " + std::to_string(y.samples()) +
                         " labels");
  }
  DiscoTerms t;
  t.pooled = relu(global_avg_pool(activations, tape), tape);
  const auto ybar = normalize_labels(y);
  t.score = class_mean_activations(t.pooled, ybar.matrix, tape);
  t.normalized_score = row_normalize(t.score, cfg.epsilon, tape);
  t.gini = gini_loss(t.normalized_score, tape);
  t.feature_hist = feature_histogram(t.normalized_score, cfg.epsilon, tape);
  t.class_hist = class_histogram(y);
  t.kl = kl_loss(t.feature_hist, t.class_hist, cfg.epsilon, cfg.kl_reverse, tape);
  return t;
}

Tensor total_loss(const Tensor& l_star, const Tensor& l_gini,
                  const Tensor& l_kl, const LossConfig& cfg, int epoch,
                  Tape* tape) {
  if (!cfg.gated_in(epoch)) return l_star;
  Tensor with_gini = add(l_star, scale(l_gini, cfg.lambda1, tape), tape);
  return add(with_gini, scale(l_kl, cfg.lambda2, tape), tape);
}

}  // namespace disco
