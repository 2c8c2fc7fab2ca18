#pragma once

#include <cstddef>
#include <vector>

#include "disco/labels.hpp"
#include "disco/tensor.hpp"

namespace disco {

/// Weights and gating for the auxiliary discriminability terms.
///
/// The KL term uses the natural logarithm. By default it is KL(H^S || H^Y),
/// the feature histogram being the first argument; `kl_reverse` swaps them.
struct LossConfig {
  double lambda1 = 0.5;
  double lambda2 = 0.5;
  // First epoch (0-based) at which the auxiliary terms enter the objective.
  int gate_epoch = 10;
  double epsilon = 1e-8;
  bool kl_reverse = false;

  // Throws ConfigError on negative weights, negative gate or epsilon <= 0.
  void validate() const;
  bool gated_in(int epoch) const { return epoch >= gate_epoch; }
};

struct NormalizedLabels {
  // m x n, column j is the one-hot column divided by the count of class j.
  Tensor matrix;
  // Classes with no sample in the batch; their column is all zero.
  std::vector<std::size_t> absent;
};

NormalizedLabels normalize_labels(const LabelMatrix& y);

// S = M^T * Ybar, c x n. Entry (i, j) is the mean of channel i over the
// samples of class j.
Tensor class_mean_activations(const Tensor& pooled, const Tensor& ybar,
                              Tape* tape = nullptr);

// Sbar_ij = S_ij / (sum_k S_ik + epsilon). All-zero rows stay all-zero.
// Throws ContractError on a negative entry.
Tensor row_normalize(const Tensor& s, double epsilon, Tape* tape = nullptr);

// (1/c) * sum_i (1 - sum_j Sbar_ij^2)
Tensor gini_loss(const Tensor& sbar, Tape* tape = nullptr);

// H^S_i = sum_j Sbar_ji / (sum_k sum_j Sbar_jk + epsilon), length n.
// Throws DegenerateInputError when Sbar is all zero.
Tensor feature_histogram(const Tensor& sbar, double epsilon,
                         Tape* tape = nullptr);

// Empirical class frequencies of the batch, length n; sums to exactly 1.
Tensor class_histogram(const LabelMatrix& y);

// sum_i p_i * ln((p_i + eps) / (q_i + eps)). With reverse=false p = H^S and
// q = H^Y; with reverse=true the roles swap. Only `hs` is differentiated.
Tensor kl_loss(const Tensor& hs, const Tensor& hy, double epsilon,
               bool reverse = false, Tape* tape = nullptr);

struct DiscoTerms {
  Tensor gini;
  Tensor kl;
  Tensor pooled;           // M after clamping at zero, m x c
  Tensor score;            // S, c x n
  Tensor normalized_score; // Sbar, c x n
  Tensor feature_hist;     // H^S
  Tensor class_hist;       // H^Y
};

/// Gini and KL terms for an activation batch (m x c x h x w) and its labels.
///
/// Pipeline: global average pool, clamp at zero, class means against the
/// column-normalized labels, row normalization, then the Gini impurity and
/// the KL divergence between the feature and class histograms. Both outputs
/// carry gradients back to `activations` when recorded on a tape.
DiscoTerms disco_loss(const Tensor& activations, const LabelMatrix& y,
                      const LossConfig& cfg, Tape* tape = nullptr);

// L_star alone before the gate epoch, L_star + l1*L_gini + l2*L_kl after.
Tensor total_loss(const Tensor& l_star, const Tensor& l_gini,
                  const Tensor& l_kl, const LossConfig& cfg, int epoch,
                  Tape* tape = nullptr);

}  // namespace disco
