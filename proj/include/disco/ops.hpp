#pragma once

#include <cstddef>
#include <span>
#include <string_view>
#include <vector>

#include "disco/labels.hpp"
#include "disco/tensor.hpp"

namespace disco {

// Every op below computes its forward result eagerly. When `tape` is given
// and an input requires gradients, the op's backward rule is recorded and
// the result is marked as requiring gradients. Forward values never depend
// on whether recording happens.

Tensor matmul(const Tensor& a, const Tensor& b, Tape* tape = nullptr);
Tensor transpose(const Tensor& a, Tape* tape = nullptr);
Tensor add(const Tensor& a, const Tensor& b, Tape* tape = nullptr);
// Elementwise product of equal-shape tensors.
Tensor mul(const Tensor& a, const Tensor& b, Tape* tape = nullptr);
Tensor scale(const Tensor& a, double alpha, Tape* tape = nullptr);
// x: m x n, bias: n. Adds bias to every row.
Tensor add_bias(const Tensor& x, const Tensor& bias, Tape* tape = nullptr);
Tensor relu(const Tensor& x, Tape* tape = nullptr);
Tensor sum(const Tensor& x, Tape* tape = nullptr);
Tensor reshape(const Tensor& x, Shape shape, Tape* tape = nullptr);

// m x c x h x w -> m x c, mean over each h x w map.
Tensor global_avg_pool(const Tensor& a, Tape* tape = nullptr);
// m x c x h x w -> m x (c*cells*cells): mean over a cells x cells grid of
// equal regions. h and w must be divisible by cells.
Tensor grid_avg_pool(const Tensor& a, std::size_t cells, Tape* tape = nullptr);

struct Conv2dOptions {
  std::size_t stride = 1;
  std::size_t padding = 0;
};

// Cross-correlation with zero padding. input: m x cin x h x w,
// kernel: cout x cin x k x k.
Tensor conv2d(const Tensor& input, const Tensor& kernel,
              Conv2dOptions opts = {}, Tape* tape = nullptr);

struct BatchNormState {
  std::vector<double> running_mean;
  std::vector<double> running_var;
  // Weight kept on the running value at each update.
  double momentum = 0.9;
  double eps = 1e-5;

  explicit BatchNormState(std::size_t channels = 0)
      : running_mean(channels, 0.0), running_var(channels, 1.0) {}
};

// Per-channel batch normalization of m x c x h x w. In training mode the
// batch statistics are used and the running statistics updated; otherwise
// the running statistics are used and left unchanged.
Tensor batch_norm_2d(const Tensor& x, const Tensor& gamma, const Tensor& beta,
                     BatchNormState& state, bool training,
                     Tape* tape = nullptr);

// Mean over the batch of -log softmax(logits)[label], log-sum-exp stabilised.
Tensor softmax_cross_entropy(const Tensor& logits, const LabelMatrix& y,
                             Tape* tape = nullptr);

// Row-wise argmax of an m x n matrix; ties resolve to the lowest index.
std::vector<int> argmax_rows(const Tensor& x);

// Throws NumericalError naming `op` if any value is NaN or infinite.
void ensure_finite(const Tensor& t, std::string_view op);

namespace blas {
// c[p x r] += a[p x q] * b[q x r]
void gemm_nn(std::size_t p, std::size_t q, std::size_t r, const double* a,
             const double* b, double* c);
// c[q x r] += a[p x q]^T * b[p x r]
void gemm_tn(std::size_t p, std::size_t q, std::size_t r, const double* a,
             const double* b, double* c);
// c[p x q] += a[p x r] * b[q x r]^T
void gemm_nt(std::size_t p, std::size_t q, std::size_t r, const double* a,
             const double* b, double* c);
}  // namespace blas

}  // namespace disco
