#pragma once

#include <functional>
#include <span>

#include "disco/tensor.hpp"

namespace disco {

// A scalar-valued function of tensors captured by the closure. It must record
// onto `tape` when one is given and be deterministic.
using ScalarFn = std::function<Tensor(Tape* tape)>;

struct GradCheckResult {
  double max_rel_error = 0.0;
  std::size_t worst_tensor = 0;
  std::size_t worst_index = 0;
  double analytic = 0.0;
  double numeric = 0.0;
};

/// Compares reverse-mode gradients of `f` against central differences
/// (f(x + h e_i) - f(x - h e_i)) / 2h for every element of every tensor in
/// `inputs`. The relative error per element uses the denominator
/// max(|analytic|, |numeric|, 1e-12). Inputs are restored afterwards and have
/// requires_grad set on return.
GradCheckResult finite_diff_check(const ScalarFn& f, std::span<Tensor> inputs,
                                  double h);

// Single-input convenience form.
double finite_diff_check(const std::function<Tensor(const Tensor&, Tape*)>& f,
                         Tensor x, double h);

}  // namespace disco
