#include "disco/gradcheck.hpp"

#include <algorithm>
#include <cmath>
#include <vector>

namespace disco {

GradCheckResult finite_diff_check(const ScalarFn& f, std::span<Tensor> inputs,
                                  double h) {
  for (auto& t : inputs) {
    t.set_requires_grad(true);
    t.zero_grad();
  }
  Tape tape;
  Tensor loss = f(&tape);
  tape.backward(loss);
  std::vector<std::vector<double>> analytic;
  analytic.reserve(inputs.size());
  for (auto& t : inputs) {
    auto g = t.grad();
    analytic.emplace_back(g.begin(), g.end());
  }

  GradCheckResult result;
  for (std::size_t ti = 0; ti < inputs.size(); ++ti) {
    auto values = inputs[ti].data();
    for (std::size_t i = 0; i < values.size(); ++i) {
      const double saved = values[i];
      values[i] = saved + h;
      const double plus = f(nullptr).item();
      values[i] = saved - h;
      const double minus = f(nullptr).item();
      values[i] = saved;
      const double numeric = (plus - minus) / (2.0 * h);
      const double a = analytic[ti][i];
      const double denom = std::max({std::abs(a), std::abs(numeric), 1e-12});
      const double rel = std::abs(a - numeric) / denom;
      if (rel > result.max_rel_error) {
        result = {rel, ti, i, a, numeric};
      }
    }
  }
  return result;
}

double finite_diff_check(const std::function<Tensor(const Tensor&, Tape*)>& f,
                         Tensor x, double h) {
  Tensor inputs[] = {x};
  return finite_diff_check([&](Tape* tape) { return f(x, tape); },
                           std::span<Tensor>(inputs), h)
      .max_rel_error;
}

}  // namespace disco
