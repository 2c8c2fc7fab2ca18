#pragma once

// Scalar-loop reference for the Gini/KL pipeline. Written directly from the
// definitions with plain nested loops over std::vector; it shares no code
// with the tensor implementation it is compared against.

#include <algorithm>
#include <cmath>
#include <cstddef>
#include <random>
#include <vector>

namespace disco::reference {

struct Terms {
  double gini = 0.0;
  double kl = 0.0;
  std::vector<std::vector<double>> s;     // c x n
  std::vector<std::vector<double>> sbar;  // c x n
  std::vector<double> hs;
  std::vector<double> hy;
};

// a: m*c*h*w values, row-major; labels in [0, n).
inline Terms pipeline(const std::vector<double>& a, std::size_t m, std::size_t c,
                      std::size_t hw, const std::vector<int>& labels,
                      std::size_t n, double eps) {
  Terms t;
  std::vector<std::vector<double>> pooled(m, std::vector<double>(c, 0.0));
  for (std::size_t i = 0; i < m; ++i)
    for (std::size_t j = 0; j < c; ++j) {
      double acc = 0.0;
      for (std::size_t k = 0; k < hw; ++k) acc += a[(i * c + j) * hw + k];
      pooled[i][j] = std::max(acc / static_cast<double>(hw), 0.0);
    }

  std::vector<double> count(n, 0.0);
  for (int l : labels) count[static_cast<std::size_t>(l)] += 1.0;

  // Mean pooled activation of each channel over the samples of each class.
  t.s.assign(c, std::vector<double>(n, 0.0));
  for (std::size_t ch = 0; ch < c; ++ch)
    for (std::size_t cls = 0; cls < n; ++cls) {
      if (count[cls] == 0.0) continue;
      double acc = 0.0;
      for (std::size_t i = 0; i < m; ++i)
        if (static_cast<std::size_t>(labels[i]) == cls) acc += pooled[i][ch];
      t.s[ch][cls] = acc / count[cls];
    }

  t.sbar = t.s;
  for (std::size_t ch = 0; ch < c; ++ch) {
    double row = 0.0;
    for (std::size_t cls = 0; cls < n; ++cls) row += t.s[ch][cls];
    for (std::size_t cls = 0; cls < n; ++cls) t.sbar[ch][cls] = t.s[ch][cls] / (row + eps);
  }

  for (std::size_t ch = 0; ch < c; ++ch) {
    double sq = 0.0;
    for (std::size_t cls = 0; cls < n; ++cls) sq += t.sbar[ch][cls] * t.sbar[ch][cls];
    t.gini += 1.0 - sq;
  }
  t.gini /= static_cast<double>(c);

  double total = 0.0;
  t.hs.assign(n, 0.0);
  for (std::size_t cls = 0; cls < n; ++cls)
    for (std::size_t ch = 0; ch < c; ++ch) t.hs[cls] += t.sbar[ch][cls];
  for (double v : t.hs) total += v;
  for (double& v : t.hs) v /= (total + eps);

  t.hy.assign(n, 0.0);
  for (std::size_t cls = 0; cls < n; ++cls) t.hy[cls] = count[cls] / static_cast<double>(m);

  for (std::size_t cls = 0; cls < n; ++cls)
    t.kl += t.hs[cls] * std::log((t.hs[cls] + eps) / (t.hy[cls] + eps));
  return t;
}

inline std::vector<double> uniform_values(std::size_t count, double lo, double hi,
                                          std::mt19937_64& rng) {
  std::uniform_real_distribution<double> dist(lo, hi);
  std::vector<double> v(count);
  for (double& x : v) x = dist(rng);
  return v;
}

}  // namespace disco::reference
