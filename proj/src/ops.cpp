#include "disco/ops.hpp"

#include <algorithm>
#include <cmath>
#include <string>

#include "disco/errors.hpp"

namespace disco {

namespace blas {

void gemm_nn(std::size_t p, std::size_t q, std::size_t r, const double* a,
             const double* b, double* c) {
  for (std::size_t i = 0; i < p; ++i) {
    double* ci = c + i * r;
    for (std::size_t k = 0; k < q; ++k) {
      const double aik = a[i * q + k];
      if (aik == 0.0) continue;
      const double* bk = b + k * r;
      for (std::size_t j = 0; j < r; ++j) ci[j] += aik * bk[j];
    }
  }
}

void gemm_tn(std::size_t p, std::size_t q, std::size_t r, const double* a,
             const double* b, double* c) {
  for (std::size_t i = 0; i < p; ++i) {
    const double* bi = b + i * r;
    for (std::size_t k = 0; k < q; ++k) {
      const double aik = a[i * q + k];
      if (aik == 0.0) continue;
      double* ck = c + k * r;
      for (std::size_t j = 0; j < r; ++j) ck[j] += aik * bi[j];
    }
  }
}

void gemm_nt(std::size_t p, std::size_t q, std::size_t r, const double* a,
             const double* b, double* c) {
  for (std::size_t i = 0; i < p; ++i) {
    const double* ai = a + i * r;
    for (std::size_t k = 0; k < q; ++k) {
      const double* bk = b + k * r;
      double acc = 0.0;
      for (std::size_t j = 0; j < r; ++j) acc += ai[j] * bk[j];
      c[i * q + k] += acc;
    }
  }
}

}  // namespace blas

namespace {

void require_rank(const Tensor& t, std::size_t rank, const char* op) {
  if (t.rank() != rank) {
    throw DimensionError(std::string(op) + ": expected rank " +
                         std::to_string(rank) + ", got shape " +
                         shape_str(t.shape()));
  }
}

// Marks `out` as tracked and records `rule` when any input is tracked.
template <typename Rule>
void maybe_record(Tape* tape, Tensor& out,
                  std::initializer_list<const Tensor*> inputs, Rule&& rule) {
  if (!tracking(tape, inputs)) return;
  out.set_requires_grad(true);
  tape->record(std::forward<Rule>(rule));
}

}  // namespace

void ensure_finite(const Tensor& t, std::string_view op) {
  for (double v : t.data()) {
    if (!std::isfinite(v)) {
      throw NumericalError("non-finite value produced by " + std::string(op));
    }
  }
}

Tensor matmul(const Tensor& a, const Tensor& b, Tape* tape) {
  require_rank(a, 2, "matmul");
  require_rank(b, 2, "matmul");
  const std::size_t p = a.dim(0), q = a.dim(1), r = b.dim(1);
  if (b.dim(0) != q) {
    throw DimensionError("matmul: inner dimensions disagree: " +
                         shape_str(a.shape()) + " * " + shape_str(b.shape()));
  }
  Tensor out({p, r});
  blas::gemm_nn(p, q, r, a.data().data(), b.data().data(), out.data().data());
  ensure_finite(out, "matmul");
  maybe_record(tape, out, {&a, &b}, [a, b, out, p, q, r]() mutable {
    auto go = out.ensure_grad();
    if (a.requires_grad()) {
      // dA = dOut * B^T
      blas::gemm_nt(p, q, r, go.data(), b.data().data(), a.ensure_grad().data());
    }
    if (b.requires_grad()) {
      // dB = A^T * dOut
      blas::gemm_tn(p, q, r, a.data().data(), go.data(), b.ensure_grad().data());
    }
  });
  return out;
}

Tensor transpose(const Tensor& a, Tape* tape) {
  require_rank(a, 2, "transpose");
  const std::size_t p = a.dim(0), q = a.dim(1);
  Tensor out({q, p});
  auto src = a.data();
  auto dst = out.data();
  for (std::size_t i = 0; i < p; ++i)
    for (std::size_t j = 0; j < q; ++j) dst[j * p + i] = src[i * q + j];
  maybe_record(tape, out, {&a}, [a, out, p, q]() mutable {
    auto go = out.ensure_grad();
    auto ga = a.ensure_grad();
    for (std::size_t i = 0; i < p; ++i)
      for (std::size_t j = 0; j < q; ++j) ga[i * q + j] += go[j * p + i];
  });
  return out;
}

Tensor add(const Tensor& a, const Tensor& b, Tape* tape) {
  if (a.shape() != b.shape()) {
    throw DimensionError("add: shapes differ: " + shape_str(a.shape()) +
                         " vs " + shape_str(b.shape()));
  }
  Tensor out(a.shape());
  auto va = a.data(), vb = b.data();
  auto vo = out.data();
  for (std::size_t i = 0; i < vo.size(); ++i) vo[i] = va[i] + vb[i];
  ensure_finite(out, "add");
  maybe_record(tape, out, {&a, &b}, [a, b, out]() mutable {
    auto go = out.ensure_grad();
    for (const Tensor* t : {&a, &b}) {
      if (!t->requires_grad()) continue;
      auto g = t->ensure_grad();
      for (std::size_t i = 0; i < g.size(); ++i) g[i] += go[i];
    }
  });
  return out;
}

Tensor mul(const Tensor& a, const Tensor& b, Tape* tape) {
  if (a.shape() != b.shape()) {
    throw DimensionError("mul: shapes differ: " + shape_str(a.shape()) +
                         " vs " + shape_str(b.shape()));
  }
  Tensor out(a.shape());
  auto va = a.data(), vb = b.data();
  auto vo = out.data();
  for (std::size_t i = 0; i < vo.size(); ++i) vo[i] = va[i] * vb[i];
  ensure_finite(out, "mul");
  maybe_record(tape, out, {&a, &b}, [a, b, out]() {
    auto go = out.ensure_grad();
    auto va = a.data(), vb = b.data();
    if (a.requires_grad()) {
      auto ga = a.ensure_grad();
      for (std::size_t i = 0; i < ga.size(); ++i) ga[i] += go[i] * vb[i];
    }
    if (b.requires_grad()) {
      auto gb = b.ensure_grad();
      for (std::size_t i = 0; i < gb.size(); ++i) gb[i] += go[i] * va[i];
    }
  });
  return out;
}

Tensor scale(const Tensor& a, double alpha, Tape* tape) {
  Tensor out(a.shape());
  auto va = a.data();
  auto vo = out.data();
  for (std::size_t i = 0; i < vo.size(); ++i) vo[i] = alpha * va[i];
  ensure_finite(out, "scale");
  maybe_record(tape, out, {&a}, [a, out, alpha]() mutable {
    auto go = out.ensure_grad();
    auto ga = a.ensure_grad();
    for (std::size_t i = 0; i < ga.size(); ++i) ga[i] += alpha * go[i];
  });
  return out;
}

Tensor add_bias(const Tensor& x, const Tensor& bias, Tape* tape) {
  require_rank(x, 2, "add_bias");
  const std::size_t m = x.dim(0), n = x.dim(1);
  if (bias.numel() != n) {
    throw DimensionError("add_bias: bias length " + std::to_string(bias.numel()) +
                         " does not match " + std::to_string(n) + " columns");
  }
  Tensor out({m, n});
  auto vx = x.data(), vb = bias.data();
  auto vo = out.data();
  for (std::size_t i = 0; i < m; ++i)
    for (std::size_t j = 0; j < n; ++j) vo[i * n + j] = vx[i * n + j] + vb[j];
  ensure_finite(out, "add_bias");
  maybe_record(tape, out, {&x, &bias}, [x, bias, out, m, n]() mutable {
    auto go = out.ensure_grad();
    if (x.requires_grad()) {
      auto gx = x.ensure_grad();
      for (std::size_t i = 0; i < m * n; ++i) gx[i] += go[i];
    }
    if (bias.requires_grad()) {
      auto gb = bias.ensure_grad();
      for (std::size_t i = 0; i < m; ++i)
        for (std::size_t j = 0; j < n; ++j) gb[j] += go[i * n + j];
    }
  });
  return out;
}

Tensor relu(const Tensor& x, Tape* tape) {
  Tensor out(x.shape());
  auto vx = x.data();
  auto vo = out.data();
  for (std::size_t i = 0; i < vo.size(); ++i) vo[i] = (vx[i] > 0.0 || std::isnan(vx[i])) ? vx[i] : 0.0;
  ensure_finite(out, "relu");
  maybe_record(tape, out, {&x}, [x, out]() mutable {
    auto go = out.ensure_grad();
    auto gx = x.ensure_grad();
    auto vx = x.data();
    for (std::size_t i = 0; i < gx.size(); ++i)
      if (vx[i] > 0.0) gx[i] += go[i];
  });
  return out;
}

Tensor sum(const Tensor& x, Tape* tape) {
  double acc = 0.0;
  for (double v : x.data()) acc += v;
  Tensor out = Tensor::scalar(acc);
  ensure_finite(out, "sum");
  maybe_record(tape, out, {&x}, [x, out]() mutable {
    const double g = out.ensure_grad()[0];
    for (double& gx : x.ensure_grad()) gx += g;
  });
  return out;
}

Tensor reshape(const Tensor& x, Shape shape, Tape* tape) {
  if (shape_numel(shape) != x.numel()) {
    throw DimensionError("reshape: " + shape_str(x.shape()) + " -> " +
                         shape_str(shape) + " changes element count");
  }
  Tensor out(std::move(shape), std::vector<double>(x.data().begin(), x.data().end()));
  maybe_record(tape, out, {&x}, [x, out]() mutable {
    auto go = out.ensure_grad();
    auto gx = x.ensure_grad();
    for (std::size_t i = 0; i < gx.size(); ++i) gx[i] += go[i];
  });
  return out;
}

Tensor global_avg_pool(const Tensor& a, Tape* tape) {
  require_rank(a, 4, "global_avg_pool");
  const std::size_t m = a.dim(0), c = a.dim(1), hw = a.dim(2) * a.dim(3);
  if (hw == 0) throw DimensionError("global_avg_pool: empty activation maps");
  Tensor out({m, c});
  auto va = a.data();
  auto vo = out.data();
  const double inv = 1.0 / static_cast<double>(hw);
  for (std::size_t i = 0; i < m * c; ++i) {
    double acc = 0.0;
    const double* src = va.data() + i * hw;
    for (std::size_t k = 0; k < hw; ++k) acc += src[k];
    vo[i] = acc * inv;
  }
  ensure_finite(out, "global_avg_pool");
  maybe_record(tape, out, {&a}, [a, out, m, c, hw, inv]() mutable {
    auto go = out.ensure_grad();
    auto ga = a.ensure_grad();
    for (std::size_t i = 0; i < m * c; ++i) {
      const double g = go[i] * inv;
      double* dst = ga.data() + i * hw;
      for (std::size_t k = 0; k < hw; ++k) dst[k] += g;
    }
  });
  return out;
}

Tensor grid_avg_pool(const Tensor& a, std::size_t cells, Tape* tape) {
  require_rank(a, 4, "grid_avg_pool");
  const std::size_t m = a.dim(0), c = a.dim(1), h = a.dim(2), w = a.dim(3);
  if (cells == 0 || h % cells != 0 || w % cells != 0) {
    throw DimensionError("grid_avg_pool: " + std::to_string(h) + "x" +
                         std::to_string(w) + " not divisible into " +
                         std::to_string(cells) + " cells per side");
  }
  const std::size_t ch = h / cells, cw = w / cells;
  const double inv = 1.0 / static_cast<double>(ch * cw);
  const std::size_t features = c * cells * cells;
  Tensor out({m, features});
  auto va = a.data();
  auto vo = out.data();
  for (std::size_t s = 0; s < m; ++s)
    for (std::size_t ci = 0; ci < c; ++ci)
      for (std::size_t gy = 0; gy < cells; ++gy)
        for (std::size_t gx = 0; gx < cells; ++gx) {
          double acc = 0.0;
          for (std::size_t y = gy * ch; y < (gy + 1) * ch; ++y)
            for (std::size_t x = gx * cw; x < (gx + 1) * cw; ++x)
              acc += va[((s * c + ci) * h + y) * w + x];
          vo[s * features + (ci * cells + gy) * cells + gx] = acc * inv;
        }
  ensure_finite(out, "grid_avg_pool");
  maybe_record(tape, out, {&a}, [=]() mutable {
    auto go = out.ensure_grad();
    auto ga = a.ensure_grad();
    for (std::size_t s = 0; s < m; ++s)
      for (std::size_t ci = 0; ci < c; ++ci)
        for (std::size_t gy = 0; gy < cells; ++gy)
          for (std::size_t gx = 0; gx < cells; ++gx) {
            const double g = go[s * features + (ci * cells + gy) * cells + gx] * inv;
            for (std::size_t y = gy * ch; y < (gy + 1) * ch; ++y)
              for (std::size_t x = gx * cw; x < (gx + 1) * cw; ++x)
                ga[((s * c + ci) * h + y) * w + x] += g;
          }
  });
  return out;
}

namespace {

struct ConvGeometry {
  std::size_t m, cin, h, w, cout, k, stride, pad, oh, ow;
  std::size_t patch() const { return cin * k * k; }
  std::size_t out_hw() const { return oh * ow; }
};

// cols: (cin*k*k) x (oh*ow) patch matrix for one sample.
void im2col(const ConvGeometry& g, const double* img, double* cols) {
  for (std::size_t ci = 0; ci < g.cin; ++ci)
    for (std::size_t ky = 0; ky < g.k; ++ky)
      for (std::size_t kx = 0; kx < g.k; ++kx) {
        double* row = cols + ((ci * g.k + ky) * g.k + kx) * g.out_hw();
        for (std::size_t oy = 0; oy < g.oh; ++oy) {
          const long iy = static_cast<long>(oy * g.stride + ky) - static_cast<long>(g.pad);
          for (std::size_t ox = 0; ox < g.ow; ++ox) {
            const long ix = static_cast<long>(ox * g.stride + kx) - static_cast<long>(g.pad);
            const bool inside = iy >= 0 && ix >= 0 && iy < static_cast<long>(g.h) &&
                                ix < static_cast<long>(g.w);
            row[oy * g.ow + ox] =
                inside ? img[(ci * g.h + static_cast<std::size_t>(iy)) * g.w +
                             static_cast<std::size_t>(ix)]
                       : 0.0;
          }
        }
      }
}

void col2im_add(const ConvGeometry& g, const double* cols, double* img) {
  for (std::size_t ci = 0; ci < g.cin; ++ci)
    for (std::size_t ky = 0; ky < g.k; ++ky)
      for (std::size_t kx = 0; kx < g.k; ++kx) {
        const double* row = cols + ((ci * g.k + ky) * g.k + kx) * g.out_hw();
        for (std::size_t oy = 0; oy < g.oh; ++oy) {
          const long iy = static_cast<long>(oy * g.stride + ky) - static_cast<long>(g.pad);
          if (iy < 0 || iy >= static_cast<long>(g.h)) continue;
          for (std::size_t ox = 0; ox < g.ow; ++ox) {
            const long ix = static_cast<long>(ox * g.stride + kx) - static_cast<long>(g.pad);
            if (ix < 0 || ix >= static_cast<long>(g.w)) continue;
            img[(ci * g.h + static_cast<std::size_t>(iy)) * g.w +
                static_cast<std::size_t>(ix)] += row[oy * g.ow + ox];
          }
        }
      }
}

}  // namespace

Tensor conv2d(const Tensor& input, const Tensor& kernel, Conv2dOptions opts,
              Tape* tape) {
  require_rank(input, 4, "conv2d");
  require_rank(kernel, 4, "conv2d");
  if (opts.stride == 0) throw DimensionError("conv2d: stride must be >= 1");
  ConvGeometry g{};
  g.m = input.dim(0);
  g.cin = input.dim(1);
  g.h = input.dim(2);
  g.w = input.dim(3);
  g.cout = kernel.dim(0);
  g.k = kernel.dim(2);
  g.stride = opts.stride;
  g.pad = opts.padding;
  if (kernel.dim(1) != g.cin || kernel.dim(3) != g.k) {
    throw DimensionError("conv2d: kernel " + shape_str(kernel.shape()) +
                         " incompatible with input " + shape_str(input.shape()));
  }
  if (g.k == 0 || g.k > g.h + 2 * g.pad || g.k > g.w + 2 * g.pad) {
    throw DimensionError("conv2d: kernel size " + std::to_string(g.k) +
                         " exceeds padded input " + shape_str(input.shape()));
  }
  g.oh = (g.h + 2 * g.pad - g.k) / g.stride + 1;
  g.ow = (g.w + 2 * g.pad - g.k) / g.stride + 1;

  Tensor out({g.m, g.cout, g.oh, g.ow});
  std::vector<double> cols(g.patch() * g.out_hw());
  const std::size_t in_stride = g.cin * g.h * g.w;
  const std::size_t out_stride = g.cout * g.out_hw();
  for (std::size_t s = 0; s < g.m; ++s) {
    im2col(g, input.data().data() + s * in_stride, cols.data());
    blas::gemm_nn(g.cout, g.patch(), g.out_hw(), kernel.data().data(),
                  cols.data(), out.data().data() + s * out_stride);
  }
  ensure_finite(out, "conv2d");

  maybe_record(tape, out, {&input, &kernel}, [input, kernel, out, g]() mutable {
    auto go = out.ensure_grad();
    const std::size_t in_stride = g.cin * g.h * g.w;
    const std::size_t out_stride = g.cout * g.out_hw();
    std::vector<double> cols(g.patch() * g.out_hw());
    for (std::size_t s = 0; s < g.m; ++s) {
      const double* gos = go.data() + s * out_stride;
      if (kernel.requires_grad()) {
        im2col(g, input.data().data() + s * in_stride, cols.data());
        blas::gemm_nt(g.cout, g.patch(), g.out_hw(), gos, cols.data(),
                      kernel.ensure_grad().data());
      }
      if (input.requires_grad()) {
        std::fill(cols.begin(), cols.end(), 0.0);
        blas::gemm_tn(g.cout, g.patch(), g.out_hw(), kernel.data().data(), gos,
                      cols.data());
        col2im_add(g, cols.data(), input.ensure_grad().data() + s * in_stride);
      }
    }
  });
  return out;
}

Tensor batch_norm_2d(const Tensor& x, const Tensor& gamma, const Tensor& beta,
                     BatchNormState& state, bool training, Tape* tape) {
  require_rank(x, 4, "batch_norm_2d");
  const std::size_t m = x.dim(0), c = x.dim(1), hw = x.dim(2) * x.dim(3);
  if (gamma.numel() != c || beta.numel() != c || state.running_mean.size() != c ||
      state.running_var.size() != c) {
    throw DimensionError("batch_norm_2d: parameters do not match " +
                         std::to_string(c) + " channels");
  }
  const std::size_t count = m * hw;
  if (count == 0) throw DimensionError("batch_norm_2d: empty batch");
  auto vx = x.data();
  std::vector<double> mean(c), inv_std(c);
  if (training) {
    for (std::size_t ch = 0; ch < c; ++ch) {
      double acc = 0.0;
      for (std::size_t s = 0; s < m; ++s) {
        const double* src = vx.data() + (s * c + ch) * hw;
        for (std::size_t k = 0; k < hw; ++k) acc += src[k];
      }
      const double mu = acc / static_cast<double>(count);
      double sq = 0.0;
      for (std::size_t s = 0; s < m; ++s) {
        const double* src = vx.data() + (s * c + ch) * hw;
        for (std::size_t k = 0; k < hw; ++k) sq += (src[k] - mu) * (src[k] - mu);
      }
      const double var = sq / static_cast<double>(count);
      mean[ch] = mu;
      inv_std[ch] = 1.0 / std::sqrt(var + state.eps);
      const double unbiased =
          count > 1 ? sq / static_cast<double>(count - 1) : var;
      state.running_mean[ch] =
          state.momentum * state.running_mean[ch] + (1.0 - state.momentum) * mu;
      state.running_var[ch] =
          state.momentum * state.running_var[ch] + (1.0 - state.momentum) * unbiased;
    }
  } else {
    for (std::size_t ch = 0; ch < c; ++ch) {
      mean[ch] = state.running_mean[ch];
      inv_std[ch] = 1.0 / std::sqrt(state.running_var[ch] + state.eps);
    }
  }

  Tensor out(x.shape());
  Tensor xhat(x.shape());
  auto vo = out.data();
  auto vh = xhat.data();
  auto vg = gamma.data(), vb = beta.data();
  for (std::size_t s = 0; s < m; ++s)
    for (std::size_t ch = 0; ch < c; ++ch) {
      const std::size_t base = (s * c + ch) * hw;
      for (std::size_t k = 0; k < hw; ++k) {
        const double h = (vx[base + k] - mean[ch]) * inv_std[ch];
        vh[base + k] = h;
        vo[base + k] = vg[ch] * h + vb[ch];
      }
    }
  ensure_finite(out, "batch_norm_2d");

  maybe_record(tape, out, {&x, &gamma, &beta},
               [x, gamma, beta, out, xhat, inv_std, m, c, hw, count,
                training]() mutable {
    auto go = out.ensure_grad();
    auto vh = xhat.data();
    auto vg = gamma.data();
    std::vector<double> sum_dy(c, 0.0), sum_dy_xhat(c, 0.0);
    for (std::size_t s = 0; s < m; ++s)
      for (std::size_t ch = 0; ch < c; ++ch) {
        const std::size_t base = (s * c + ch) * hw;
        for (std::size_t k = 0; k < hw; ++k) {
          sum_dy[ch] += go[base + k];
          sum_dy_xhat[ch] += go[base + k] * vh[base + k];
        }
      }
    if (gamma.requires_grad()) {
      auto gg = gamma.ensure_grad();
      for (std::size_t ch = 0; ch < c; ++ch) gg[ch] += sum_dy_xhat[ch];
    }
    if (beta.requires_grad()) {
      auto gb = beta.ensure_grad();
      for (std::size_t ch = 0; ch < c; ++ch) gb[ch] += sum_dy[ch];
    }
    if (!x.requires_grad()) return;
    auto gx = x.ensure_grad();
    const double n = static_cast<double>(count);
    for (std::size_t s = 0; s < m; ++s)
      for (std::size_t ch = 0; ch < c; ++ch) {
        const std::size_t base = (s * c + ch) * hw;
        const double gi = vg[ch] * inv_std[ch];
        for (std::size_t k = 0; k < hw; ++k) {
          if (training) {
            gx[base + k] += gi * (go[base + k] - sum_dy[ch] / n -
                                  vh[base + k] * sum_dy_xhat[ch] / n);
          } else {
            gx[base + k] += gi * go[base + k];
          }
        }
      }
  });
  return out;
}

Tensor softmax_cross_entropy(const Tensor& logits, const LabelMatrix& y,
                             Tape* tape) {
  require_rank(logits, 2, "softmax_cross_entropy");
  const std::size_t m = logits.dim(0), n = logits.dim(1);
  if (y.samples() != m || y.classes() != n) {
    throw DimensionError("softmax_cross_entropy: logits " +
                         shape_str(logits.shape()) + " vs labels " +
                         std::to_string(y.samples()) + "x" +
                         std::to_string(y.classes()));
  }
  if (m == 0) throw DegenerateInputError("softmax_cross_entropy: empty batch");
  auto vz = logits.data();
  Tensor probs({m, n});
  auto vp = probs.data();
  double total = 0.0;
  for (std::size_t i = 0; i < m; ++i) {
    const double* z = vz.data() + i * n;
    const double zmax = *std::max_element(z, z + n);
    double se = 0.0;
    for (std::size_t j = 0; j < n; ++j) {
      vp[i * n + j] = std::exp(z[j] - zmax);
      se += vp[i * n + j];
    }
    for (std::size_t j = 0; j < n; ++j) vp[i * n + j] /= se;
    const double lse = zmax + std::log(se);
    total += lse - z[static_cast<std::size_t>(y.id(i))];
  }
  Tensor out = Tensor::scalar(total / static_cast<double>(m));
  ensure_finite(out, "softmax_cross_entropy");
  maybe_record(tape, out, {&logits}, [logits, probs, out, y, m, n]() mutable {
    const double g = out.ensure_grad()[0] / static_cast<double>(m);
    auto gz = logits.ensure_grad();
    auto vp = probs.data();
    for (std::size_t i = 0; i < m; ++i) {
      const auto label = static_cast<std::size_t>(y.id(i));
      for (std::size_t j = 0; j < n; ++j) {
        const double target = j == label ? 1.0 : 0.0;
        gz[i * n + j] += g * (vp[i * n + j] - target);
      }
    }
  });
  return out;
}

std::vector<int> argmax_rows(const Tensor& x) {
  require_rank(x, 2, "argmax_rows");
  const std::size_t m = x.dim(0), n = x.dim(1);
  std::vector<int> out(m, 0);
  auto v = x.data();
  for (std::size_t i = 0; i < m; ++i) {
    std::size_t best = 0;
    for (std::size_t j = 1; j < n; ++j)
      if (v[i * n + j] > v[i * n + best]) best = j;
    out[i] = static_cast<int>(best);
  }
  return out;
}

}  // namespace disco
