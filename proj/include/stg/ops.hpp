// Copyright (c) 2026 the stgnet authors
// SPDX-License-Identifier: Apache-2.0
//
// Differentiable op library. Each op validates shapes, computes the forward
// value, and registers a backward closure that accumulates into parent
// gradients. Elementwise ops support exact-shape operands plus one-element
// (scalar) broadcast; nothing broadcasts implicitly beyond that.

#pragma once

#include <cmath>
#include <cstring>
#include <vector>

#include "stg/tensor.hpp"
#include "stg/thread_pool.hpp"

namespace stg {

namespace detail {

// C (m x n) = op(A) * op(B) [+ C if accumulate], where op is optional
// transpose. A is m x k after op, B is k x n after op. Loop orders keep the
// innermost stride contiguous for each case.
inline void gemm(size_t m, size_t n, size_t k, const double* A, bool ta,
                 const double* B, bool tb, double* C, bool accumulate) {
  if (!accumulate) std::memset(C, 0, sizeof(double) * m * n);
  auto run_rows = [&](size_t r0, size_t r1) {
    if (!ta && !tb) {
      for (size_t i = r0; i < r1; ++i) {
        double* c = C + i * n;
        const double* a = A + i * k;
        for (size_t p = 0; p < k; ++p) {
          const double av = a[p];
          const double* b = B + p * n;
          for (size_t j = 0; j < n; ++j) c[j] += av * b[j];
        }
      }
    } else if (!ta && tb) {
      for (size_t i = r0; i < r1; ++i) {
        double* c = C + i * n;
        const double* a = A + i * k;
        for (size_t j = 0; j < n; ++j) {
          const double* b = B + j * k;
          double acc = 0.0;
          for (size_t p = 0; p < k; ++p) acc += a[p] * b[p];
          c[j] += acc;
        }
      }
    } else if (ta && !tb) {
      // A is stored k x m; stream rows of A and B together.
      for (size_t p = 0; p < k; ++p) {
        const double* a = A + p * m;
        const double* b = B + p * n;
        for (size_t i = r0; i < r1; ++i) {
          const double av = a[i];
          double* c = C + i * n;
          for (size_t j = 0; j < n; ++j) c[j] += av * b[j];
        }
      }
    } else {
      // A stored k x m, B stored n x k.
      for (size_t i = r0; i < r1; ++i) {
        double* c = C + i * n;
        for (size_t j = 0; j < n; ++j) {
          const double* b = B + j * k;
          double acc = 0.0;
          for (size_t p = 0; p < k; ++p) acc += A[p * m + i] * b[p];
          c[j] += acc;
        }
      }
    }
  };
  // The ta&&!tb case writes whole C columns per p-step, so row-partitioned
  // workers would race; run it inline unless rows partition cleanly.
  if (ta && !tb) {
    run_rows(0, m);
  } else {
    parallel_for(m, [&](size_t b, size_t e) { run_rows(b, e); },
                 /*min_per_worker=*/std::max<size_t>(1, 16384 / std::max<size_t>(1, n * k)));
  }
}

inline void check_2d(const Tensor& t, const char* op) {
  STG_CHECK(t.rank() == 2, std::string(op) + ": want rank-2, got " + shape_str(t.shape()));
}
inline void check_3d(const Tensor& t, const char* op) {
  STG_CHECK(t.rank() == 3, std::string(op) + ": want rank-3, got " + shape_str(t.shape()));
}

}  // namespace detail

// ---------------------------------------------------------------------------
// Matrix products

// 2-D matrix product with optional transposes: result = op(a) * op(b).
inline Tensor matmul(const Tensor& a, const Tensor& b, bool trans_a = false,
                     bool trans_b = false) {
  detail::check_2d(a, "matmul");
  detail::check_2d(b, "matmul");
  const size_t m = trans_a ? a.shape()[1] : a.shape()[0];
  const size_t ka = trans_a ? a.shape()[0] : a.shape()[1];
  const size_t kb = trans_b ? b.shape()[1] : b.shape()[0];
  const size_t n = trans_b ? b.shape()[0] : b.shape()[1];
  STG_CHECK(ka == kb, "matmul: inner dims disagree, " + shape_str(a.shape()) +
                          (trans_a ? "^T" : "") + " vs " + shape_str(b.shape()) +
                          (trans_b ? "^T" : ""));
  std::vector<double> out(m * n);
  detail::gemm(m, n, ka, a.data().data(), trans_a, b.data().data(), trans_b,
               out.data(), false);
  Tensor result = Tensor::make_result({m, n}, std::move(out), {a.node(), b.node()});
  if (result.requires_grad()) {
    auto* rn = result.raw();
    auto* an = a.raw();
    auto* bn = b.raw();
    const size_t k = ka;
    result.node()->backward = [rn, an, bn, m, n, k, trans_a, trans_b] {
      const double* g = rn->grad.data();
      if (an->requires_grad) {
        Tensor::ensure_grad(an);
        if (!trans_a)  // dA += dC * op(B)^T
          detail::gemm(m, k, n, g, false, bn->value.data(), !trans_b,
                       an->grad.data(), true);
        else  // dA += op(B) * dC^T
          detail::gemm(k, m, n, bn->value.data(), trans_b, g, true,
                       an->grad.data(), true);
      }
      if (bn->requires_grad) {
        Tensor::ensure_grad(bn);
        if (!trans_b)  // dB += op(A)^T * dC
          detail::gemm(k, n, m, an->value.data(), !trans_a, g, false,
                       bn->grad.data(), true);
        else  // dB += dC^T * op(A)
          detail::gemm(n, k, m, g, true, an->value.data(), trans_a,
                       bn->grad.data(), true);
      }
    };
  }
  return result;
}

// Batched matrix product over matching leading dims: for each slice i,
// result[i] = op(a[i]) * op(b[i]).
inline Tensor bmm(const Tensor& a, const Tensor& b, bool trans_a = false,
                  bool trans_b = false) {
  detail::check_3d(a, "bmm");
  detail::check_3d(b, "bmm");
  const size_t batch = a.shape()[0];
  STG_CHECK(batch == b.shape()[0], "bmm: batch dims disagree");
  const size_t m = trans_a ? a.shape()[2] : a.shape()[1];
  const size_t ka = trans_a ? a.shape()[1] : a.shape()[2];
  const size_t kb = trans_b ? b.shape()[2] : b.shape()[1];
  const size_t n = trans_b ? b.shape()[1] : b.shape()[2];
  STG_CHECK(ka == kb, "bmm: inner dims disagree, " + shape_str(a.shape()) + " vs " +
                          shape_str(b.shape()));
  const size_t sa = a.shape()[1] * a.shape()[2];
  const size_t sb = b.shape()[1] * b.shape()[2];
  const size_t sc = m * n;
  std::vector<double> out(batch * sc);
  const double* ap = a.data().data();
  const double* bp = b.data().data();
  double* cp = out.data();
  parallel_for(batch, [&](size_t i0, size_t i1) {
    for (size_t i = i0; i < i1; ++i)
      detail::gemm(m, n, ka, ap + i * sa, trans_a, bp + i * sb, trans_b,
                   cp + i * sc, false);
  }, std::max<size_t>(1, 16384 / std::max<size_t>(1, sc * ka)));
  Tensor result =
      Tensor::make_result({batch, m, n}, std::move(out), {a.node(), b.node()});
  if (result.requires_grad()) {
    auto* rn = result.raw();
    auto* an = a.raw();
    auto* bn = b.raw();
    const size_t k = ka;
    result.node()->backward = [rn, an, bn, batch, m, n, k, sa, sb, sc, trans_a,
                               trans_b] {
      if (an->requires_grad) Tensor::ensure_grad(an);
      if (bn->requires_grad) Tensor::ensure_grad(bn);
      for (size_t i = 0; i < batch; ++i) {
        const double* g = rn->grad.data() + i * sc;
        const double* av = an->value.data() + i * sa;
        const double* bv = bn->value.data() + i * sb;
        if (an->requires_grad) {
          double* ag = an->grad.data() + i * sa;
          if (!trans_a)
            detail::gemm(m, k, n, g, false, bv, !trans_b, ag, true);
          else
            detail::gemm(k, m, n, bv, trans_b, g, true, ag, true);
        }
        if (bn->requires_grad) {
          double* bg = bn->grad.data() + i * sb;
          if (!trans_b)
            detail::gemm(k, n, m, av, !trans_a, g, false, bg, true);
          else
            detail::gemm(n, k, m, g, true, av, trans_a, bg, true);
        }
      }
    };
  }
  return result;
}

// ---------------------------------------------------------------------------
// Elementwise ops (exact shape or one-element broadcast on either side)

namespace detail {

enum class Broadcast { kNone, kLeftScalar, kRightScalar };

inline Broadcast broadcast_kind(const Tensor& a, const Tensor& b, const char* op) {
  if (a.shape() == b.shape()) return Broadcast::kNone;
  if (a.numel() == 1) return Broadcast::kLeftScalar;
  if (b.numel() == 1) return Broadcast::kRightScalar;
  throw InvariantError(std::string(op) + ": shape mismatch " + shape_str(a.shape()) +
                       " vs " + shape_str(b.shape()));
}

template <typename Fwd, typename Bwd>
Tensor binary_elementwise(const Tensor& a, const Tensor& b, const char* name,
                          Fwd fwd, Bwd bwd) {
  const Broadcast bc = broadcast_kind(a, b, name);
  const Tensor& big = (bc == Broadcast::kLeftScalar) ? b : a;
  const size_t n = big.numel();
  std::vector<double> out(n);
  const auto& av = a.data();
  const auto& bv = b.data();
  for (size_t i = 0; i < n; ++i) {
    const double x = (bc == Broadcast::kLeftScalar) ? av[0] : av[i];
    const double y = (bc == Broadcast::kRightScalar) ? bv[0] : bv[i];
    out[i] = fwd(x, y);
  }
  Tensor result = Tensor::make_result(big.shape(), std::move(out), {a.node(), b.node()});
  if (result.requires_grad()) {
    auto* rn = result.raw();
    auto* an = a.raw();
    auto* bn = b.raw();
    result.node()->backward = [rn, an, bn, bc, n, bwd] {
      const double* g = rn->grad.data();
      if (an->requires_grad) Tensor::ensure_grad(an);
      if (bn->requires_grad) Tensor::ensure_grad(bn);
      for (size_t i = 0; i < n; ++i) {
        const double x = (bc == Broadcast::kLeftScalar) ? an->value[0] : an->value[i];
        const double y = (bc == Broadcast::kRightScalar) ? bn->value[0] : bn->value[i];
        double dx, dy;
        bwd(x, y, g[i], dx, dy);
        if (an->requires_grad) an->grad[(bc == Broadcast::kLeftScalar) ? 0 : i] += dx;
        if (bn->requires_grad) bn->grad[(bc == Broadcast::kRightScalar) ? 0 : i] += dy;
      }
    };
  }
  return result;
}

}  // namespace detail

inline Tensor add(const Tensor& a, const Tensor& b) {
  return detail::binary_elementwise(
      a, b, "add", [](double x, double y) { return x + y; },
      [](double, double, double g, double& dx, double& dy) {
        dx = g;
        dy = g;
      });
}

inline Tensor sub(const Tensor& a, const Tensor& b) {
  return detail::binary_elementwise(
      a, b, "sub", [](double x, double y) { return x - y; },
      [](double, double, double g, double& dx, double& dy) {
        dx = g;
        dy = -g;
      });
}

inline Tensor mul(const Tensor& a, const Tensor& b) {
  return detail::binary_elementwise(
      a, b, "mul", [](double x, double y) { return x * y; },
      [](double x, double y, double g, double& dx, double& dy) {
        dx = g * y;
        dy = g * x;
      });
}

inline Tensor scale(const Tensor& a, double c) {
  const size_t n = a.numel();
  std::vector<double> out(n);
  for (size_t i = 0; i < n; ++i) out[i] = a.data()[i] * c;
  Tensor result = Tensor::make_result(a.shape(), std::move(out), {a.node()});
  if (result.requires_grad()) {
    auto* rn = result.raw();
    auto* an = a.raw();
    result.node()->backward = [rn, an, c, n] {
      Tensor::ensure_grad(an);
      for (size_t i = 0; i < n; ++i) an->grad[i] += c * rn->grad.data()[i];
    };
  }
  return result;
}

namespace detail {
template <typename Fwd, typename Bwd>
Tensor unary_elementwise(const Tensor& a, Fwd fwd, Bwd bwd) {
  const size_t n = a.numel();
  std::vector<double> out(n);
  for (size_t i = 0; i < n; ++i) out[i] = fwd(a.data()[i]);
  Tensor result = Tensor::make_result(a.shape(), std::move(out), {a.node()});
  if (result.requires_grad()) {
    auto* rn = result.raw();
    auto* an = a.raw();
    result.node()->backward = [rn, an, n, bwd] {
      Tensor::ensure_grad(an);
      for (size_t i = 0; i < n; ++i)
        an->grad[i] += rn->grad.data()[i] * bwd(an->value[i], rn->value[i]);
    };
  }
  return result;
}
}  // namespace detail

inline Tensor tanh(const Tensor& a) {
  return detail::unary_elementwise(
      a, [](double x) { return std::tanh(x); },
      [](double, double y) { return 1.0 - y * y; });
}

inline Tensor sigmoid(const Tensor& a) {
  return detail::unary_elementwise(
      a,
      [](double x) {
        if (x >= 0.0) return 1.0 / (1.0 + std::exp(-x));
        const double e = std::exp(x);
        return e / (1.0 + e);
      },
      [](double, double y) { return y * (1.0 - y); });
}

// ---------------------------------------------------------------------------
// Reductions and normalization

// Softmax along `axis` (default: last), max-subtracted for stability.
// Normalized slices are addressed as (outer, j, inner) with stride walking,
// so any axis works; the common last-axis case has inner == 1 and runs on
// contiguous rows.
inline Tensor softmax(const Tensor& a, int axis = -1) {
  STG_CHECK(a.rank() >= 1, "softmax: want rank >= 1");
  const size_t ax = axis < 0 ? a.rank() + static_cast<size_t>(axis)
                             : static_cast<size_t>(axis);
  STG_CHECK(ax < a.rank(), "softmax: axis out of range");
  const Shape& s = a.shape();
  size_t outer = 1, inner = 1;
  const size_t len = s[ax];
  for (size_t i = 0; i < ax; ++i) outer *= s[i];
  for (size_t i = ax + 1; i < s.size(); ++i) inner *= s[i];
  std::vector<double> out(a.numel());
  const double* x = a.data().data();
  for (size_t o = 0; o < outer; ++o)
    for (size_t i = 0; i < inner; ++i) {
      const size_t base = o * len * inner + i;
      double mx = x[base];
      for (size_t j = 1; j < len; ++j) mx = std::max(mx, x[base + j * inner]);
      double sum = 0.0;
      for (size_t j = 0; j < len; ++j) {
        const double e = std::exp(x[base + j * inner] - mx);
        out[base + j * inner] = e;
        sum += e;
      }
      const double inv = 1.0 / sum;
      for (size_t j = 0; j < len; ++j) out[base + j * inner] *= inv;
    }
  Tensor result = Tensor::make_result(a.shape(), std::move(out), {a.node()});
  if (result.requires_grad()) {
    auto* rn = result.raw();
    auto* an = a.raw();
    result.node()->backward = [rn, an, outer, len, inner] {
      Tensor::ensure_grad(an);
      for (size_t o = 0; o < outer; ++o)
        for (size_t i = 0; i < inner; ++i) {
          const size_t base = o * len * inner + i;
          const double* y = rn->value.data();
          const double* g = rn->grad.data();
          double dot = 0.0;
          for (size_t j = 0; j < len; ++j)
            dot += y[base + j * inner] * g[base + j * inner];
          for (size_t j = 0; j < len; ++j)
            an->grad[base + j * inner] +=
                y[base + j * inner] * (g[base + j * inner] - dot);
        }
    };
  }
  return result;
}

// Mean cross-entropy between row logits and integer targets, fused with the
// softmax for numerical stability. Returns a scalar.
inline Tensor cross_entropy(const Tensor& logits, const std::vector<int>& targets) {
  detail::check_2d(logits, "cross_entropy");
  const size_t rows = logits.shape()[0];
  const size_t cols = logits.shape()[1];
  STG_CHECK(targets.size() == rows, "cross_entropy: target count mismatch");
  // probs are kept for the backward pass.
  auto probs = std::make_shared<std::vector<double>>(rows * cols);
  double loss = 0.0;
  const double* x = logits.data().data();
  for (size_t r = 0; r < rows; ++r) {
    const int t = targets[r];
    STG_CHECK(t >= 0 && static_cast<size_t>(t) < cols,
              "cross_entropy: target out of range");
    const double* xr = x + r * cols;
    double* pr = probs->data() + r * cols;
    double mx = xr[0];
    for (size_t j = 1; j < cols; ++j) mx = std::max(mx, xr[j]);
    double sum = 0.0;
    for (size_t j = 0; j < cols; ++j) {
      pr[j] = std::exp(xr[j] - mx);
      sum += pr[j];
    }
    const double inv = 1.0 / sum;
    for (size_t j = 0; j < cols; ++j) pr[j] *= inv;
    loss -= std::log(std::max(pr[static_cast<size_t>(t)], 1e-300));
  }
  loss /= static_cast<double>(rows);
  Tensor result = Tensor::make_result({1}, {loss}, {logits.node()});
  if (result.requires_grad()) {
    auto* rn = result.raw();
    auto* ln = logits.raw();
    auto tgt = targets;
    result.node()->backward = [rn, ln, probs, tgt, rows, cols] {
      Tensor::ensure_grad(ln);
      const double g = rn->grad.data()[0] / static_cast<double>(rows);
      for (size_t r = 0; r < rows; ++r) {
        const double* pr = probs->data() + r * cols;
        double* dl = ln->grad.data() + r * cols;
        for (size_t j = 0; j < cols; ++j) dl[j] += g * pr[j];
        dl[static_cast<size_t>(tgt[r])] -= g;
      }
    };
  }
  return result;
}

// Mean along one axis, removing it.
inline Tensor mean_axis(const Tensor& a, size_t axis) {
  STG_CHECK(axis < a.rank(), "mean_axis: axis out of range");
  const Shape& s = a.shape();
  size_t outer = 1, inner = 1;
  const size_t len = s[axis];
  for (size_t i = 0; i < axis; ++i) outer *= s[i];
  for (size_t i = axis + 1; i < s.size(); ++i) inner *= s[i];
  Shape out_shape;
  for (size_t i = 0; i < s.size(); ++i)
    if (i != axis) out_shape.push_back(s[i]);
  if (out_shape.empty()) out_shape.push_back(1);
  std::vector<double> out(outer * inner, 0.0);
  const double* x = a.data().data();
  const double invl = 1.0 / static_cast<double>(len);
  for (size_t o = 0; o < outer; ++o)
    for (size_t l = 0; l < len; ++l) {
      const double* xr = x + (o * len + l) * inner;
      double* yr = out.data() + o * inner;
      for (size_t i = 0; i < inner; ++i) yr[i] += xr[i];
    }
  for (auto& v : out) v *= invl;
  Tensor result = Tensor::make_result(std::move(out_shape), std::move(out), {a.node()});
  if (result.requires_grad()) {
    auto* rn = result.raw();
    auto* an = a.raw();
    result.node()->backward = [rn, an, outer, len, inner, invl] {
      Tensor::ensure_grad(an);
      for (size_t o = 0; o < outer; ++o)
        for (size_t l = 0; l < len; ++l) {
          double* dx = an->grad.data() + (o * len + l) * inner;
          const double* g = rn->grad.data() + o * inner;
          for (size_t i = 0; i < inner; ++i) dx[i] += g[i] * invl;
        }
    };
  }
  return result;
}

inline Tensor sum_all(const Tensor& a) {
  double s = 0.0;
  for (double v : a.data()) s += v;
  Tensor result = Tensor::make_result({1}, {s}, {a.node()});
  if (result.requires_grad()) {
    auto* rn = result.raw();
    auto* an = a.raw();
    const size_t n = a.numel();
    result.node()->backward = [rn, an, n] {
      Tensor::ensure_grad(an);
      const double g = rn->grad.data()[0];
      for (size_t i = 0; i < n; ++i) an->grad[i] += g;
    };
  }
  return result;
}

// ---------------------------------------------------------------------------
// Shape manipulation

// Same data, new shape (element count must match). Gradient passes through.
inline Tensor reshape(const Tensor& a, Shape new_shape) {
  STG_CHECK(shape_numel(new_shape) == a.numel(),
            "reshape: element count mismatch " + shape_str(a.shape()) + " -> " +
                shape_str(new_shape));
  Tensor result = Tensor::make_result(std::move(new_shape),
                                      std::vector<double>(a.data()), {a.node()});
  if (result.requires_grad()) {
    auto* rn = result.raw();
    auto* an = a.raw();
    const size_t n = a.numel();
    result.node()->backward = [rn, an, n] {
      Tensor::ensure_grad(an);
      for (size_t i = 0; i < n; ++i) an->grad[i] += rn->grad.data()[i];
    };
  }
  return result;
}

// Concatenate two rank-2 tensors along axis 1 (columns).
inline Tensor concat_cols(const Tensor& a, const Tensor& b) {
  detail::check_2d(a, "concat_cols");
  detail::check_2d(b, "concat_cols");
  STG_CHECK(a.shape()[0] == b.shape()[0], "concat_cols: row counts disagree");
  const size_t rows = a.shape()[0];
  const size_t ca = a.shape()[1], cb = b.shape()[1];
  std::vector<double> out(rows * (ca + cb));
  for (size_t r = 0; r < rows; ++r) {
    std::memcpy(out.data() + r * (ca + cb), a.data().data() + r * ca,
                sizeof(double) * ca);
    std::memcpy(out.data() + r * (ca + cb) + ca, b.data().data() + r * cb,
                sizeof(double) * cb);
  }
  Tensor result =
      Tensor::make_result({rows, ca + cb}, std::move(out), {a.node(), b.node()});
  if (result.requires_grad()) {
    auto* rn = result.raw();
    auto* an = a.raw();
    auto* bn = b.raw();
    result.node()->backward = [rn, an, bn, rows, ca, cb] {
      if (an->requires_grad) Tensor::ensure_grad(an);
      if (bn->requires_grad) Tensor::ensure_grad(bn);
      for (size_t r = 0; r < rows; ++r) {
        const double* g = rn->grad.data() + r * (ca + cb);
        if (an->requires_grad)
          for (size_t j = 0; j < ca; ++j) an->grad[r * ca + j] += g[j];
        if (bn->requires_grad)
          for (size_t j = 0; j < cb; ++j) bn->grad[r * cb + j] += g[ca + j];
      }
    };
  }
  return result;
}

// Columns [start, start+len) of a rank-2 tensor.
inline Tensor slice_cols(const Tensor& a, size_t start, size_t len) {
  detail::check_2d(a, "slice_cols");
  const size_t rows = a.shape()[0], cols = a.shape()[1];
  STG_CHECK(start + len <= cols, "slice_cols: range out of bounds");
  std::vector<double> out(rows * len);
  for (size_t r = 0; r < rows; ++r)
    std::memcpy(out.data() + r * len, a.data().data() + r * cols + start,
                sizeof(double) * len);
  Tensor result = Tensor::make_result({rows, len}, std::move(out), {a.node()});
  if (result.requires_grad()) {
    auto* rn = result.raw();
    auto* an = a.raw();
    result.node()->backward = [rn, an, rows, cols, start, len] {
      Tensor::ensure_grad(an);
      for (size_t r = 0; r < rows; ++r) {
        const double* g = rn->grad.data() + r * len;
        double* dx = an->grad.data() + r * cols + start;
        for (size_t j = 0; j < len; ++j) dx[j] += g[j];
      }
    };
  }
  return result;
}

// Scales row i of a rank-2 tensor by s[i]; s has one entry per row.
inline Tensor row_scale(const Tensor& a, const Tensor& s) {
  detail::check_2d(a, "row_scale");
  const size_t rows = a.shape()[0], cols = a.shape()[1];
  STG_CHECK(s.numel() == rows, "row_scale: scale count must equal rows");
  std::vector<double> out(rows * cols);
  for (size_t r = 0; r < rows; ++r) {
    const double sv = s.data()[r];
    const double* xr = a.data().data() + r * cols;
    double* yr = out.data() + r * cols;
    for (size_t j = 0; j < cols; ++j) yr[j] = xr[j] * sv;
  }
  Tensor result = Tensor::make_result(a.shape(), std::move(out), {a.node(), s.node()});
  if (result.requires_grad()) {
    auto* rn = result.raw();
    auto* an = a.raw();
    auto* sn = s.raw();
    result.node()->backward = [rn, an, sn, rows, cols] {
      if (an->requires_grad) Tensor::ensure_grad(an);
      if (sn->requires_grad) Tensor::ensure_grad(sn);
      for (size_t r = 0; r < rows; ++r) {
        const double* g = rn->grad.data() + r * cols;
        const double sv = sn->value[r];
        if (an->requires_grad) {
          double* dx = an->grad.data() + r * cols;
          for (size_t j = 0; j < cols; ++j) dx[j] += g[j] * sv;
        }
        if (sn->requires_grad) {
          const double* xr = an->value.data() + r * cols;
          double acc = 0.0;
          for (size_t j = 0; j < cols; ++j) acc += g[j] * xr[j];
          sn->grad[r] += acc;
        }
      }
    };
  }
  return result;
}

// Gathers rows of an embedding table: result[i] = table[ids[i]].
inline Tensor embedding(const Tensor& table, const std::vector<int>& ids) {
  detail::check_2d(table, "embedding");
  const size_t vocab = table.shape()[0], dim = table.shape()[1];
  std::vector<double> out(ids.size() * dim);
  for (size_t i = 0; i < ids.size(); ++i) {
    const int id = ids[i];
    STG_CHECK(id >= 0 && static_cast<size_t>(id) < vocab,
              "embedding: id out of range");
    std::memcpy(out.data() + i * dim,
                table.data().data() + static_cast<size_t>(id) * dim,
                sizeof(double) * dim);
  }
  Tensor result =
      Tensor::make_result({ids.size(), dim}, std::move(out), {table.node()});
  if (result.requires_grad()) {
    auto* rn = result.raw();
    auto* tn = table.raw();
    auto ids_copy = ids;
    result.node()->backward = [rn, tn, ids_copy, dim] {
      Tensor::ensure_grad(tn);
      for (size_t i = 0; i < ids_copy.size(); ++i) {
        const double* g = rn->grad.data() + i * dim;
        double* dt = tn->grad.data() + static_cast<size_t>(ids_copy[i]) * dim;
        for (size_t j = 0; j < dim; ++j) dt[j] += g[j];
      }
    };
  }
  return result;
}

// y = x * W^T + b, the standard fully connected layer (W stored out x in).
inline Tensor linear(const Tensor& x, const Tensor& w, const Tensor& b) {
  Tensor y = matmul(x, w, false, true);
  detail::check_2d(y, "linear");
  STG_CHECK(b.numel() == y.shape()[1], "linear: bias size mismatch");
  const size_t rows = y.shape()[0], cols = y.shape()[1];
  std::vector<double> out(y.data());
  for (size_t r = 0; r < rows; ++r) {
    double* yr = out.data() + r * cols;
    for (size_t j = 0; j < cols; ++j) yr[j] += b.data()[j];
  }
  Tensor result = Tensor::make_result(y.shape(), std::move(out), {y.node(), b.node()});
  if (result.requires_grad()) {
    auto* rn = result.raw();
    auto* yn = y.raw();
    auto* bn = b.raw();
    result.node()->backward = [rn, yn, bn, rows, cols] {
      if (yn->requires_grad) {
        Tensor::ensure_grad(yn);
        for (size_t i = 0; i < rows * cols; ++i) yn->grad[i] += rn->grad.data()[i];
      }
      if (bn->requires_grad) {
        Tensor::ensure_grad(bn);
        for (size_t r = 0; r < rows; ++r) {
          const double* g = rn->grad.data() + r * cols;
          for (size_t j = 0; j < cols; ++j) bn->grad[j] += g[j];
        }
      }
    };
  }
  return result;
}

}  // namespace stg
