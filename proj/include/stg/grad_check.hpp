// Copyright (c) 2026 the stgnet authors
// SPDX-License-Identifier: Apache-2.0
//
// Numerical gradient verification. Compares reverse-mode gradients against
// central finite differences computed by re-running the (pure) forward
// function with perturbed leaf values.

#pragma once

#include <cmath>
#include <functional>
#include <string>
#include <vector>

#include "stg/model.hpp"
#include "stg/tensor.hpp"

namespace stg {

struct GradCheckResult {
  double max_rel_error = 0.0;
  size_t checked_coords = 0;
};

// relative error := |analytic - numeric| / max(|analytic|, |numeric|, 1e-6)
//
// The 1e-6 denominator floor makes "rel error < tol" behave like a combined
// rtol/atol test (atol = tol * 1e-6). Central differences at eps = 1e-5 on an
// O(1) objective resolve gradients only to ~1e-11 absolute (roundoff |f|*ulp
// / eps), so coordinates with true gradients below ~1e-7 cannot be validated
// to any relative precision; the floor keeps that unavoidable noise from
// masquerading as gradient bugs while still flagging genuine errors, which
// shift values by far more than the floor absorbs.
inline double grad_rel_error(double analytic, double numeric) {
  const double denom = std::max({std::fabs(analytic), std::fabs(numeric), 1e-6});
  return std::fabs(analytic - numeric) / denom;
}

// f must rebuild its graph from the current leaf values on every call and
// return a scalar. Every coordinate of every leaf is perturbed by +-eps.
inline GradCheckResult grad_check(const std::function<Tensor()>& f,
                                  std::vector<Tensor> leaves, double eps = 1e-5) {
  for (auto& leaf : leaves) {
    leaf.set_requires_grad(true);
    leaf.zero_grad();
  }
  Tensor loss = f();
  loss.backward();
  std::vector<std::vector<double>> analytic;
  analytic.reserve(leaves.size());
  for (auto& leaf : leaves) analytic.push_back(leaf.grad());

  GradCheckResult res;
  for (size_t li = 0; li < leaves.size(); ++li) {
    auto& x = leaves[li].data();
    for (size_t i = 0; i < x.size(); ++i) {
      const double saved = x[i];
      x[i] = saved + eps;
      const double fp = f().item();
      x[i] = saved - eps;
      const double fm = f().item();
      x[i] = saved;
      const double numeric = (fp - fm) / (2.0 * eps);
      res.max_rel_error =
          std::max(res.max_rel_error, grad_rel_error(analytic[li][i], numeric));
      ++res.checked_coords;
    }
  }
  return res;
}

// ---------------------------------------------------------------------------
// Battery: every differentiable op on a small random instance, then the
// end-to-end loss of each ablation configuration on a toy batch. Per-op
// tolerance is tight; the end-to-end graphs compound roundoff across many
// ops, so they get a looser bar.

struct OpCheckResult {
  std::string name;
  double max_rel_error = 0.0;
  std::size_t checked_coords = 0;
  double tolerance = 0.0;
  bool pass = false;
};

namespace detail_gradcheck {

inline Tensor random_leaf(Rng& rng, Shape shape, double lo = -1.0, double hi = 1.0) {
  std::vector<double> v(shape_numel(shape));
  for (auto& x : v) x = rng.uniform(lo, hi);
  Tensor t = Tensor::from_data(std::move(shape), std::move(v));
  t.set_requires_grad(true);
  return t;
}

// Fixed random weighting turns a tensor-valued op into a scalar objective
// whose gradient exercises the full backward map, not just the ones-vector.
inline Tensor weighted_sum(const Tensor& t, Rng& rng) {
  std::vector<double> w(t.numel());
  for (auto& x : w) x = rng.uniform(-1.0, 1.0);
  Shape shape = t.shape();
  return sum_all(mul(t, Tensor::from_data(std::move(shape), std::move(w))));
}

inline OpCheckResult run_one(const std::string& name, double tol, double eps,
                             const std::function<Tensor()>& f,
                             std::vector<Tensor> leaves) {
  const auto r = grad_check(f, std::move(leaves), eps);
  OpCheckResult out;
  out.name = name;
  out.max_rel_error = r.max_rel_error;
  out.checked_coords = r.checked_coords;
  out.tolerance = tol;
  out.pass = r.max_rel_error < tol;
  return out;
}

}  // namespace detail_gradcheck

// Runs checks whose name contains `only` (all when empty). Per-op tolerance
// 1e-6, end-to-end tolerance 1e-4.
inline std::vector<OpCheckResult> grad_check_battery(double eps = 1e-5,
                                                     const std::string& only = "") {
  using detail_gradcheck::random_leaf;
  using detail_gradcheck::run_one;
  using detail_gradcheck::weighted_sum;
  constexpr double kOpTol = 1e-6;
  constexpr double kModelTol = 1e-4;
  std::vector<OpCheckResult> results;
  const auto want = [&](const std::string& name) {
    return only.empty() || name.find(only) != std::string::npos;
  };

  Rng rng = stream_rng(20260401, "grad-battery");
  const auto add_check = [&](const std::string& name, double tol,
                             std::vector<Tensor> leaves,
                             const std::function<Tensor()>& f) {
    if (!want(name)) return;
    results.push_back(run_one(name, tol, eps, f, std::move(leaves)));
  };

  {  // matmul, both orientations
    Tensor a = random_leaf(rng, {3, 4}), b = random_leaf(rng, {4, 2});
    Rng w = stream_rng(1, "w-matmul");
    add_check("matmul", kOpTol, {a, b}, [=]() mutable {
      Rng wr = w;
      return weighted_sum(matmul(a, b), wr);
    });
    Tensor at = random_leaf(rng, {4, 3}), bt = random_leaf(rng, {2, 4});
    Rng w2 = stream_rng(1, "w-matmul-t");
    add_check("matmul_trans", kOpTol, {at, bt}, [=]() mutable {
      Rng wr = w2;
      return weighted_sum(matmul(at, bt, true, true), wr);
    });
  }
  {  // batched matmul, both orientations
    Tensor a = random_leaf(rng, {2, 3, 4}), b = random_leaf(rng, {2, 4, 2});
    Rng w = stream_rng(1, "w-bmm");
    add_check("bmm", kOpTol, {a, b}, [=]() mutable {
      Rng wr = w;
      return weighted_sum(bmm(a, b), wr);
    });
    Tensor at = random_leaf(rng, {2, 4, 3}), bt = random_leaf(rng, {2, 2, 4});
    Rng w2 = stream_rng(1, "w-bmm-t");
    add_check("bmm_trans", kOpTol, {at, bt}, [=]() mutable {
      Rng wr = w2;
      return weighted_sum(bmm(at, bt, true, true), wr);
    });
  }
  {
    Tensor a = random_leaf(rng, {3, 5}), b = random_leaf(rng, {3, 5});
    Rng w = stream_rng(1, "w-add");
    add_check("add", kOpTol, {a, b}, [=]() mutable {
      Rng wr = w;
      return weighted_sum(add(a, b), wr);
    });
    Rng w2 = stream_rng(1, "w-sub");
    add_check("sub", kOpTol, {a, b}, [=]() mutable {
      Rng wr = w2;
      return weighted_sum(sub(a, b), wr);
    });
    Rng w3 = stream_rng(1, "w-mul");
    add_check("mul", kOpTol, {a, b}, [=]() mutable {
      Rng wr = w3;
      return weighted_sum(mul(a, b), wr);
    });
    Rng w4 = stream_rng(1, "w-scale");
    add_check("scale", kOpTol, {a}, [=]() mutable {
      Rng wr = w4;
      return weighted_sum(scale(a, -1.7), wr);
    });
  }
  {
    Tensor a = random_leaf(rng, {4, 6});
    Rng w = stream_rng(1, "w-tanh");
    add_check("tanh", kOpTol, {a}, [=]() mutable {
      Rng wr = w;
      return weighted_sum(tanh(a), wr);
    });
    Rng w2 = stream_rng(1, "w-sigmoid");
    add_check("sigmoid", kOpTol, {a}, [=]() mutable {
      Rng wr = w2;
      return weighted_sum(sigmoid(a), wr);
    });
    Rng w3 = stream_rng(1, "w-softmax");
    add_check("softmax", kOpTol, {a}, [=]() mutable {
      Rng wr = w3;
      return weighted_sum(softmax(a), wr);
    });
  }
  {
    Tensor logits = random_leaf(rng, {4, 5});
    add_check("cross_entropy", kOpTol, {logits},
              [=]() { return cross_entropy(logits, {0, 2, 4, 1}); });
  }
  {
    Tensor a = random_leaf(rng, {3, 4, 2});
    Rng w = stream_rng(1, "w-mean-axis");
    add_check("mean_axis", kOpTol, {a}, [=]() mutable {
      Rng wr = w;
      return weighted_sum(mean_axis(a, 1), wr);
    });
    Tensor b = random_leaf(rng, {2, 6});
    add_check("sum_all", kOpTol, {b}, [=]() { return sum_all(b); });
    Rng w2 = stream_rng(1, "w-reshape");
    add_check("reshape", kOpTol, {b}, [=]() mutable {
      Rng wr = w2;
      return weighted_sum(reshape(b, {3, 4}), wr);
    });
  }
  {
    Tensor a = random_leaf(rng, {3, 2}), b = random_leaf(rng, {3, 4});
    Rng w = stream_rng(1, "w-concat");
    add_check("concat_cols", kOpTol, {a, b}, [=]() mutable {
      Rng wr = w;
      return weighted_sum(concat_cols(a, b), wr);
    });
    Rng w2 = stream_rng(1, "w-slice");
    add_check("slice_cols", kOpTol, {b}, [=]() mutable {
      Rng wr = w2;
      return weighted_sum(slice_cols(b, 1, 3), wr);
    });
    Tensor s = random_leaf(rng, {3});
    Rng w3 = stream_rng(1, "w-rowscale");
    add_check("row_scale", kOpTol, {b, s}, [=]() mutable {
      Rng wr = w3;
      return weighted_sum(row_scale(b, s), wr);
    });
  }
  {
    Tensor table = random_leaf(rng, {6, 4});
    Rng w = stream_rng(1, "w-embed");
    add_check("embedding", kOpTol, {table}, [=]() mutable {
      Rng wr = w;
      return weighted_sum(embedding(table, {1, 3, 3, 0}), wr);
    });
    Tensor x = random_leaf(rng, {3, 4});
    Tensor wt = random_leaf(rng, {2, 4});
    Tensor bias = random_leaf(rng, {2});
    Rng w2 = stream_rng(1, "w-linear");
    add_check("linear", kOpTol, {x, wt, bias}, [=]() mutable {
      Rng wr = w2;
      return weighted_sum(linear(x, wt, bias), wr);
    });
  }

  // End-to-end: the training loss of each ablation row on a toy batch, with
  // every active parameter as a leaf.
  {
    ModelConfig base;
    base.d_model = 8;
    base.d_audio = 6;
    base.d_visual = 8;
    base.n_answers = 5;
    base.vocab_size = 12;
    base.t_segments = 3;
    const std::size_t B = 2, T = 3, hw = 4;
    Batch batch;
    batch.tokens = {{3, 7, 1}, {5, 2}};
    batch.answer_ids = {1, 4};
    {
      std::vector<double> av(B * T * 6), vv(B * T * 8 * hw);
      for (auto& x : av) x = rng.uniform(-1.0, 1.0);
      for (auto& x : vv) x = rng.uniform(-1.0, 1.0);
      batch.audio = Tensor::from_data({B, T, 6}, std::move(av));
      batch.visual = Tensor::from_data({B, T, 8, hw}, std::move(vv));
    }
    for (const auto& row : ablation_row_names()) {
      const std::string name = "model[" + row + "]";
      if (!want(name)) continue;
      ModelParams p = init_params(ablation_config(base, row), 99);
      Batch b = batch;
      if (p.cfg.use_sg) b.match_perm = {1, 0};
      std::vector<Tensor> leaves;
      for (auto& [pname, t] : p.all()) leaves.push_back(*t);
      auto f = [&p, b]() {
        Batch local = b;
        auto out = forward(p, local);
        Tensor loss = cross_entropy(out.answer_logits, local.answer_ids);
        if (out.has_match) {
          const auto rows = out.match_pos_logits.shape()[0];
          Tensor lp = cross_entropy(out.match_pos_logits, std::vector<int>(rows, 1));
          Tensor ln = cross_entropy(out.match_neg_logits, std::vector<int>(rows, 0));
          loss = add(loss, scale(add(lp, ln), 0.25));
        }
        return loss;
      };
      results.push_back(run_one(name, kModelTol, eps, f, std::move(leaves)));
    }
  }
  return results;
}

}  // namespace stg
