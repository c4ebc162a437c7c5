// Copyright (c) 2026 the stgnet authors
// SPDX-License-Identifier: Apache-2.0
//
// Forward-value oracles and gradient checks for every differentiable op.
// Matrix products are compared against an independent triple-loop reference;
// normalization ops against closed-form values computed by hand.

#include <catch2/catch_amalgamated.hpp>
#include <cmath>

#include "stg/grad_check.hpp"
#include "stg/ops.hpp"
#include "stg/rng.hpp"

using namespace stg;

namespace {

Tensor random_tensor(Shape shape, Rng& rng, double scale = 1.0) {
  std::vector<double> v(shape_numel(shape));
  for (auto& x : v) x = rng.normal(0.0, scale);
  return Tensor::from_data(std::move(shape), std::move(v));
}

// Independent reference: plain i-j-k triple loop, no transposes, no tricks.
std::vector<double> naive_matmul(const std::vector<double>& a,
                                 const std::vector<double>& b, size_t m, size_t k,
                                 size_t n) {
  std::vector<double> c(m * n, 0.0);
  for (size_t i = 0; i < m; ++i)
    for (size_t j = 0; j < n; ++j) {
      double acc = 0.0;
      for (size_t p = 0; p < k; ++p) acc += a[i * k + p] * b[p * n + j];
      c[i * n + j] = acc;
    }
  return c;
}

std::vector<double> transpose(const std::vector<double>& a, size_t rows, size_t cols) {
  std::vector<double> t(a.size());
  for (size_t i = 0; i < rows; ++i)
    for (size_t j = 0; j < cols; ++j) t[j * rows + i] = a[i * cols + j];
  return t;
}

}  // namespace

TEST_CASE("matmul matches triple-loop reference in all transpose modes", "[autodiff]") {
  Rng rng(11);
  const size_t m = 3, k = 4, n = 2;
  Tensor a = random_tensor({m, k}, rng);
  Tensor b = random_tensor({k, n}, rng);
  const auto expect = naive_matmul(a.data(), b.data(), m, k, n);

  Tensor c_nn = matmul(a, b);
  REQUIRE(c_nn.shape() == Shape{m, n});
  for (size_t i = 0; i < m * n; ++i)
    REQUIRE_THAT(c_nn.data()[i], Catch::Matchers::WithinAbs(expect[i], 1e-12));

  Tensor at = Tensor::from_data({k, m}, transpose(a.data(), m, k));
  Tensor bt = Tensor::from_data({n, k}, transpose(b.data(), k, n));
  Tensor c_tn = matmul(at, b, true, false);
  Tensor c_nt = matmul(a, bt, false, true);
  Tensor c_tt = matmul(at, bt, true, true);
  for (size_t i = 0; i < m * n; ++i) {
    REQUIRE_THAT(c_tn.data()[i], Catch::Matchers::WithinAbs(expect[i], 1e-12));
    REQUIRE_THAT(c_nt.data()[i], Catch::Matchers::WithinAbs(expect[i], 1e-12));
    REQUIRE_THAT(c_tt.data()[i], Catch::Matchers::WithinAbs(expect[i], 1e-12));
  }

  REQUIRE_THROWS_AS(matmul(a, a), InvariantError);  // inner dims disagree
}

TEST_CASE("bmm matches per-slice reference", "[autodiff]") {
  Rng rng(12);
  const size_t batch = 3, m = 2, k = 5, n = 4;
  Tensor a = random_tensor({batch, m, k}, rng);
  Tensor b = random_tensor({batch, k, n}, rng);
  Tensor c = bmm(a, b);
  REQUIRE(c.shape() == Shape{batch, m, n});
  for (size_t i = 0; i < batch; ++i) {
    std::vector<double> as(a.data().begin() + static_cast<long>(i * m * k),
                           a.data().begin() + static_cast<long>((i + 1) * m * k));
    std::vector<double> bs(b.data().begin() + static_cast<long>(i * k * n),
                           b.data().begin() + static_cast<long>((i + 1) * k * n));
    const auto expect = naive_matmul(as, bs, m, k, n);
    for (size_t j = 0; j < m * n; ++j)
      REQUIRE_THAT(c.data()[i * m * n + j], Catch::Matchers::WithinAbs(expect[j], 1e-12));
  }
}

TEST_CASE("softmax forward values and invariants", "[autodiff]") {
  // exp(1)/(exp(0)+exp(1)) = e/(1+e); shifting by a huge constant must not
  // change anything (max subtraction).
  Tensor x = Tensor::from_data({1, 2}, {1000.0, 1001.0});
  Tensor y = softmax(x);
  const double e = std::exp(1.0);
  REQUIRE_THAT(y.data()[0], Catch::Matchers::WithinAbs(1.0 / (1.0 + e), 1e-12));
  REQUIRE_THAT(y.data()[1], Catch::Matchers::WithinAbs(e / (1.0 + e), 1e-12));

  Rng rng(13);
  Tensor z = random_tensor({7, 9}, rng, 3.0);
  Tensor s = softmax(z);
  for (size_t r = 0; r < 7; ++r) {
    double sum = 0.0;
    for (size_t j = 0; j < 9; ++j) sum += s.at({r, j});
    REQUIRE_THAT(sum, Catch::Matchers::WithinAbs(1.0, 1e-12));
    REQUIRE(argmax_row(s, r) == argmax_row(z, r));
  }
}

TEST_CASE("softmax along a non-terminal axis", "[autodiff]") {
  Rng rng(14);
  Tensor z = random_tensor({2, 3, 4}, rng);
  Tensor s = softmax(z, 1);
  for (size_t b = 0; b < 2; ++b)
    for (size_t i = 0; i < 4; ++i) {
      double sum = 0.0;
      for (size_t t = 0; t < 3; ++t) sum += s.at({b, t, i});
      REQUIRE_THAT(sum, Catch::Matchers::WithinAbs(1.0, 1e-12));
    }
}

TEST_CASE("cross entropy of uniform logits is log of class count", "[autodiff]") {
  const size_t classes = 42;
  Tensor logits = Tensor::zeros({5, classes});
  Tensor loss = cross_entropy(logits, {0, 7, 41, 13, 21});
  REQUIRE_THAT(loss.item(),
               Catch::Matchers::WithinAbs(std::log(static_cast<double>(classes)), 1e-9));
  REQUIRE_THROWS_AS(cross_entropy(logits, {0, 7, 42, 13, 21}), InvariantError);
}

TEST_CASE("elementwise ops compute expected values", "[autodiff]") {
  Tensor a = Tensor::from_data({2}, {1, 2});
  Tensor b = Tensor::from_data({2}, {3, 4});
  REQUIRE(mul(a, b).data() == std::vector<double>{3, 8});
  REQUIRE(add(a, b).data() == std::vector<double>{4, 6});
  REQUIRE(sub(a, b).data() == std::vector<double>{-2, -2});
  REQUIRE(scale(a, -2.0).data() == std::vector<double>{-2, -4});

  Tensor s = Tensor::scalar(10.0);
  REQUIRE(mul(a, s).data() == std::vector<double>{10, 20});
  REQUIRE(add(s, a).data() == std::vector<double>{11, 12});

  Tensor c = Tensor::from_data({3}, {1, 2, 3});
  REQUIRE_THROWS_AS(add(a, c), InvariantError);
}

TEST_CASE("sum_all gradient is ones", "[autodiff]") {
  Tensor w = Tensor::from_data({2, 3}, {1, 2, 3, 4, 5, 6});
  w.set_requires_grad(true);
  Tensor loss = sum_all(w);
  REQUIRE(loss.item() == 21.0);
  loss.backward();
  for (double g : w.grad()) REQUIRE(g == 1.0);
}

TEST_CASE("backward accumulates across multiple uses", "[autodiff]") {
  // loss = sum(x*x) => dx = 2x, exercised through two separate uses of x.
  Tensor x = Tensor::from_data({3}, {1, -2, 3});
  x.set_requires_grad(true);
  Tensor loss = sum_all(mul(x, x));
  loss.backward();
  REQUIRE(x.grad() == std::vector<double>{2, -4, 6});
}

TEST_CASE("per-op gradient checks pass at 1e-6", "[autodiff][gradcheck]") {
  Rng rng(21);
  const double tol = 1e-6;

  SECTION("matmul all transpose modes") {
    for (int mode = 0; mode < 4; ++mode) {
      const bool ta = mode & 1, tb = mode & 2;
      Tensor a = ta ? random_tensor({4, 3}, rng) : random_tensor({3, 4}, rng);
      Tensor b = tb ? random_tensor({2, 4}, rng) : random_tensor({4, 2}, rng);
      auto res = grad_check([&] { return sum_all(tanh(matmul(a, b, ta, tb))); },
                            {a, b});
      INFO("mode ta=" << ta << " tb=" << tb);
      REQUIRE(res.max_rel_error < tol);
    }
  }
  SECTION("bmm with transposes") {
    for (int mode = 0; mode < 4; ++mode) {
      const bool ta = mode & 1, tb = mode & 2;
      Tensor a = ta ? random_tensor({2, 4, 3}, rng) : random_tensor({2, 3, 4}, rng);
      Tensor b = tb ? random_tensor({2, 5, 4}, rng) : random_tensor({2, 4, 5}, rng);
      auto res = grad_check([&] { return sum_all(tanh(bmm(a, b, ta, tb))); }, {a, b});
      REQUIRE(res.max_rel_error < tol);
    }
  }
  SECTION("softmax") {
    Tensor x = random_tensor({3, 5}, rng);
    Tensor m = random_tensor({3, 5}, rng);  // mixes rows so grads are nontrivial
    auto res = grad_check([&] { return sum_all(mul(softmax(x), m)); }, {x});
    REQUIRE(res.max_rel_error < tol);
  }
  SECTION("softmax interior axis") {
    Tensor x = random_tensor({2, 3, 4}, rng);
    Tensor m = random_tensor({2, 3, 4}, rng);
    auto res = grad_check([&] { return sum_all(mul(softmax(x, 1), m)); }, {x});
    REQUIRE(res.max_rel_error < tol);
  }
  SECTION("cross_entropy") {
    Tensor x = random_tensor({4, 6}, rng);
    auto res = grad_check([&] { return cross_entropy(x, {1, 0, 5, 3}); }, {x});
    REQUIRE(res.max_rel_error < tol);
  }
  SECTION("tanh sigmoid") {
    Tensor x = random_tensor({2, 7}, rng);
    auto r1 = grad_check([&] { return sum_all(mul(tanh(x), x)); }, {x});
    auto r2 = grad_check([&] { return sum_all(mul(sigmoid(x), x)); }, {x});
    REQUIRE(r1.max_rel_error < tol);
    REQUIRE(r2.max_rel_error < tol);
  }
  SECTION("elementwise and broadcast") {
    Tensor a = random_tensor({3, 3}, rng);
    Tensor b = random_tensor({3, 3}, rng);
    Tensor s = random_tensor({1}, rng);
    auto r1 = grad_check([&] { return sum_all(tanh(mul(a, b))); }, {a, b});
    auto r2 = grad_check([&] { return sum_all(tanh(mul(a, s))); }, {a, s});
    auto r3 = grad_check([&] { return sum_all(tanh(sub(add(a, s), b))); }, {a, b, s});
    REQUIRE(r1.max_rel_error < tol);
    REQUIRE(r2.max_rel_error < tol);
    REQUIRE(r3.max_rel_error < tol);
  }
  SECTION("reductions and shape ops") {
    Tensor x = random_tensor({2, 3, 4}, rng);
    Tensor m = random_tensor({2, 4}, rng);
    auto r1 = grad_check([&] { return sum_all(mul(mean_axis(x, 1), m)); }, {x});
    REQUIRE(r1.max_rel_error < tol);

    Tensor y = random_tensor({2, 6}, rng);
    Tensor w = random_tensor({3, 4}, rng);
    auto r2 = grad_check([&] { return sum_all(mul(reshape(y, {3, 4}), w)); }, {y});
    REQUIRE(r2.max_rel_error < tol);

    Tensor a = random_tensor({2, 3}, rng);
    Tensor b = random_tensor({2, 2}, rng);
    Tensor mm = random_tensor({2, 5}, rng);
    auto r3 = grad_check([&] { return sum_all(mul(concat_cols(a, b), mm)); }, {a, b});
    REQUIRE(r3.max_rel_error < tol);

    Tensor z = random_tensor({3, 6}, rng);
    Tensor mz = random_tensor({3, 2}, rng);
    auto r4 = grad_check([&] { return sum_all(mul(slice_cols(z, 2, 2), mz)); }, {z});
    REQUIRE(r4.max_rel_error < tol);
  }
  SECTION("row_scale embedding linear") {
    Tensor x = random_tensor({3, 4}, rng);
    Tensor s = random_tensor({3}, rng);
    auto r1 = grad_check([&] { return sum_all(tanh(row_scale(x, s))); }, {x, s});
    REQUIRE(r1.max_rel_error < tol);

    Tensor table = random_tensor({5, 3}, rng);
    Tensor m = random_tensor({4, 3}, rng);
    auto r2 = grad_check(
        [&] { return sum_all(mul(embedding(table, {0, 2, 2, 4}), m)); }, {table});
    REQUIRE(r2.max_rel_error < tol);

    Tensor w = random_tensor({4, 3}, rng);
    Tensor b = random_tensor({4}, rng);
    Tensor in = random_tensor({2, 3}, rng);
    auto r3 = grad_check([&] { return sum_all(tanh(linear(in, w, b))); }, {in, w, b});
    REQUIRE(r3.max_rel_error < tol);
  }
}

TEST_CASE("backward is bit-identical across repeated runs", "[autodiff]") {
  Rng rng(31);
  Tensor a = random_tensor({8, 8}, rng);
  Tensor b = random_tensor({8, 8}, rng);
  a.set_requires_grad(true);
  b.set_requires_grad(true);
  auto run = [&] {
    a.zero_grad();
    b.zero_grad();
    Tensor loss = cross_entropy(matmul(tanh(matmul(a, b)), b, false, true),
                                {0, 1, 2, 3, 4, 5, 6, 7});
    loss.backward();
    return std::make_pair(a.grad(), b.grad());
  };
  const auto first = run();
  for (int i = 0; i < 3; ++i) {
    const auto again = run();
    REQUIRE(again.first == first.first);    // exact equality, no tolerance
    REQUIRE(again.second == first.second);
  }
}

TEST_CASE("backward requires a scalar loss", "[autodiff]") {
  Tensor x = Tensor::from_data({2}, {1, 2});
  x.set_requires_grad(true);
  Tensor y = mul(x, x);
  REQUIRE_THROWS_AS(y.backward(), InvariantError);
}
