#include "doctest.h"

#include <cmath>

#include "fd_oracle.hpp"
#include "glyphforge/rng.hpp"
#include "glyphforge/tape.hpp"

using namespace glyphforge;

namespace {

Tensor random_tensor(Shape shape, Rng& rng, real lo = -2, real hi = 2) {
  Tensor t = Tensor::zeros(std::move(shape));
  for (auto& v : t.data) v = rng.uniform(lo, hi);
  return t;
}

Tensor identity(int64_t n) {
  Tensor t = Tensor::zeros({n, n});
  for (int64_t i = 0; i < n; ++i) t.data[static_cast<size_t>(i * n + i)] = 1;
  return t;
}

}  // namespace

TEST_CASE("matmul by identity returns the input") {
  Rng rng(1);
  Tensor a = random_tensor({3, 4}, rng);
  Tape tp;
  Var va = tp.leaf(a, false);
  Var vi = tp.leaf(identity(4), false);
  Var c = matmul(tp, va, vi);
  for (size_t i = 0; i < a.data.size(); ++i) CHECK(tp.value(c).data[i] == doctest::Approx(a.data[i]).epsilon(1e-15));
}

TEST_CASE("matmul 1x1 scalar product and gradients") {
  Tape tp;
  Var a = tp.leaf(Tensor({1, 1}, {2}), true);
  Var b = tp.leaf(Tensor({1, 1}, {3}), true);
  Var c = matmul(tp, a, b);
  CHECK(tp.value(c).data[0] == doctest::Approx(6));
  tp.backward(sum(tp, c));  // dC = 1
  CHECK(tp.grad(a)[0] == doctest::Approx(3));
  CHECK(tp.grad(b)[0] == doctest::Approx(2));
}

TEST_CASE("matmul gradient matches finite differences") {
  Rng rng(7);
  Tensor A = random_tensor({4, 5}, rng);
  Tensor B = random_tensor({5, 3}, rng);
  auto loss = [](const std::vector<Tensor>& in) {
    Tape tp;
    Var a = tp.leaf(in[0], false);
    Var b = tp.leaf(in[1], false);
    return tp.value(sum(tp, matmul(tp, a, b))).data[0];
  };
  Tape tp;
  Var a = tp.leaf(A, true);
  Var b = tp.leaf(B, true);
  tp.backward(sum(tp, matmul(tp, a, b)));
  auto fd_a = gftest::fd_gradient(loss, {A, B}, 0, 1e-5);
  auto fd_b = gftest::fd_gradient(loss, {A, B}, 1, 1e-5);
  CHECK(gftest::max_grad_rel_err(tp.grad(a), fd_a) < 1e-6);
  CHECK(gftest::max_grad_rel_err(tp.grad(b), fd_b) < 1e-6);
}

TEST_CASE("matmul shape mismatch raises") {
  Rng rng(2);
  Tape tp;
  Var a = tp.leaf(random_tensor({3, 4}, rng), false);
  Var b = tp.leaf(random_tensor({5, 2}, rng), false);
  CHECK_THROWS_AS(matmul(tp, a, b), shape_error);
}

TEST_CASE("conv2d with a 1x1 unit kernel is the identity channel mix") {
  Rng rng(3);
  Tensor x = random_tensor({1, 1, 5, 5}, rng);
  Tape tp;
  Var vx = tp.leaf(x, false);
  Var vk = tp.leaf(Tensor({1, 1, 1, 1}, {1}), false);
  Var y = conv2d(tp, vx, vk, 1, 0);
  CHECK(tp.value(y).shape == Shape{1, 1, 5, 5});
  for (size_t i = 0; i < x.data.size(); ++i)
    CHECK(tp.value(y).data[i] == doctest::Approx(x.data[i]).epsilon(1e-15));
}

TEST_CASE("conv2d all-ones 3x3 on all-ones 3x3 input sums to 9") {
  Tape tp;
  Var x = tp.leaf(Tensor::full({1, 1, 3, 3}, 1), false);
  Var k = tp.leaf(Tensor::full({1, 1, 3, 3}, 1), false);
  Var y = conv2d(tp, x, k, 1, 0);
  CHECK(tp.value(y).shape == Shape{1, 1, 1, 1});
  CHECK(tp.value(y).data[0] == doctest::Approx(9));
}

TEST_CASE("conv2d output geometry follows floor((h+2p-kh)/s)+1") {
  Rng rng(4);
  Tape tp;
  Var x = tp.leaf(random_tensor({2, 3, 8, 8}, rng), false);
  Var k = tp.leaf(random_tensor({4, 3, 3, 3}, rng), false);
  Var y = conv2d(tp, x, k, 2, 1);
  CHECK(tp.value(y).shape == Shape{2, 4, 4, 4});
}

TEST_CASE("conv2d gradient matches finite differences") {
  Rng rng(5);
  Tensor X = random_tensor({2, 3, 8, 8}, rng);
  Tensor K = random_tensor({4, 3, 3, 3}, rng);
  auto loss = [](const std::vector<Tensor>& in) {
    Tape tp;
    Var x = tp.leaf(in[0], false);
    Var k = tp.leaf(in[1], false);
    return tp.value(sum(tp, conv2d(tp, x, k, 2, 1))).data[0];
  };
  Tape tp;
  Var x = tp.leaf(X, true);
  Var k = tp.leaf(K, true);
  tp.backward(sum(tp, conv2d(tp, x, k, 2, 1)));
  CHECK(gftest::max_grad_rel_err(tp.grad(x), gftest::fd_gradient(loss, {X, K}, 0, 1e-5)) < 1e-5);
  CHECK(gftest::max_grad_rel_err(tp.grad(k), gftest::fd_gradient(loss, {X, K}, 1, 1e-5)) < 1e-5);
}

TEST_CASE("conv2d rejects invalid geometry") {
  Rng rng(6);
  Tape tp;
  Var x = tp.leaf(random_tensor({1, 1, 2, 2}, rng), false);
  Var k = tp.leaf(random_tensor({1, 1, 5, 5}, rng), false);
  CHECK_THROWS_AS(conv2d(tp, x, k, 1, 0), shape_error);
  Var k2 = tp.leaf(random_tensor({1, 2, 2, 2}, rng), false);
  CHECK_THROWS_AS(conv2d(tp, x, k2, 1, 0), shape_error);
  Var k3 = tp.leaf(random_tensor({1, 1, 2, 2}, rng), false);
  CHECK_THROWS_AS(conv2d(tp, x, k3, 0, 0), shape_error);
}

TEST_CASE("relu values and subgradient at zero") {
  Tape tp;
  Var x = tp.leaf(Tensor({3}, {-1, 0, 2}), true);
  Var y = relu(tp, x);
  CHECK(tp.value(y).data[0] == 0);
  CHECK(tp.value(y).data[1] == 0);
  CHECK(tp.value(y).data[2] == 2);
  tp.backward(sum(tp, y));
  CHECK(tp.grad(x)[0] == 0);
  CHECK(tp.grad(x)[1] == 0);  // defined as 0 at exactly 0
  CHECK(tp.grad(x)[2] == 1);
}

TEST_CASE("sigmoid(0)=0.5 and tanh(0)=0") {
  Tape tp;
  Var x = tp.leaf(Tensor({1}, {0}), false);
  CHECK(tp.value(sigmoid(tp, x)).data[0] == doctest::Approx(0.5));
  CHECK(tp.value(tanh_op(tp, x)).data[0] == doctest::Approx(0.0));
}

TEST_CASE("elementwise gradients match finite differences") {
  Rng rng(8);
  Tensor X = random_tensor({17}, rng);
  for (auto& v : X.data)
    if (std::abs(v) < 0.01) v = 0.5;  // keep clear of the relu kink for FD

  auto check_unary = [&](auto op) {
    auto loss = [&op](const std::vector<Tensor>& in) {
      Tape tp;
      Var x = tp.leaf(in[0], false);
      return tp.value(sum(tp, op(tp, x))).data[0];
    };
    Tape tp;
    Var x = tp.leaf(X, true);
    tp.backward(sum(tp, op(tp, x)));
    return gftest::max_grad_rel_err(tp.grad(x), gftest::fd_gradient(loss, {X}, 0, 1e-5));
  };
  CHECK(check_unary([](Tape& t, Var v) { return relu(t, v); }) < 1e-6);
  CHECK(check_unary([](Tape& t, Var v) { return sigmoid(t, v); }) < 1e-6);
  CHECK(check_unary([](Tape& t, Var v) { return tanh_op(t, v); }) < 1e-6);
  CHECK(check_unary([](Tape& t, Var v) { return scale(t, v, real(2.5)); }) < 1e-6);

  Tensor Y = random_tensor({17}, rng);
  auto loss2 = [](const std::vector<Tensor>& in) {
    Tape tp;
    Var a = tp.leaf(in[0], false);
    Var b = tp.leaf(in[1], false);
    return tp.value(sum(tp, mul(tp, a, b))).data[0];
  };
  Tape tp;
  Var a = tp.leaf(X, true);
  Var b = tp.leaf(Y, true);
  tp.backward(sum(tp, mul(tp, a, b)));
  CHECK(gftest::max_grad_rel_err(tp.grad(a), gftest::fd_gradient(loss2, {X, Y}, 0, 1e-5)) < 1e-6);
  CHECK(gftest::max_grad_rel_err(tp.grad(b), gftest::fd_gradient(loss2, {X, Y}, 1, 1e-5)) < 1e-6);
}

TEST_CASE("elementwise shape mismatch raises") {
  Rng rng(9);
  Tape tp;
  Var a = tp.leaf(random_tensor({3}, rng), false);
  Var b = tp.leaf(random_tensor({4}, rng), false);
  CHECK_THROWS_AS(add(tp, a, b), shape_error);
  CHECK_THROWS_AS(mul(tp, a, b), shape_error);
}

TEST_CASE("cross-entropy of uniform logits is ln N") {
  for (int64_t n : {4, 10, 64}) {
    Tape tp;
    Var logits = tp.leaf(Tensor::full({2, n}, 0.37), false);
    Var loss = softmax_cross_entropy(tp, logits, {0, n - 1});
    CHECK(std::abs(tp.value(loss).data[0] - std::log(static_cast<real>(n))) < 1e-12);
  }
}

TEST_CASE("cross-entropy of a saturated logit is near zero and never negative") {
  Tape tp;
  Tensor logits = Tensor::zeros({1, 5});
  logits.data[2] = 100;
  Var loss = softmax_cross_entropy(tp, tp.leaf(logits, false), {2});
  CHECK(tp.value(loss).data[0] >= 0);
  CHECK(tp.value(loss).data[0] < 1e-12);
}

TEST_CASE("cross-entropy gradient matches finite differences") {
  Rng rng(10);
  Tensor L = random_tensor({4, 10}, rng);
  std::vector<int64_t> targets = {3, 0, 9, 5};
  auto loss = [&](const std::vector<Tensor>& in) {
    Tape tp;
    return tp.value(softmax_cross_entropy(tp, tp.leaf(in[0], false), targets)).data[0];
  };
  Tape tp;
  Var l = tp.leaf(L, true);
  tp.backward(softmax_cross_entropy(tp, l, targets));
  CHECK(gftest::max_grad_rel_err(tp.grad(l), gftest::fd_gradient(loss, {L}, 0, 1e-5)) < 1e-6);
}

TEST_CASE("cross-entropy rejects out-of-range targets") {
  Tape tp;
  Var l = tp.leaf(Tensor::zeros({1, 4}), false);
  CHECK_THROWS_AS(softmax_cross_entropy(tp, l, {4}), index_error);
  CHECK_THROWS_AS(softmax_cross_entropy(tp, l, {-1}), index_error);
}

TEST_CASE("backward of sum gives all-ones gradient") {
  Rng rng(11);
  Tensor X = random_tensor({2, 3, 4}, rng);
  Tape tp;
  Var x = tp.leaf(X, true);
  tp.backward(sum(tp, x));
  for (real g : tp.grad(x)) CHECK(g == 1);
}

TEST_CASE("gradients accumulate across multiple uses of a node") {
  Rng rng(12);
  Tensor X = random_tensor({5}, rng);
  Tape tp;
  Var x = tp.leaf(X, true);
  tp.backward(sum(tp, add(tp, x, x)));
  for (real g : tp.grad(x)) CHECK(g == 2);

  // k = 3 consumers
  Tape tp2;
  Var y = tp2.leaf(X, true);
  Var s = add(tp2, add(tp2, y, y), y);
  tp2.backward(sum(tp2, s));
  for (real g : tp2.grad(y)) CHECK(g == 3);
}

TEST_CASE("backward requires a scalar loss and a nonempty tape") {
  Rng rng(13);
  Tape tp;
  Var x = tp.leaf(random_tensor({3}, rng), true);
  CHECK_THROWS_AS(tp.backward(x), shape_error);
  Tape empty;
  CHECK_THROWS_AS(empty.backward(0), shape_error);
}

TEST_CASE("identical seed and op sequence give bit-identical results") {
  auto run = [] {
    Rng rng(99);
    Tensor A = random_tensor({6, 6}, rng);
    Tensor B = random_tensor({6, 6}, rng);
    Tape tp;
    Var a = tp.leaf(A, true);
    Var b = tp.leaf(B, true);
    Var c = sigmoid(tp, matmul(tp, a, b));
    tp.backward(sum(tp, c));
    auto out = tp.value(c).data;
    auto g = tp.grad(a);
    out.insert(out.end(), g.begin(), g.end());
    return out;
  };
  auto r1 = run();
  auto r2 = run();
  REQUIRE(r1.size() == r2.size());
  for (size_t i = 0; i < r1.size(); ++i) CHECK(r1[i] == r2[i]);
}

TEST_CASE("gather_rows rejects out-of-range indices") {
  Rng rng(14);
  Tape tp;
  Var t = tp.leaf(random_tensor({4, 2}, rng), false);
  CHECK_THROWS_AS(gather_rows(tp, t, {4}), index_error);
}

TEST_CASE("finite-difference property over random primitive compositions") {
  // Random two-layer graphs: affine + nonlinearity + projection.
  Rng rng(20250823);
  for (int trial = 0; trial < 10; ++trial) {
    Tensor X = random_tensor({3, 6}, rng);
    Tensor W = random_tensor({6, 4}, rng);
    Tensor B = random_tensor({4}, rng);
    const int which = trial % 3;
    auto build = [&](Tape& tp, Var x, Var w, Var b) {
      Var h = bias_add(tp, matmul(tp, x, w), b);
      if (which == 0) h = sigmoid(tp, h);
      if (which == 1) h = tanh_op(tp, h);
      if (which == 2) h = mul(tp, sigmoid(tp, h), tanh_op(tp, h));
      return sum(tp, h);
    };
    auto loss = [&](const std::vector<Tensor>& in) {
      Tape tp;
      return tp.value(build(tp, tp.leaf(in[0], false), tp.leaf(in[1], false),
                            tp.leaf(in[2], false)))
          .data[0];
    };
    Tape tp;
    Var x = tp.leaf(X, true);
    Var w = tp.leaf(W, true);
    Var b = tp.leaf(B, true);
    tp.backward(build(tp, x, w, b));
    CHECK(gftest::max_grad_rel_err(tp.grad(x), gftest::fd_gradient(loss, {X, W, B}, 0, 1e-5)) <
          1e-5);
    CHECK(gftest::max_grad_rel_err(tp.grad(w), gftest::fd_gradient(loss, {X, W, B}, 1, 1e-5)) <
          1e-5);
    CHECK(gftest::max_grad_rel_err(tp.grad(b), gftest::fd_gradient(loss, {X, W, B}, 2, 1e-5)) <
          1e-5);
  }
}
