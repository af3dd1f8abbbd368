#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include "mma/tensor.hpp"

#include <cmath>
#include <vector>

#include "doctest.h"
#include "mma/error.hpp"
#include "mma/random.hpp"
#include "oracles.hpp"
#include "test_support.hpp"

using namespace mma;
using test_support::max_abs_diff;
using test_support::random_tensor;
using test_support::random_values;
using test_support::random_values_away_from_zero;

TEST_CASE("tensor creation validates shape and content") {
  CHECK_THROWS_AS(Tensor::from_values({2, 3}, {1.0}), Error);
  CHECK_THROWS_AS(Tensor::from_values({0}, {}), Error);
  CHECK_THROWS_AS(Tensor::from_values({1}, {std::nan("")}), Error);
  Tensor t = Tensor::from_values({2, 2}, {1, 2, 3, 4});
  CHECK(t.numel() == 4);
  CHECK(t.at({1, 0}) == 3.0);
}

TEST_CASE("elementwise trivial examples") {
  Tensor a = Tensor::from_values({3}, {1, 2, 3});
  CHECK(sub(a, a).values() == std::vector<double>{0, 0, 0});

  Tensor r = relu(Tensor::from_values({3}, {-1, 0, 2}));
  CHECK(r.values() == std::vector<double>{0, 0, 2});

  Tensor row = Tensor::from_values({1, 3}, {10, 20, 30});
  Tensor m = Tensor::from_values({2, 3}, {1, 2, 3, 4, 5, 6});
  Tensor s = add(m, row);
  CHECK(s.shape() == std::vector<std::size_t>{2, 3});
  CHECK(s.values() == std::vector<double>{11, 22, 33, 14, 25, 36});
}

TEST_CASE("broadcast add matches scalar-loop oracle") {
  Rng rng(11);
  // (2,3) + (1,3): every row offset by the same vector
  const auto av = random_values(6, rng);
  const auto bv = random_values(3, rng);
  Tensor a = Tensor::from_values({2, 3}, av);
  Tensor b = Tensor::from_values({1, 3}, bv);
  Tensor out = add(a, b);
  std::vector<double> expected(6);
  for (std::size_t i = 0; i < 2; ++i)
    for (std::size_t j = 0; j < 3; ++j)
      expected[i * 3 + j] = av[i * 3 + j] + bv[j];
  CHECK(max_abs_diff(out.values(), expected) == 0.0);
}

TEST_CASE("broadcast rejects incompatible shapes") {
  Rng rng(1);
  Tensor a = random_tensor({2, 3}, rng);
  Tensor b = Tensor::from_values({2, 2}, {1, 2, 3, 4});
  CHECK_THROWS_AS(add(a, b), Error);
}

TEST_CASE("non-finite production is an error") {
  Tensor big = Tensor::full({2}, 1e308);
  CHECK_THROWS_AS(mul(big, big), Error);  // overflow
  Tensor zero = Tensor::zeros({2});
  CHECK_THROWS_AS(div(zero, zero), Error);  // 0/0
  CHECK_THROWS_AS(log(zero), Error);
  CHECK_THROWS_AS(exp(Tensor::full({1}, 1e4)), Error);
}

TEST_CASE("matmul trivial examples") {
  // identity(3) . v = v
  Tensor eye = Tensor::from_values({3, 3}, {1, 0, 0, 0, 1, 0, 0, 0, 1});
  Tensor v = Tensor::from_values({3, 1}, {4, 5, 6});
  CHECK(matmul(eye, v).values() == std::vector<double>{4, 5, 6});

  // [1,2].[3;4] = [11]
  Tensor a = Tensor::from_values({1, 2}, {1, 2});
  Tensor b = Tensor::from_values({2, 1}, {3, 4});
  CHECK(matmul(a, b).values() == std::vector<double>{11});

  CHECK_THROWS_AS(matmul(a, a), Error);  // inner mismatch
}

TEST_CASE("matmul matches triple-loop oracle") {
  Rng rng(42);
  oracles::Matrix a{4, 5, random_values(20, rng)};
  oracles::Matrix b{5, 6, random_values(30, rng)};
  Tensor ta = Tensor::from_values({4, 5}, a.data);
  Tensor tb = Tensor::from_values({5, 6}, b.data);
  const auto expected = oracles::matmul_oracle(a, b);
  CHECK(max_abs_diff(matmul(ta, tb).values(), expected.data) < 1e-12);
}

TEST_CASE("batched matmul broadcasts batch axes") {
  Rng rng(7);
  const auto av = random_values(2 * 3 * 4, rng);
  const auto bv = random_values(4 * 2, rng);
  Tensor a = Tensor::from_values({2, 3, 4}, av);
  Tensor b = Tensor::from_values({4, 2}, bv);
  Tensor out = matmul(a, b);
  REQUIRE(out.shape() == std::vector<std::size_t>{2, 3, 2});
  for (std::size_t batch = 0; batch < 2; ++batch) {
    oracles::Matrix ma{3, 4, std::vector<double>(av.begin() + batch * 12,
                                                 av.begin() + (batch + 1) * 12)};
    oracles::Matrix mb{4, 2, bv};
    const auto expected = oracles::matmul_oracle(ma, mb);
    const std::vector<double> got(out.values().begin() + batch * 6,
                                  out.values().begin() + (batch + 1) * 6);
    CHECK(max_abs_diff(got, expected.data) < 1e-12);
  }
}

TEST_CASE("softmax trivial and oracle") {
  CHECK(softmax_lastdim(Tensor::from_values({2}, {0, 0})).values() ==
        std::vector<double>{0.5, 0.5});
  CHECK(softmax_lastdim(Tensor::from_values({1}, {3.7})).values() ==
        std::vector<double>{1.0});

  Tensor t = softmax_lastdim(Tensor::from_values({3}, {1, 2, 3}));
  const auto expected = oracles::softmax_oracle({1, 2, 3});
  CHECK(max_abs_diff(t.values(), expected) < 1e-14);

  // rows sum to one
  Rng rng(3);
  Tensor wide = softmax_lastdim(random_tensor({5, 7}, rng));
  for (std::size_t r = 0; r < 5; ++r) {
    double sum = 0.0;
    for (std::size_t c = 0; c < 7; ++c) sum += wide.values()[r * 7 + c];
    CHECK(std::abs(sum - 1.0) < 1e-12);
  }
}

TEST_CASE("backward populates leaf grads") {
  // loss = sum(x) -> grad = ones
  Tensor x = Tensor::from_values({3}, {5, 6, 7}, true);
  backward(reduce_sum_all(x));
  CHECK(x.grad() == std::vector<double>{1, 1, 1});

  // loss = sum(x*x) at [1,2] -> grad = [2,4]
  Tensor y = Tensor::from_values({2}, {1, 2}, true);
  backward(reduce_sum_all(mul(y, y)));
  CHECK(y.grad() == std::vector<double>{2, 4});
}

TEST_CASE("grads of unused leaves are zero") {
  Tensor x = Tensor::from_values({2}, {1, 2}, true);
  Tensor y = Tensor::from_values({2}, {3, 4}, true);
  backward(reduce_sum_all(x));
  CHECK(y.grad() == std::vector<double>{0, 0});
}

TEST_CASE("backward rejects non-scalar loss and consumed tapes") {
  Tensor x = Tensor::from_values({2}, {1, 2}, true);
  Tensor y = mul(x, x);
  CHECK_THROWS_AS(backward(y), Error);  // not scalar

  Tensor loss = reduce_sum_all(y);
  backward(loss);
  CHECK_THROWS_AS(backward(loss), Error);  // tape consumed
}

TEST_CASE("gradient accumulates across backward calls on fresh graphs") {
  Tensor x = Tensor::from_values({2}, {1, 2}, true);
  backward(reduce_sum_all(x));
  backward(reduce_sum_all(x));
  CHECK(x.grad() == std::vector<double>{2, 2});
  x.zero_grad();
  CHECK(x.grad() == std::vector<double>{0, 0});
}

TEST_CASE("grad_check on exact linear and piecewise-linear cases") {
  Rng rng(17);
  Tensor x = random_tensor({4}, rng);
  CHECK(grad_check([](const Tensor& t) { return reduce_sum_all(t); }, x) < 1e-10);

  Tensor away = Tensor::from_values({5}, random_values_away_from_zero(5, rng));
  CHECK(grad_check([](const Tensor& t) { return reduce_sum_all(relu(t)); },
                   away) < 1e-6);
}

TEST_CASE("grad_check covers every differentiable op") {
  Rng rng(23);
  const double tol = 1e-4;

  auto sum_of = [](Tensor t) { return reduce_sum_all(t); };

  SUBCASE("binary ops") {
    Tensor other = random_tensor({2, 3}, rng);
    Tensor x = random_tensor({2, 3}, rng);
    CHECK(grad_check([&](const Tensor& t) { return reduce_sum_all(add(t, other)); }, x) < tol);
    CHECK(grad_check([&](const Tensor& t) { return reduce_sum_all(sub(other, t)); }, x) < tol);
    CHECK(grad_check([&](const Tensor& t) { return reduce_sum_all(mul(t, other)); }, x) < tol);
    Tensor denom = Tensor::from_values({2, 3},
                                       random_values_away_from_zero(6, rng, 0.3));
    CHECK(grad_check([&](const Tensor& t) { return reduce_sum_all(div(t, denom)); }, x) < tol);
    CHECK(grad_check([&](const Tensor& t) {
            return reduce_sum_all(div(denom, add(t, Tensor::full({2, 3}, 3.0))));
          }, x) < tol);
  }

  SUBCASE("broadcast gradients") {
    Tensor wide = random_tensor({3, 4}, rng);
    Tensor narrow = random_tensor({1, 4}, rng);
    CHECK(grad_check([&](const Tensor& t) { return reduce_sum_all(mul(wide, t)); },
                     narrow) < tol);
    Tensor vec = random_tensor({4}, rng);
    CHECK(grad_check([&](const Tensor& t) {
            return reduce_sum_all(mul(wide, exp(t)));
          }, vec) < tol);
  }

  SUBCASE("unary ops") {
    Tensor x = Tensor::from_values({3, 2}, random_values_away_from_zero(6, rng));
    CHECK(grad_check([&](const Tensor& t) { return reduce_sum_all(relu(t)); }, x) < tol);
    CHECK(grad_check([&](const Tensor& t) { return reduce_sum_all(exp(t)); }, x) < tol);
    CHECK(grad_check([&](const Tensor& t) { return reduce_sum_all(sigmoid(t)); }, x) < tol);
    Tensor positive = Tensor::from_values({4}, {0.5, 1.5, 2.0, 0.25});
    CHECK(grad_check([&](const Tensor& t) { return reduce_sum_all(log(t)); },
                     positive) < tol);
    CHECK(grad_check([&](const Tensor& t) { return reduce_sum_all(scale(t, -2.5)); }, x) < tol);
  }

  SUBCASE("matmul and shape ops") {
    Tensor a = random_tensor({3, 4}, rng);
    Tensor b = random_tensor({4, 2}, rng);
    CHECK(grad_check([&](const Tensor& t) { return reduce_sum_all(mul(matmul(t, b), matmul(t, b))); }, a) < tol);
    CHECK(grad_check([&](const Tensor& t) { return reduce_sum_all(exp(matmul(a, t))); }, b) < tol);
    CHECK(grad_check([&](const Tensor& t) {
            return reduce_sum_all(mul(transpose_last2(t), transpose_last2(t)));
          }, a) < tol);
    CHECK(grad_check([&](const Tensor& t) {
            return reduce_sum_all(sigmoid(reshape(t, {2, 6})));
          }, random_tensor({3, 4}, rng)) < tol);
  }

  SUBCASE("softmax, reductions, gather") {
    Tensor x = random_tensor({3, 5}, rng);
    CHECK(grad_check([&](const Tensor& t) {
            Tensor w = softmax_lastdim(t);
            return reduce_sum_all(mul(w, w));
          }, x) < tol);
    CHECK(grad_check([&](const Tensor& t) {
            return reduce_sum_all(exp(reduce_sum_axis(t, 1)));
          }, x) < tol);
    CHECK(grad_check([&](const Tensor& t) { return reduce_mean_all(mul(t, t)); }, x) < tol);
    // max: keep entries separated so finite differences stay off the ties
    Tensor spread = Tensor::from_values({3, 2}, {0.1, 1.0, 2.0, -0.5, 0.7, 3.0});
    CHECK(grad_check([&](const Tensor& t) {
            return reduce_sum_all(exp(reduce_max_axis(t, 0)));
          }, spread) < tol);
    const std::vector<std::size_t> rows{2, 0, 2};
    CHECK(grad_check([&](const Tensor& t) {
            return reduce_sum_all(mul(gather_rows(t, rows), gather_rows(t, rows)));
          }, x) < tol);
  }

  SUBCASE("losses") {
    Tensor logits = random_tensor({3, 4}, rng);
    const std::vector<int> labels{2, 0, 3};
    CHECK(grad_check([&](const Tensor& t) {
            return cross_entropy_with_logits(t, labels);
          }, logits) < tol);
    Tensor raw = random_tensor({6}, rng);
    const std::vector<double> targets{0, 1, 1, 0, 1, 0};
    CHECK(grad_check([&](const Tensor& t) { return bce_with_logits(t, targets); },
                     raw) < tol);
    // keep |pred - target| away from the smooth-l1 kink at beta
    Tensor pred = Tensor::from_values({4}, {0.2, -0.3, 2.4, -1.9});
    const std::vector<double> centers{0.0, 0.0, 0.0, 0.0};
    CHECK(grad_check([&](const Tensor& t) { return smooth_l1(t, centers); },
                     pred) < tol);
  }
}

TEST_CASE("broadcast backward equals loop-oracle gradient") {
  // d/da sum(a*b) with a (1,3) against b (4,3): gradient sums over the
  // stretched axis; compare against an explicit loop.
  Rng rng(29);
  const auto av = random_values(3, rng);
  const auto bv = random_values(12, rng);
  Tensor a = Tensor::from_values({1, 3}, av, true);
  Tensor b = Tensor::from_values({4, 3}, bv);
  backward(reduce_sum_all(mul(a, b)));
  std::vector<double> expected(3, 0.0);
  for (std::size_t i = 0; i < 4; ++i)
    for (std::size_t j = 0; j < 3; ++j) expected[j] += bv[i * 3 + j];
  CHECK(max_abs_diff(a.grad(), expected) < 1e-12);
}

TEST_CASE("gather backward accumulates repeated rows") {
  Tensor x = Tensor::from_values({3, 2}, {1, 2, 3, 4, 5, 6}, true);
  const std::vector<std::size_t> rows{1, 1};
  backward(reduce_sum_all(gather_rows(x, rows)));
  CHECK(x.grad() == std::vector<double>{0, 0, 2, 2, 0, 0});
  CHECK_THROWS_AS(gather_rows(x, {5}), Error);
}

TEST_CASE("forward results are bit-identical across runs") {
  auto run = [] {
    Rng rng(1234);
    Tensor a = random_tensor({6, 7}, rng);
    Tensor b = random_tensor({7, 5}, rng);
    Tensor c = softmax_lastdim(matmul(a, b));
    return reduce_sum_all(mul(c, c)).item();
  };
  const double first = run();
  const double second = run();
  CHECK(first == second);
}

TEST_CASE("no-grad mode skips the tape") {
  Tensor x = Tensor::from_values({2}, {1, 2}, true);
  NoGradGuard guard;
  Tensor y = reduce_sum_all(mul(x, x));
  CHECK_FALSE(y.requires_grad());
  CHECK_THROWS_AS(backward(y), Error);
}

TEST_CASE("losses validate their inputs") {
  Tensor logits = Tensor::from_values({2, 3}, {1, 2, 3, 4, 5, 6});
  CHECK_THROWS_AS(cross_entropy_with_logits(logits, {0}), Error);
  CHECK_THROWS_AS(cross_entropy_with_logits(logits, {0, 5}), Error);
  Tensor raw = Tensor::from_values({2}, {0.5, -0.5});
  CHECK_THROWS_AS(bce_with_logits(raw, {0.5}), Error);
  CHECK_THROWS_AS(bce_with_logits(raw, {2.0, 0.0}), Error);
  CHECK_THROWS_AS(smooth_l1(raw, {1.0}), Error);
}
