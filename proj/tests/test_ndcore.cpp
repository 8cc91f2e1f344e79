#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <cmath>
#include <random>

#include "oracles.hpp"
#include "protoflow/error.hpp"
#include "protoflow/gradcheck.hpp"
#include "protoflow/ops.hpp"
#include "protoflow/rng.hpp"
#include "protoflow/tape.hpp"
#include "protoflow/tensor.hpp"

using namespace protoflow;

namespace {

Tensor rnd(std::vector<std::size_t> shape, Rng& rng, double lo = -2.0,
           double hi = 2.0) {
  return Tensor::uniform(std::move(shape), rng, lo, hi);
}

// Gradient of `loss_of(param)` checked against central differences, with the
// op under test wrapped so the loss is scalar.
double zoo_check(const std::function<Tensor(Parameter&)>& loss_of,
                 Parameter& p) {
  auto report = gradcheck([&]() { return loss_of(p); }, {&p});
  return report.max_rel_err;
}

}  // namespace

TEST_CASE("tensor construction validates shape and finiteness") {
  CHECK_THROWS_AS(Tensor::from({2, 2}, {1.0, 2.0, 3.0}), ShapeError);
  CHECK_THROWS_AS(Tensor::from({2}, {1.0, std::nan("")}), NumericError);
  CHECK_THROWS_AS(Tensor::from({2}, {1.0, INFINITY}), NumericError);
  CHECK_THROWS_AS(Tensor::zeros({0}), ShapeError);
  CHECK_THROWS_AS(Tensor::zeros({2, 3, 4}), ShapeError);
  Tensor t = Tensor::from({2, 2}, {1.0, 2.0, 3.0, 4.0});
  CHECK(t.at(1, 0) == 3.0);
  CHECK(t.numel() == 4);
  CHECK(Tensor::scalar(5.0).item() == 5.0);
}

TEST_CASE("matmul equals the naive triple loop bit for bit") {
  Rng rng(42);
  for (auto [m, k, n] : {std::tuple<std::size_t, std::size_t, std::size_t>{3, 4, 2},
                         {7, 13, 5},
                         {1, 1, 1},
                         {5, 9, 12}}) {
    Tensor a = rnd({m, k}, rng);
    Tensor b = rnd({k, n}, rng);
    Tensor c = matmul(a, b);
    auto ref = oracle::matmul(a.data(), m, k, b.data(), n);
    for (std::size_t i = 0; i < c.numel(); ++i) CHECK(c.at(i) == ref[i]);
  }
  CHECK_THROWS_AS(matmul(Tensor::zeros({2, 3}), Tensor::zeros({2, 3})),
                  ShapeError);
}

TEST_CASE("softmax is stable and matches an extended-precision oracle") {
  Tensor big = softmax(Tensor::from({2}, {1000.0, 0.0}), 0);
  CHECK(big.at(0) == doctest::Approx(1.0).epsilon(1e-12));
  CHECK(std::fabs(big.at(1)) < 1e-12);

  Rng rng(7);
  for (int trial = 0; trial < 50; ++trial) {
    const std::size_t n = 1 + rng.uniform_int(7);
    Tensor x = rnd({n}, rng, -30.0, 30.0);
    Tensor y = softmax(x, 0);
    auto ref = oracle::softmax_ld(x.data());
    for (std::size_t i = 0; i < n; ++i)
      CHECK(std::fabs(y.at(i) - ref[i]) <= 1e-15);
    double s = 0.0;
    for (std::size_t i = 0; i < n; ++i) s += y.at(i);
    CHECK(s == doctest::Approx(1.0).epsilon(1e-12));
  }

  // Axis semantics on rank 2.
  Tensor m = Tensor::from({2, 3}, {1.0, 2.0, 3.0, 0.5, 0.5, 0.5});
  Tensor rows = softmax(m, 1);
  for (std::size_t i = 0; i < 2; ++i) {
    double s = rows.at(i, 0) + rows.at(i, 1) + rows.at(i, 2);
    CHECK(s == doctest::Approx(1.0).epsilon(1e-12));
  }
  Tensor colsft = softmax(m, 0);
  for (std::size_t j = 0; j < 3; ++j) {
    double s = colsft.at(0, j) + colsft.at(1, j);
    CHECK(s == doctest::Approx(1.0).epsilon(1e-12));
  }
  CHECK_THROWS_AS(softmax(m, 2), ShapeError);
}

TEST_CASE("elu matches its closed form") {
  Tensor x = Tensor::from({4}, {1.0, 0.0, -1.0, -20.0});
  Tensor y = elu(x);
  CHECK(y.at(0) == 1.0);
  CHECK(y.at(1) == 0.0);
  CHECK(y.at(2) == std::expm1(-1.0));
  CHECK(y.at(3) == std::expm1(-20.0));
}

TEST_CASE("cosine similarity basics") {
  Tensor e0 = Tensor::from({3}, {1.0, 0.0, 0.0});
  Tensor e1 = Tensor::from({3}, {0.0, 1.0, 0.0});
  CHECK(std::fabs(cosine_similarity(e0, e1).item()) <= 1e-15);
  Tensor v = Tensor::from({3}, {0.3, -0.4, 1.1});
  CHECK(cosine_similarity(v, scale(v, 3.0)).item() ==
        doctest::Approx(1.0).epsilon(1e-15));
  CHECK_THROWS_AS(cosine_similarity(v, Tensor::zeros({3})), NumericError);
  CHECK_THROWS_AS(cosine_similarity(v, Tensor::zeros({4})), ShapeError);
}

TEST_CASE("broadcasting is restricted to scalar and equal shapes") {
  Tensor m = Tensor::zeros({2, 3});
  Tensor v = Tensor::zeros({3});
  CHECK_THROWS_AS(add(m, v), ShapeError);
  CHECK_NOTHROW(add(m, Tensor::scalar(1.0)));
  CHECK_NOTHROW(add_rowvec(m, v));
  CHECK_THROWS_AS(add_rowvec(m, Tensor::zeros({2})), ShapeError);
}

TEST_CASE("domain violations raise errors") {
  CHECK_THROWS_AS(log(Tensor::from({2}, {1.0, 0.0})), NumericError);
  CHECK_THROWS_AS(log(Tensor::from({1}, {-3.0})), NumericError);
  CHECK_THROWS_AS(sqrt(Tensor::from({1}, {-1e-12})), NumericError);
  CHECK_THROWS_AS(divide(Tensor::scalar(1.0), Tensor::from({2}, {2.0, 0.0})),
                  NumericError);
  CHECK_THROWS_AS(divide(Tensor::scalar(1.0), 0.0), NumericError);
}

TEST_CASE("simple backward: d(x*x)/dx = 2x exactly") {
  Parameter x("x", Tensor::scalar(3.0));
  Tape tape;
  {
    TapeScope scope(tape);
    Tensor xv = x.use();
    Tensor y = mul(xv, xv);
    tape.backward(y);
  }
  CHECK(x.grad().item() == 6.0);
}

TEST_CASE("diamond graph accumulates and visits each node once") {
  Parameter x("x", Tensor::from({3}, {1.0, -2.0, 0.5}));
  Tape tape;
  {
    TapeScope scope(tape);
    Tensor xv = x.use();
    Tensor sq = mul(xv, xv);
    Tensor z = sum(add(sq, sq));  // 2*x^2 summed
    tape.backward(z);
    CHECK(tape.last_backward_visits() == tape.size());
  }
  for (std::size_t i = 0; i < 3; ++i)
    CHECK(x.grad().at(i) == 4.0 * x.value().at(i));
}

TEST_CASE("backward preconditions") {
  Parameter x("x", Tensor::from({2}, {1.0, 2.0}));
  Tape tape;
  TapeScope scope(tape);
  Tensor y = mul(x.use(), x.use());
  CHECK_THROWS_AS(tape.backward(y), ShapeError);  // non-scalar loss
  Tensor off_tape = Tensor::scalar(1.0);
  CHECK_THROWS_AS(tape.backward(off_tape), NumericError);
}

TEST_CASE("parameter gradients accumulate until zeroed") {
  Parameter x("x", Tensor::scalar(2.0));
  for (int pass = 0; pass < 2; ++pass) {
    Tape tape;
    TapeScope scope(tape);
    Tensor y = mul(x.use(), x.use());
    tape.backward(y);
  }
  CHECK(x.grad().item() == 8.0);  // two passes of 2x = 4
  x.zero_grad();
  CHECK(x.grad().item() == 0.0);
}

TEST_CASE("variable gradients are readable from the tape") {
  Tape tape;
  TapeScope scope(tape);
  Tensor x = variable(Tensor::from({2}, {3.0, -1.0}));
  Tensor loss = sum(mul(x, x));
  tape.backward(loss);
  const Tensor& g = tape.grad_of(x);
  CHECK(g.at(0) == 6.0);
  CHECK(g.at(1) == -2.0);
}

TEST_CASE("tensors from a dead tape act as constants later") {
  Tensor leaked;
  {
    Tape tape;
    TapeScope scope(tape);
    leaked = variable(Tensor::scalar(1.5));
    CHECK(leaked.tracked());
  }
  Parameter x("x", Tensor::scalar(2.0));
  Tape tape2;
  TapeScope scope(tape2);
  Tensor y = mul(x.use(), leaked);
  tape2.backward(y);
  CHECK(x.grad().item() == 1.5);  // leaked contributes as a plain constant
}

TEST_CASE("concat and split round-trip on both axes") {
  Rng rng(3);
  Tensor a = rnd({2, 3}, rng), b = rnd({4, 3}, rng);
  Tensor cat0 = concat({a, b}, 0);
  auto back0 = split(cat0, 0, {2, 4});
  CHECK(oracle::max_abs_diff(back0[0].data(), a.data()) == 0.0);
  CHECK(oracle::max_abs_diff(back0[1].data(), b.data()) == 0.0);

  Tensor c = rnd({2, 5}, rng);
  Tensor cat1 = concat({a, c}, 1);
  CHECK(cat1.cols() == 8);
  auto back1 = split(cat1, 1, {3, 5});
  CHECK(oracle::max_abs_diff(back1[0].data(), a.data()) == 0.0);
  CHECK(oracle::max_abs_diff(back1[1].data(), c.data()) == 0.0);

  Tensor v1 = rnd({3}, rng), v2 = rnd({2}, rng);
  Tensor catv = concat({v1, v2}, 0);
  CHECK(catv.numel() == 5);
  CHECK_THROWS_AS(concat({a, c}, 0), ShapeError);
  CHECK_THROWS_AS(concat({v1, v2}, 1), ShapeError);
}

TEST_CASE("rng streams are deterministic and portable") {
  // The standard pins the 10000th output of a default-seeded mt19937_64.
  std::mt19937_64 reference(5489u);
  std::uint64_t v = 0;
  for (int i = 0; i < 10000; ++i) v = reference();
  CHECK(v == 9981545732273789042ull);

  Rng a(123), b(123);
  for (int i = 0; i < 100; ++i) CHECK(a.normal() == b.normal());
  Rng s1 = Rng::derive(9, 1), s2 = Rng::derive(9, 2);
  CHECK(s1.uniform() != s2.uniform());

  Rng r1(5), r2(5);
  Tensor t1 = Tensor::randn({4, 4}, r1);
  Tensor t2 = Tensor::randn({4, 4}, r2);
  CHECK(oracle::max_abs_diff(t1.data(), t2.data()) == 0.0);
}

TEST_CASE("gradcheck validates every op against central differences") {
  Rng rng(2024);
  const double tol = 1e-6;

  SUBCASE("elementwise and unary") {
    Parameter p("p", rnd({3, 4}, rng));
    Tensor other = rnd({3, 4}, rng);
    CHECK(zoo_check([&](Parameter& q) { return sum(add(q.use(), other)); }, p) <= tol);
    CHECK(zoo_check([&](Parameter& q) { return sum(sub(other, q.use())); }, p) <= tol);
    CHECK(zoo_check([&](Parameter& q) { return sum(mul(q.use(), other)); }, p) <= tol);
    CHECK(zoo_check([&](Parameter& q) { return sum(mul(q.use(), q.use())); }, p) <= tol);
    CHECK(zoo_check([&](Parameter& q) { return sum(divide(q.use(), add(mul(other, other), 1.0))); }, p) <= tol);
    CHECK(zoo_check([&](Parameter& q) { return sum(divide(1.0, add(mul(q.use(), q.use()), 1.0))); }, p) <= tol);
    CHECK(zoo_check([&](Parameter& q) { return sum(elu(q.use())); }, p) <= tol);
    CHECK(zoo_check([&](Parameter& q) { return sum(exp(scale(q.use(), 0.5))); }, p) <= tol);
    CHECK(zoo_check([&](Parameter& q) { return sum(log(add(mul(q.use(), q.use()), 0.5))); }, p) <= tol);
    CHECK(zoo_check([&](Parameter& q) { return sum(sqrt(add(mul(q.use(), q.use()), 0.5))); }, p) <= tol);
    CHECK(zoo_check([&](Parameter& q) { return mean(q.use()); }, p) <= tol);
    CHECK(zoo_check([&](Parameter& q) { return sum(clamp_min(q.use(), 0.25)); }, p) <= tol);
  }

  SUBCASE("scalar broadcast sides") {
    Parameter s("s", Tensor::scalar(0.7));
    Tensor m = rnd({2, 3}, rng);
    CHECK(zoo_check([&](Parameter& q) { return sum(add(m, q.use())); }, s) <= tol);
    CHECK(zoo_check([&](Parameter& q) { return sum(mul(m, q.use())); }, s) <= tol);
    CHECK(zoo_check([&](Parameter& q) { return sum(divide(m, q.use())); }, s) <= tol);
  }

  SUBCASE("matrix ops") {
    Parameter w("w", rnd({3, 4}, rng));
    Tensor x = rnd({4, 2}, rng);
    Tensor left = rnd({5, 3}, rng);
    CHECK(zoo_check([&](Parameter& q) { return sum(matmul(q.use(), x)); }, w) <= tol);
    CHECK(zoo_check([&](Parameter& q) { return sum(matmul(left, q.use())); }, w) <= tol);
    CHECK(zoo_check([&](Parameter& q) { return sum(transpose(q.use())); }, w) <= tol);
    CHECK(zoo_check([&](Parameter& q) { return sum(mul(transpose(q.use()), transpose(q.use()))); }, w) <= tol);
    CHECK(zoo_check([&](Parameter& q) { return sum(row(q.use(), 1)); }, w) <= tol);
    CHECK(zoo_check([&](Parameter& q) { return sum(mul(colsum(q.use()), colsum(q.use()))); }, w) <= tol);
    CHECK(zoo_check([&](Parameter& q) { return sum(row_sqnorm(q.use())); }, w) <= tol);
    Tensor dirs = rnd({3, 4}, rng);
    CHECK(zoo_check([&](Parameter& q) { return sum(mul(rows_normalize(q.use()), dirs)); }, w) <= tol);
  }

  SUBCASE("row and column vector ops") {
    Parameter v("v", rnd({4}, rng));
    Parameter u("u", rnd({3}, rng));
    Tensor m = rnd({3, 4}, rng);
    CHECK(zoo_check([&](Parameter& q) { return sum(mul(broadcast_row(q.use(), 5), broadcast_row(q.use(), 5))); }, v) <= tol);
    CHECK(zoo_check([&](Parameter& q) { return sum(mul(add_rowvec(m, q.use()), m)); }, v) <= tol);
    CHECK(zoo_check([&](Parameter& q) { return sum(mul(mul_rowvec(m, q.use()), m)); }, v) <= tol);
    CHECK(zoo_check([&](Parameter& q) { return sum(mul(mul_colvec(m, q.use()), m)); }, u) <= tol);
  }

  SUBCASE("concat and softmax") {
    Parameter a("a", rnd({2, 3}, rng));
    Tensor b = rnd({2, 2}, rng);
    Tensor weights = rnd({2, 3}, rng);
    CHECK(zoo_check([&](Parameter& q) {
            Tensor cat = concat({q.use(), b}, 1);
            return sum(mul(cat, cat));
          }, a) <= tol);
    CHECK(zoo_check([&](Parameter& q) {
            Tensor cat = concat({q.use(), q.use()}, 0);
            return sum(mul(cat, cat));
          }, a) <= tol);
    CHECK(zoo_check([&](Parameter& q) { return sum(mul(softmax(q.use(), 1), weights)); }, a) <= tol);
    CHECK(zoo_check([&](Parameter& q) { return sum(mul(softmax(q.use(), 0), weights)); }, a) <= tol);
  }

  SUBCASE("cosine similarity") {
    Parameter a("a", rnd({5}, rng));
    Tensor b = rnd({5}, rng);
    CHECK(zoo_check([&](Parameter& q) { return cosine_similarity(q.use(), b); }, a) <= tol);
    CHECK(zoo_check([&](Parameter& q) { return cosine_similarity(b, q.use()); }, a) <= tol);
  }
}

TEST_CASE("composite gradchecks at tighter tolerances") {
  Rng rng(11);
  // Quadratic ||W x||^2: near machine-precision agreement expected.
  Parameter w("w", rnd({3, 3}, rng));
  Tensor x = rnd({3, 1}, rng);
  auto quad = gradcheck(
      [&]() {
        Tensor y = matmul(w.use(), x);
        return sum(mul(y, y));
      },
      {&w});
  CHECK(quad.max_rel_err <= 1e-9);

  // Single linear layer + ELU + softmax cross-entropy.
  Parameter weights("weights", rnd({4, 3}, rng, -0.8, 0.8));
  Parameter bias("bias", rnd({3}, rng, -0.5, 0.5));
  Tensor input = rnd({2, 4}, rng);
  Tensor onehot = Tensor::from({2, 3}, {1, 0, 0, 0, 0, 1});
  auto ce = gradcheck(
      [&]() {
        Tensor h = elu(add_rowvec(matmul(input, weights.use()), bias.use()));
        Tensor p = softmax(h, 1);
        return scale(sum(mul(onehot, log(p))), -0.5);
      },
      {&weights, &bias});
  CHECK(ce.max_rel_err <= 1e-6);
}

TEST_CASE("gradcheck flags non-deterministic losses") {
  int calls = 0;
  Parameter p("p", Tensor::scalar(1.0));
  CHECK_THROWS_AS(gradcheck(
                      [&]() {
                        ++calls;
                        return scale(p.use(), 1.0 + 1e-12 * calls);
                      },
                      {&p}),
                  NumericError);
}
