#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <cmath>

#include "sdq/grad_check.hpp"
#include "sdq/rng.hpp"
#include "sdq/tape.hpp"

using namespace sdq;

namespace {

Array rand_array(Rng& rng, Shape shape, double lo, double hi) {
  Array a(std::move(shape));
  for (double& x : a.data) x = rng.uniform(lo, hi);
  return a;
}

// Scalarize a tensor-valued op with fixed random coefficients so every
// output coordinate feeds the loss with a distinct upstream gradient.
Var weighted_sum(Tape& t, Var v, const Array& coeffs) {
  return t.sum(t.mul(v, t.constant(coeffs)));
}

constexpr double kSmoothTol = 1e-6;
constexpr double kSteTol = 1e-5;

}  // namespace

TEST_CASE("elementwise ops match central differences") {
  Rng rng(11);
  const Array x = rand_array(rng, {3, 4}, -2.0, 2.0);
  const Array other = rand_array(rng, {3, 4}, 0.5, 2.0);  // safe as denominator
  const Array co = rand_array(rng, {3, 4}, -1.0, 1.0);

  auto check = [&](const ScalarFn& f) {
    const auto r = grad_check(f, x);
    CHECK(r.max_rel_err < kSmoothTol);
  };

  check([&](Tape& t, Var v) { return weighted_sum(t, t.add(v, t.constant(other)), co); });
  check([&](Tape& t, Var v) { return weighted_sum(t, t.sub(t.constant(other), v), co); });
  check([&](Tape& t, Var v) { return weighted_sum(t, t.mul(v, t.constant(other)), co); });
  check([&](Tape& t, Var v) { return weighted_sum(t, t.div(v, t.constant(other)), co); });
  check([&](Tape& t, Var v) { return weighted_sum(t, t.div(t.constant(other), t.add_const(v, 3.0)), co); });
  check([&](Tape& t, Var v) { return weighted_sum(t, t.neg(v), co); });
  check([&](Tape& t, Var v) { return weighted_sum(t, t.scale(v, -1.7), co); });
  check([&](Tape& t, Var v) { return weighted_sum(t, t.exp(t.scale(v, 0.5)), co); });
  check([&](Tape& t, Var v) { return weighted_sum(t, t.log(t.add_const(t.tanh(v), 2.0)), co); });
  check([&](Tape& t, Var v) { return weighted_sum(t, t.tanh(v), co); });
  check([&](Tape& t, Var v) { return weighted_sum(t, t.sigmoid(v), co); });
}

TEST_CASE("scalar broadcast on binary ops") {
  Rng rng(12);
  const Array x = rand_array(rng, {2, 3}, -1.0, 1.0);
  const Array co = rand_array(rng, {2, 3}, -1.0, 1.0);

  // tensor (x) scalar, gradient wrt the tensor
  auto r = grad_check(
      [&](Tape& t, Var v) { return weighted_sum(t, t.mul(v, t.scalar(0.7)), co); }, x);
  CHECK(r.max_rel_err < kSmoothTol);

  // gradient wrt the scalar itself
  const Array s = Array::scalar(0.8);
  r = grad_check(
      [&](Tape& t, Var v) { return weighted_sum(t, t.div(t.constant(x), v), co); }, s);
  CHECK(r.max_rel_err < kSmoothTol);

  Tape t;
  Var v = t.leaf(x);
  Var y = t.add(t.scalar(2.0), v);
  CHECK(y.shape() == Shape{2, 3});
  CHECK(y.value()[0] == doctest::Approx(x[0] + 2.0));
}

TEST_CASE("clamp masks gradient outside the range") {
  // Values placed well away from the clamp kinks so differences are clean.
  Array x({5}, {-2.0, -0.4, 0.1, 0.6, 1.9});
  Array co({5}, {1.0, -2.0, 3.0, -4.0, 5.0});
  const auto r = grad_check(
      [&](Tape& t, Var v) { return weighted_sum(t, t.clamp(v, -0.5, 0.8), co); }, x);
  CHECK(r.max_rel_err < kSmoothTol);

  Tape t;
  Var v = t.leaf(x);
  Var loss = weighted_sum(t, t.clamp(v, -0.5, 0.8), co);
  t.backward(loss);
  CHECK(v.grad()[0] == 0.0);   // below range
  CHECK(v.grad()[1] == -2.0);  // inside
  CHECK(v.grad()[4] == 0.0);   // above range
}

TEST_CASE("straight-through ops differentiate against the surrogate") {
  Rng rng(13);
  const Array x = rand_array(rng, {6}, -3.0, 3.0);
  const Array co = rand_array(rng, {6}, -1.0, 1.0);
  GradCheckOptions opts;
  opts.fd_on_surrogate = true;

  auto r = grad_check(
      [&](Tape& t, Var v) { return weighted_sum(t, t.round_ste(v), co); }, x, opts);
  CHECK(r.max_rel_err < kSteTol);

  r = grad_check(
      [&](Tape& t, Var v) { return weighted_sum(t, t.clamp_ste(v, -1.0, 1.0), co); }, x, opts);
  CHECK(r.max_rel_err < kSteTol);

  r = grad_check(
      [&](Tape& t, Var v) { return weighted_sum(t, t.hard_ge_ste(t.sigmoid(v), 0.5), co); }, x,
      opts);
  CHECK(r.max_rel_err < kSteTol);

  // Composite: the weight-quantizer shape tanh -> affine -> round -> affine.
  r = grad_check(
      [&](Tape& t, Var v) {
        Var u = t.add_const(t.scale(t.tanh(v), 0.3), 0.5);
        return weighted_sum(t, t.round_ste(t.scale(u, 15.0)), co);
      },
      x, opts);
  CHECK(r.max_rel_err < kSteTol);
}

TEST_CASE("round backward rule is pluggable") {
  Array x({3}, {0.2, 1.4, -2.6});
  Array co({3}, {1.0, 1.0, 1.0});

  Tape t1;
  Var v1 = t1.leaf(x);
  t1.backward(weighted_sum(t1, t1.round(v1, RoundBackward::kStraightThrough), co));
  CHECK(v1.grad()[0] == 1.0);
  CHECK(v1.grad()[2] == 1.0);

  Tape t2;
  Var v2 = t2.leaf(x);
  t2.backward(weighted_sum(t2, t2.round(v2, RoundBackward::kZero), co));
  CHECK(v2.grad()[0] == 0.0);
  CHECK(v2.grad()[2] == 0.0);

}

TEST_CASE("round is half away from zero") {
  Tape t;
  Var v = t.leaf(Array({6}, {0.5, 1.5, -0.5, -1.5, 2.5, -2.5}));
  const Array& out = t.round_ste(v).value();
  CHECK(out[0] == 1.0);
  CHECK(out[1] == 2.0);
  CHECK(out[2] == -1.0);
  CHECK(out[3] == -2.0);
  CHECK(out[4] == 3.0);
  CHECK(out[5] == -3.0);
}

TEST_CASE("matmul forward and gradient") {
  Tape t;
  Var a = t.leaf(Array({2, 2}, {1, 2, 3, 4}));
  Var b = t.leaf(Array({2, 2}, {5, 6, 7, 8}));
  const Array& out = t.matmul(a, b).value();
  CHECK(out[0] == 19.0);
  CHECK(out[1] == 22.0);
  CHECK(out[2] == 43.0);
  CHECK(out[3] == 50.0);

  Rng rng(14);
  const Array av = rand_array(rng, {3, 4}, -1.0, 1.0);
  const Array bv = rand_array(rng, {4, 2}, -1.0, 1.0);
  const Array co = rand_array(rng, {3, 2}, -1.0, 1.0);

  auto r = grad_check(
      [&](Tape& tt, Var v) { return weighted_sum(tt, tt.matmul(v, tt.constant(bv)), co); }, av);
  CHECK(r.max_rel_err < kSmoothTol);
  r = grad_check(
      [&](Tape& tt, Var v) { return weighted_sum(tt, tt.matmul(tt.constant(av), v), co); }, bv);
  CHECK(r.max_rel_err < kSmoothTol);
}

TEST_CASE("add_rowvec broadcasts bias over rows") {
  Rng rng(15);
  const Array a = rand_array(rng, {4, 3}, -1.0, 1.0);
  const Array b = rand_array(rng, {3}, -1.0, 1.0);
  const Array co = rand_array(rng, {4, 3}, -1.0, 1.0);

  auto r = grad_check(
      [&](Tape& t, Var v) { return weighted_sum(t, t.add_rowvec(v, t.constant(b)), co); }, a);
  CHECK(r.max_rel_err < kSmoothTol);
  r = grad_check(
      [&](Tape& t, Var v) { return weighted_sum(t, t.add_rowvec(t.constant(a), v), co); }, b);
  CHECK(r.max_rel_err < kSmoothTol);
}

TEST_CASE("conv2d forward against a hand computation") {
  Tape t;
  Var x = t.leaf(Array({1, 1, 3, 3}, {1, 2, 3, 4, 5, 6, 7, 8, 9}));
  Var w = t.leaf(Array({1, 1, 2, 2}, {1, 0, 0, 1}));
  const Array& out = t.conv2d(x, w, 1, 0).value();
  CHECK(out.shape == Shape{1, 1, 2, 2});
  CHECK(out[0] == 6.0);
  CHECK(out[1] == 8.0);
  CHECK(out[2] == 12.0);
  CHECK(out[3] == 14.0);
}

TEST_CASE("conv2d gradients, strided and padded") {
  Rng rng(16);
  const Array x = rand_array(rng, {2, 2, 5, 5}, -1.0, 1.0);
  const Array w = rand_array(rng, {3, 2, 3, 3}, -0.7, 0.7);

  for (const std::size_t stride : {std::size_t{1}, std::size_t{2}}) {
    for (const std::size_t pad : {std::size_t{0}, std::size_t{1}}) {
      // Output shape depends on stride and pad; derive it from a dry run.
      Tape dry;
      const Shape oshape =
          dry.conv2d(dry.constant(x), dry.constant(w), stride, pad).shape();
      const Array co = rand_array(rng, Shape(oshape), -1.0, 1.0);

      auto r = grad_check(
          [&](Tape& t, Var v) {
            return weighted_sum(t, t.conv2d(v, t.constant(w), stride, pad), co);
          },
          x);
      CHECK(r.max_rel_err < kSmoothTol);
      r = grad_check(
          [&](Tape& t, Var v) {
            return weighted_sum(t, t.conv2d(t.constant(x), v, stride, pad), co);
          },
          w);
      CHECK(r.max_rel_err < kSmoothTol);
    }
  }
}

TEST_CASE("global_avg_pool") {
  Rng rng(17);
  const Array x = rand_array(rng, {2, 3, 4, 4}, -1.0, 1.0);
  const Array co = rand_array(rng, {2, 3}, -1.0, 1.0);
  auto r = grad_check(
      [&](Tape& t, Var v) { return weighted_sum(t, t.global_avg_pool(v), co); }, x);
  CHECK(r.max_rel_err < kSmoothTol);
}

TEST_CASE("softmax and log_softmax rows") {
  Rng rng(18);
  const Array x = rand_array(rng, {3, 5}, -2.0, 2.0);
  const Array co = rand_array(rng, {3, 5}, -1.0, 1.0);

  Tape t;
  Var p = t.softmax_rows(t.leaf(x));
  for (std::size_t i = 0; i < 3; ++i) {
    double s = 0.0;
    for (std::size_t j = 0; j < 5; ++j) s += p.value()[i * 5 + j];
    CHECK(s == doctest::Approx(1.0).epsilon(1e-12));
  }

  auto r = grad_check(
      [&](Tape& tt, Var v) { return weighted_sum(tt, tt.softmax_rows(v), co); }, x);
  CHECK(r.max_rel_err < kSmoothTol);
  r = grad_check(
      [&](Tape& tt, Var v) { return weighted_sum(tt, tt.log_softmax_rows(v), co); }, x);
  CHECK(r.max_rel_err < kSmoothTol);
}

TEST_CASE("reductions") {
  Rng rng(19);
  Array x = rand_array(rng, {7}, -2.0, 2.0);
  // keep sum_abs and max_abs away from their kinks: no near-zero entries,
  // unique absolute maximum
  x[2] = 2.5;

  auto check = [&](const ScalarFn& f) {
    const auto r = grad_check(f, x);
    CHECK(r.max_rel_err < kSmoothTol);
  };
  check([](Tape& t, Var v) { return t.sum(v); });
  check([](Tape& t, Var v) { return t.mean(v); });
  check([](Tape& t, Var v) { return t.variance(v); });
  check([](Tape& t, Var v) { return t.sum_abs(v); });
  check([](Tape& t, Var v) { return t.sum_sq(v); });
  check([](Tape& t, Var v) { return t.max_abs(v); });

  Tape t;
  Var v = t.leaf(Array({4}, {1.0, -3.0, 3.0, 2.0}));
  Var m = t.max_abs(v);
  CHECK(m.item() == 3.0);
  t.backward(m);
  // Tie on |x| = 3: gradient routes to the first attaining element only.
  CHECK(v.grad()[1] == -1.0);
  CHECK(v.grad()[2] == 0.0);
}

TEST_CASE("variance matches the population formula") {
  Tape t;
  Var v = t.leaf(Array({4}, {1.0, 2.0, 3.0, 4.0}));
  CHECK(t.variance(v).item() == doctest::Approx(1.25).epsilon(1e-15));
}

TEST_CASE("gather picks and scatters") {
  Rng rng(20);
  const Array x = rand_array(rng, {6}, -1.0, 1.0);
  const std::vector<std::size_t> idx{0, 3, 3, 5};
  const Array co = rand_array(rng, {4}, -1.0, 1.0);

  auto r = grad_check(
      [&](Tape& t, Var v) { return weighted_sum(t, t.gather(v, idx), co); }, x);
  CHECK(r.max_rel_err < kSmoothTol);

  Tape t;
  Var v = t.leaf(x);
  t.backward(t.sum(t.gather(v, idx)));
  CHECK(v.grad()[3] == 2.0);  // repeated index accumulates
  CHECK(v.grad()[1] == 0.0);
}

TEST_CASE("identical graphs produce bitwise identical values and gradients") {
  auto run = [](Array* grads_out) {
    Rng rng(21);
    Array x = rand_array(rng, {4, 4}, -1.0, 1.0);
    Array w = rand_array(rng, {4, 4}, -1.0, 1.0);
    Tape t;
    Var xv = t.leaf(x);
    Var wv = t.leaf(w);
    Var h = t.tanh(t.matmul(xv, wv));
    Var loss = t.add(t.mean(t.sum_sq(h)), t.variance(h));
    t.backward(loss);
    *grads_out = wv.grad();
    return loss.item();
  };
  Array g1, g2;
  const double l1 = run(&g1);
  const double l2 = run(&g2);
  CHECK(l1 == l2);
  REQUIRE(g1.size() == g2.size());
  for (std::size_t i = 0; i < g1.size(); ++i) CHECK(g1[i] == g2[i]);
}

TEST_CASE("gradient accumulation is linear") {
  Rng rng(22);
  const Array x = rand_array(rng, {5}, 0.5, 2.0);

  auto grad_of = [&](const ScalarFn& f) {
    Tape t;
    Var v = t.leaf(x);
    t.backward(f(t, v));
    return v.grad();
  };

  const Array gf = grad_of([](Tape& t, Var v) { return t.sum_sq(v); });
  const Array gg = grad_of([](Tape& t, Var v) { return t.sum(t.log(v)); });
  const Array gc = grad_of([](Tape& t, Var v) {
    return t.add(t.scale(t.sum_sq(v), 2.0), t.scale(t.sum(t.log(v)), -3.0));
  });
  for (std::size_t i = 0; i < x.size(); ++i) {
    CHECK(gc[i] == doctest::Approx(2.0 * gf[i] - 3.0 * gg[i]).epsilon(1e-12));
  }
}

TEST_CASE("tape contracts") {
  Tape t;
  Var v = t.leaf(Array({3}, {1.0, 2.0, 3.0}));
  Var loss = t.sum(v);
  t.backward(loss);
  CHECK(t.spent());
  CHECK_THROWS_AS(t.backward(loss), ContractError);
  CHECK_THROWS_AS((void)t.sum(v), ContractError);  // frozen after backward

  Tape t2;
  Var a = t2.leaf(Array({2, 3}, {1, 2, 3, 4, 5, 6}));
  CHECK_THROWS_AS((void)t2.backward(a), ContractError);  // non-scalar loss

  Tape t3;
  Var m1 = t3.leaf(Array({2, 3}, {1, 2, 3, 4, 5, 6}));
  Var m2 = t3.leaf(Array({2, 3}, {1, 2, 3, 4, 5, 6}));
  CHECK_THROWS_AS((void)t3.matmul(m1, m2), ContractError);
  CHECK_THROWS_AS((void)t3.add(m1, t3.leaf(Array({4}, {1, 2, 3, 4}))), ContractError);

  Tape t4;
  Var z = t4.leaf(Array({2}, {1.0, 0.0}));
  CHECK_THROWS_AS((void)t4.div(t4.scalar(1.0), z), NumericError);
  CHECK_THROWS_AS((void)t4.log(t4.scalar(-1.0)), NumericError);

  Tape t5;
  CHECK_THROWS_AS((void)t5.sum(Var()), ContractError);  // invalid handle
}
