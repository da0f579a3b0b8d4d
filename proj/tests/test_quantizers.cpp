#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <cmath>
#include <set>

#include "sdq/quantizers.hpp"
#include "sdq/rng.hpp"

using namespace sdq;

namespace {

Array rand_array(Rng& rng, Shape shape, double lo, double hi) {
  Array a(std::move(shape));
  for (double& x : a.data) x = rng.uniform(lo, hi);
  return a;
}

}  // namespace

TEST_CASE("quantize_unit backward is the upstream gradient, bit for bit") {
  Rng rng(31);
  for (int trial = 0; trial < 50; ++trial) {
    const int bits = 1 + static_cast<int>(rng.index(8));
    const Array x = rand_array(rng, {32}, 0.0, 1.0);
    const Array co = rand_array(rng, {32}, -3.0, 3.0);
    Tape t;
    Var v = t.leaf(x);
    Var q = quantize_unit(t, v, bits);
    t.backward(t.sum(t.mul(q, t.constant(co))));
    for (std::size_t i = 0; i < x.size(); ++i) {
      CHECK(v.grad()[i] == co[i]);  // exact, not approximate
    }
  }
}

TEST_CASE("quantize_unit snaps to the b-bit grid") {
  Tape t;
  Var v = t.leaf(Array({5}, {0.0, 0.24, 0.26, 0.5, 1.0}));
  const Array& q = quantize_unit(t, v, 1).value();  // two levels: 0, 1
  CHECK(q[0] == 0.0);
  CHECK(q[1] == 0.0);
  CHECK(q[2] == 0.0);
  CHECK(q[3] == 1.0);  // halfway rounds away from zero
  CHECK(q[4] == 1.0);

  Tape t2;
  Var v2 = t2.leaf(Array({3}, {0.0, 0.4, 1.0}));
  const Array& q2 = quantize_unit(t2, v2, 2).value();  // levels k/3
  CHECK(q2[0] == 0.0);
  CHECK(q2[1] == doctest::Approx(1.0 / 3.0).epsilon(1e-15));  // round(1.2) = 1
  CHECK(q2[2] == 1.0);
}

TEST_CASE("quantize_unit rejects out-of-range input and bad bit counts") {
  Tape t;
  Var bad = t.leaf(Array({2}, {0.5, 1.1}));
  CHECK_THROWS_AS((void)quantize_unit(t, bad, 4), ContractError);
  Var ok = t.leaf(Array({2}, {0.5, 0.6}));
  CHECK_THROWS_AS((void)quantize_unit(t, ok, 0), ContractError);
  CHECK_THROWS_AS((void)quantize_unit(t, ok, 33), ContractError);
}

TEST_CASE("quantize_unit is idempotent and monotone") {
  Rng rng(32);
  for (const int bits : {1, 3, 5, 8}) {
    const Array x = rand_array(rng, {128}, 0.0, 1.0);
    Tape t;
    Var v = t.leaf(x);
    Var q1 = quantize_unit(t, v, bits);
    Var q2 = quantize_unit(t, q1, bits);
    for (std::size_t i = 0; i < x.size(); ++i) CHECK(q1.value()[i] == q2.value()[i]);

    // Monotone: sorted inputs quantize to a nondecreasing sequence.
    Array xs = x;
    std::sort(xs.data.begin(), xs.data.end());
    Tape ts;
    const Array& qs = quantize_unit(ts, ts.leaf(xs), bits).value();
    for (std::size_t i = 1; i < qs.size(); ++i) CHECK(qs[i] >= qs[i - 1]);
  }
}

TEST_CASE("quantize_unit output takes at most 2^b distinct values") {
  Rng rng(33);
  for (const int bits : {1, 2, 3, 4}) {
    const Array x = rand_array(rng, {4096}, 0.0, 1.0);
    Tape t;
    const Array& q = quantize_unit(t, t.leaf(x), bits).value();
    std::set<double> vals(q.data.begin(), q.data.end());
    CHECK(vals.size() <= (std::size_t{1} << bits));
    // Dense sampling hits every level.
    CHECK(vals.size() == (std::size_t{1} << bits));
  }
}

TEST_CASE("quantize_weight matches an element-by-element recomputation") {
  Rng rng(34);
  const Array w = rand_array(rng, {64}, -2.5, 2.5);
  const int bits = 3;

  Tape t;
  const Array& got = quantize_weight(t, t.leaf(w), bits).value();

  // Independent recomputation of the tanh-normalized quantizer.
  double m = 0.0;
  for (std::size_t i = 0; i < w.size(); ++i) m = std::max(m, std::abs(std::tanh(w[i])));
  const double levels = std::ldexp(1.0, bits) - 1.0;
  for (std::size_t i = 0; i < w.size(); ++i) {
    const double unit = std::tanh(w[i]) / (2.0 * m) + 0.5;
    const double expect = 2.0 * (std::round(unit * levels) / levels) - 1.0;
    CHECK(got[i] == expect);
  }

  // Value-level twin is bitwise identical to the tape op.
  const Array vals = quantize_weight_values(w, bits);
  for (std::size_t i = 0; i < w.size(); ++i) CHECK(got[i] == vals[i]);
}

TEST_CASE("quantize_weight output stays on the symmetric grid in [-1,1]") {
  Rng rng(35);
  for (const int bits : {1, 2, 4}) {
    const Array w = rand_array(rng, {512}, -4.0, 4.0);
    Tape t;
    const Array& q = quantize_weight(t, t.leaf(w), bits).value();
    const double levels = std::ldexp(1.0, bits) - 1.0;
    std::set<double> vals;
    for (std::size_t i = 0; i < q.size(); ++i) {
      CHECK(q[i] >= -1.0);
      CHECK(q[i] <= 1.0);
      // On the grid 2k/(2^b-1) - 1.
      const double k = (q[i] + 1.0) * levels / 2.0;
      CHECK(std::abs(k - std::round(k)) < 1e-9);
      vals.insert(q[i]);
    }
    CHECK(vals.size() <= (std::size_t{1} << bits));
    // The elementwise max of |tanh(w)| maps to an endpoint.
    CHECK(*vals.begin() == -1.0);
    CHECK(*vals.rbegin() == 1.0);
  }
}

TEST_CASE("quantize_weight of an all-zero tensor is all zeros") {
  Tape t;
  Var v = t.leaf(Array({8}));
  Var q = quantize_weight(t, v, 4);
  for (std::size_t i = 0; i < q.size(); ++i) CHECK(q.value()[i] == 0.0);
  t.backward(t.sum(q));  // gradient path stays alive and is zero
  for (std::size_t i = 0; i < 8; ++i) CHECK(v.grad()[i] == 0.0);
}

TEST_CASE("quantize_activation clamps before quantizing and masks the gradient") {
  Tape t;
  Var v = t.leaf(Array({4}, {-0.5, 0.3, 0.75, 1.5}));
  Var q = quantize_activation(t, v, 2);
  CHECK(q.value()[0] == 0.0);
  CHECK(q.value()[1] == doctest::Approx(1.0 / 3.0).epsilon(1e-15));
  CHECK(q.value()[2] == doctest::Approx(2.0 / 3.0).epsilon(1e-15));
  CHECK(q.value()[3] == 1.0);

  t.backward(t.sum(q));
  CHECK(v.grad()[0] == 0.0);  // clamped below
  CHECK(v.grad()[1] == 1.0);  // straight through inside [0,1]
  CHECK(v.grad()[2] == 1.0);
  CHECK(v.grad()[3] == 0.0);  // clamped above
}

TEST_CASE("clamp quantizer lands on the anchored grid") {
  ClampQuantizer q{2, -1.0, 1.0};
  CHECK(q.step() == doctest::Approx(2.0 / 3.0).epsilon(1e-15));
  const Array w({5}, {-2.0, -0.4, 0.0, 0.4, 2.0});
  const Array out = quantize_clamped(w, q);
  const double s = 2.0 / 3.0;
  CHECK(out[0] == doctest::Approx(-2.0 * s).epsilon(1e-15));  // clamp to -1, round to -2s
  CHECK(out[1] == doctest::Approx(-s).epsilon(1e-15));
  CHECK(out[2] == 0.0);
  CHECK(out[3] == doctest::Approx(s).epsilon(1e-15));
  CHECK(out[4] == doctest::Approx(2.0 * s).epsilon(1e-15));

  ClampQuantizer bad{4, 1.0, 1.0};
  CHECK_THROWS_AS((void)bad.step(), ContractError);
}

TEST_CASE("expected error coefficient follows 1/(12 (2^b-1)^2)") {
  CHECK(expected_error_coeff(1) == doctest::Approx(1.0 / 12.0).epsilon(1e-15));
  CHECK(expected_error_coeff(2) == doctest::Approx(1.0 / 108.0).epsilon(1e-15));
  CHECK(expected_error_coeff(4) == doctest::Approx(1.0 / 2700.0).epsilon(1e-15));
  CHECK(expected_error_coeff(8) == doctest::Approx(1.0 / (12.0 * 255.0 * 255.0)).epsilon(1e-15));
}

TEST_CASE("mean squared clamp error tracks the coefficient (sampled)") {
  // Smoke-scale version of the Monte-Carlo oracle; the acceptance suite runs
  // the full-size one.
  Rng rng(36);
  const ClampQuantizer q{4, -1.0, 1.0};
  const std::size_t n = 200000;
  Array w({n});
  for (double& x : w.data) x = rng.uniform(-1.0, 1.0);
  const Array out = quantize_clamped(w, q);
  const double mse = quant_error_sq(w, out) / static_cast<double>(n);
  const double expect = expected_error_coeff(4) * q.range() * q.range();
  CHECK(mse == doctest::Approx(expect).epsilon(0.05));
}

TEST_CASE("quant_error_sq checks shapes") {
  const Array a({3}, {1, 2, 3});
  const Array b({4}, {1, 2, 3, 4});
  CHECK_THROWS_AS((void)quant_error_sq(a, b), ContractError);
  CHECK(quant_error_sq(a, a) == 0.0);
}
