#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <cmath>

#include "sdq/dbp.hpp"
#include "sdq/grad_check.hpp"
#include "sdq/quantizers.hpp"

using namespace sdq;

namespace {

Array rand_array(Rng& rng, Shape shape, double lo, double hi) {
  Array a(std::move(shape));
  for (double& x : a.data) x = rng.uniform(lo, hi);
  return a;
}

}  // namespace

TEST_CASE("gumbel draws have the right first two moments") {
  Rng rng(41);
  const std::size_t n = 100000;
  double sum = 0.0, sumsq = 0.0;
  for (std::size_t i = 0; i < n; ++i) {
    const double g = sample_gumbel(rng);
    sum += g;
    sumsq += g * g;
  }
  const double mean = sum / n;
  const double var = sumsq / n - mean * mean;
  const double euler = 0.57721566490153286;
  const double pi = 3.14159265358979323846;
  // 3 sigma bands at n = 1e5.
  CHECK(std::abs(mean - euler) < 0.02);
  CHECK(std::abs(var - pi * pi / 6.0) < 0.08);
}

TEST_CASE("DbpTable initializes at the top candidate with beta 1") {
  DbpTable dbp = DbpTable::init(3, {2, 4, 8});
  CHECK(dbp.rows() == 3);
  for (std::size_t l = 0; l < 3; ++l) {
    CHECK(dbp.bits_at(l) == 8);
    CHECK(dbp.bits_below(l) == 4);
    CHECK(dbp.active_beta(l) == 1.0);
    for (double b : dbp.beta[l]) CHECK(b == 1.0);
  }

  dbp.beta[1][2] = -0.5;
  dbp.beta[2][0] = 3.0;
  dbp.clamp_betas();
  CHECK(dbp.beta[1][2] == 1e-6);
  CHECK(dbp.beta[2][0] == 1.0);

  CHECK_THROWS_AS((void)DbpTable::init(2, {}), ContractError);
  CHECK_THROWS_AS((void)DbpTable::init(2, {4, 4}), ContractError);
  CHECK_THROWS_AS((void)DbpTable::init(2, {4, 2}), ContractError);
}

TEST_CASE("soft_choice gradient matches central differences on frozen noise") {
  GradCheckOptions opts;
  opts.fd_on_surrogate = true;  // hard gate differentiates against c_soft
  for (const double beta : {0.1, 0.3, 0.5, 0.7, 0.9}) {
    for (const double tau : {0.5, 1.0, 2.0}) {
      GumbelConfig cfg;
      cfg.temperature = tau;
      cfg.hard = true;
      // Two fixed Gumbel draws; any values work, these are typical.
      const double g_hi = 0.8614, g_lo = -0.3312;
      const auto r = grad_check(
          [&](Tape& t, Var b) {
            return soft_choice_frozen(t, b, cfg, g_hi, g_lo).c;
          },
          Array::scalar(beta), opts);
      CHECK(r.max_rel_err < 1e-4);
    }
  }
}

TEST_CASE("hard gate forward is 0/1 and thresholds c_soft at one half") {
  GumbelConfig cfg;
  Tape t;
  Var beta = t.leaf(Array::scalar(0.5));
  const SoftChoice pick_hi = soft_choice_frozen(t, beta, cfg, 2.0, 0.0);
  CHECK(pick_hi.c.item() == 1.0);
  CHECK(pick_hi.c_soft.item() > 0.5);
  const SoftChoice pick_lo = soft_choice_frozen(t, beta, cfg, 0.0, 2.0);
  CHECK(pick_lo.c.item() == 0.0);
  CHECK(pick_lo.c_soft.item() < 0.5);
}

TEST_CASE("the branch picked does not depend on temperature") {
  Rng noise(42);
  GumbelConfig hot, cold;
  hot.temperature = 2.0;
  cold.temperature = 0.1;
  for (int i = 0; i < 200; ++i) {
    const double g_hi = noise.gumbel();
    const double g_lo = noise.gumbel();
    const double beta = noise.uniform(0.05, 0.95);
    Tape t;
    Var b = t.leaf(Array::scalar(beta));
    const double c_hot = soft_choice_frozen(t, b, hot, g_hi, g_lo).c.item();
    const double c_cold = soft_choice_frozen(t, b, cold, g_hi, g_lo).c.item();
    CHECK(c_hot == c_cold);
  }
}

TEST_CASE("P(c = 1) tracks beta (sampled)") {
  GumbelConfig cfg;
  for (const double beta : {0.2, 0.5, 0.8}) {
    Rng rng(43);
    const std::size_t n = 20000;
    std::size_t ones = 0;
    for (std::size_t i = 0; i < n; ++i) {
      Tape t;
      Var b = t.leaf(Array::scalar(beta));
      if (soft_choice(t, b, cfg, rng).c.item() == 1.0) ++ones;
    }
    const double p = static_cast<double>(ones) / n;
    const double sigma = std::sqrt(beta * (1.0 - beta) / n);
    CHECK(std::abs(p - beta) < 4.0 * sigma);
  }
}

TEST_CASE("a beta of exactly 1 is clamped for the logit but still learns") {
  GumbelConfig cfg;
  Tape t;
  Var beta = t.leaf(Array::scalar(1.0));
  const SoftChoice sc = soft_choice_frozen(t, beta, cfg, 0.0, 0.0);
  CHECK(sc.beta_clamped);
  CHECK(sc.c.item() == 1.0);  // logit is strongly positive at beta near 1
  t.backward(sc.c);
  CHECK(std::isfinite(beta.grad()[0]));
  CHECK(beta.grad()[0] > 0.0);  // pushing beta up raises P(keep high)

  Tape t2;
  Var beta2 = t2.leaf(Array::scalar(0.5));
  CHECK_FALSE(soft_choice_frozen(t2, beta2, cfg, 0.0, 0.0).beta_clamped);
}

TEST_CASE("soft_choice consumes exactly two gumbel draws") {
  Rng manual(44);
  const double g_hi = manual.gumbel();
  const double g_lo = manual.gumbel();
  const std::uint64_t next = manual.next_u64();

  Rng rng(44);
  Tape t;
  GumbelConfig cfg;
  const SoftChoice sc = soft_choice(t, t.leaf(Array::scalar(0.5)), cfg, rng);
  CHECK(sc.g_hi == g_hi);
  CHECK(sc.g_lo == g_lo);
  CHECK(rng.next_u64() == next);
}

TEST_CASE("stochastic_quantize forwards exactly one branch") {
  Rng rng(45);
  const Array w = rand_array(rng, {40}, -2.0, 2.0);
  GumbelConfig cfg;

  Tape t_hi;
  Var w_hi = t_hi.leaf(w);
  Var beta_hi = t_hi.leaf(Array::scalar(0.5));
  // Noise gap forces the high branch.
  const StochQuant keep = stochastic_quantize_frozen(t_hi, w_hi, beta_hi, 8, 4, cfg, 5.0, 0.0);
  CHECK(keep.choice.c.item() == 1.0);
  const Array q8 = quantize_weight_values(w, 8);
  for (std::size_t i = 0; i < w.size(); ++i) CHECK(keep.wq.value()[i] == q8[i]);

  Tape t_lo;
  Var w_lo = t_lo.leaf(w);
  Var beta_lo = t_lo.leaf(Array::scalar(0.5));
  const StochQuant drop = stochastic_quantize_frozen(t_lo, w_lo, beta_lo, 8, 4, cfg, 0.0, 5.0);
  CHECK(drop.choice.c.item() == 0.0);
  const Array q4 = quantize_weight_values(w, 4);
  for (std::size_t i = 0; i < w.size(); ++i) CHECK(drop.wq.value()[i] == q4[i]);

  CHECK_THROWS_AS(
      (void)stochastic_quantize_frozen(t_lo, w_lo, beta_lo, 4, 8, cfg, 0.0, 0.0),
      ContractError);
}

TEST_CASE("weight gradient is identical whichever branch the draw picks") {
  // The straight-through backward of the weight quantizer does not involve
  // the bit count, so both branches propagate the same gradient into w.
  Rng rng(46);
  const Array w = rand_array(rng, {64}, -2.0, 2.0);
  const Array co = rand_array(rng, {64}, -1.0, 1.0);
  GumbelConfig cfg;

  auto grad_for = [&](double g_hi, double g_lo) {
    Tape t;
    Var wv = t.leaf(w);
    Var beta = t.leaf(Array::scalar(0.5));
    const StochQuant sq = stochastic_quantize_frozen(t, wv, beta, 8, 3, cfg, g_hi, g_lo);
    t.backward(t.sum(t.mul(sq.wq, t.constant(co))));
    return wv.grad();
  };

  const Array g_keep = grad_for(5.0, 0.0);
  const Array g_drop = grad_for(0.0, 5.0);
  for (std::size_t i = 0; i < w.size(); ++i) CHECK(g_keep[i] == g_drop[i]);
}
