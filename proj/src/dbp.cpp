#include "sdq/dbp.hpp"

#include <cmath>
#include <string>

#include "sdq/quantizers.hpp"

namespace sdq {

namespace {
constexpr double kBetaFloor = 1e-6;
}

DbpTable DbpTable::init(std::size_t rows, std::vector<int> candidates) {
  check_contract(!candidates.empty(), "DbpTable: empty candidate set");
  for (std::size_t i = 0; i < candidates.size(); ++i) {
    check_contract(candidates[i] >= 1, "DbpTable: candidate bits must be >= 1");
    check_contract(i == 0 || candidates[i] > candidates[i - 1],
                   "DbpTable: candidates must be strictly increasing");
  }
  DbpTable table;
  table.candidates = std::move(candidates);
  table.beta.assign(rows, std::vector<double>(table.candidates.size(), 1.0));
  table.active_index.assign(rows, table.candidates.size() - 1);
  return table;
}

void DbpTable::clamp_betas() {
  for (auto& row : beta) {
    for (double& b : row) {
      if (b < kBetaFloor) b = kBetaFloor;
      if (b > 1.0) b = 1.0;
    }
  }
}

double sample_gumbel(Rng& rng) { return rng.gumbel(); }

SoftChoice soft_choice_frozen(Tape& t, Var beta, const GumbelConfig& cfg, double g_hi,
                              double g_lo) {
  check_contract(cfg.temperature > 0.0, "soft_choice: temperature must be positive");
  check_contract(beta.value().is_scalar(), "soft_choice: beta must be scalar");

  SoftChoice out;
  out.g_hi = g_hi;
  out.g_lo = g_lo;
  const double bval = beta.value()[0];
  out.beta_clamped = bval < kBetaFloor || bval > 1.0 - kBetaFloor;

  // Straight-through clamp keeps log() finite at beta = 1 (the init value)
  // without killing the gradient there.
  Var b = t.clamp_ste(beta, kBetaFloor, 1.0 - kBetaFloor);
  Var logit = t.sub(t.log(b), t.log(t.sub(t.scalar(1.0), b)));
  logit = t.scale(t.add_const(logit, g_hi - g_lo), 1.0 / cfg.temperature);
  out.c_soft = t.sigmoid(logit);
  out.c = cfg.hard ? t.hard_ge_ste(out.c_soft, 0.5) : out.c_soft;
  return out;
}

SoftChoice soft_choice(Tape& t, Var beta, const GumbelConfig& cfg, Rng& rng) {
  const double g_hi = sample_gumbel(rng);
  const double g_lo = sample_gumbel(rng);
  return soft_choice_frozen(t, beta, cfg, g_hi, g_lo);
}

StochQuant mix_branches(Tape& t, Var w, int bits_hi, int bits_lo, SoftChoice choice) {
  check_contract(bits_hi > bits_lo, "stochastic_quantize: bits_hi must exceed bits_lo");
  StochQuant out;
  out.bits_hi = bits_hi;
  out.bits_lo = bits_lo;
  out.stochastic = true;
  out.choice = choice;
  Var q_hi = quantize_weight(t, w, bits_hi);
  Var q_lo = quantize_weight(t, w, bits_lo);
  Var keep = choice.c;
  Var drop = t.sub(t.scalar(1.0), choice.c);
  out.wq = t.add(t.mul(keep, q_hi), t.mul(drop, q_lo));
  return out;
}

StochQuant stochastic_quantize(Tape& t, Var w, Var beta, int bits_hi, int bits_lo,
                               const GumbelConfig& cfg, Rng& rng) {
  return mix_branches(t, w, bits_hi, bits_lo, soft_choice(t, beta, cfg, rng));
}

StochQuant stochastic_quantize_frozen(Tape& t, Var w, Var beta, int bits_hi, int bits_lo,
                                      const GumbelConfig& cfg, double g_hi, double g_lo) {
  return mix_branches(t, w, bits_hi, bits_lo, soft_choice_frozen(t, beta, cfg, g_hi, g_lo));
}

}  // namespace sdq
