#pragma once

#include <cstddef>
#include <vector>

#include "sdq/rng.hpp"
#include "sdq/tape.hpp"

namespace sdq {

// Differentiable bitwidth parameters. One row per DBP group; with layer
// granularity that is one row per quantizable layer. Each row keeps a beta
// in (0,1] for every candidate bitwidth plus the index of the currently
// active candidate. active_index only ever decreases.
struct DbpTable {
  std::vector<int> candidates;             // strictly increasing bitwidths
  std::vector<std::vector<double>> beta;   // [row][candidate], init 1.0
  std::vector<std::size_t> active_index;   // [row], init = highest candidate

  static DbpTable init(std::size_t rows, std::vector<int> candidates);

  std::size_t rows() const { return beta.size(); }
  int bits_at(std::size_t row) const { return candidates[active_index[row]]; }
  // Candidate one below the active one; callers must check active_index > 0.
  int bits_below(std::size_t row) const { return candidates[active_index[row] - 1]; }
  double active_beta(std::size_t row) const { return beta[row][active_index[row]]; }
  void set_active_beta(std::size_t row, double value) {
    beta[row][active_index[row]] = value;
  }

  // Storage invariant: every beta stays inside [1e-6, 1]. Called after each
  // optimizer update.
  void clamp_betas();
};

struct GumbelConfig {
  double temperature = 1.0;  // > 0
  bool hard = true;          // straight-through hard choice in the forward pass
};

// Standard Gumbel(0,1) draw: -log(-log(u)), u uniform on the open (0,1).
double sample_gumbel(Rng& rng);

struct SoftChoice {
  Var c;                 // branch gate used downstream (hard 0/1 when cfg.hard)
  Var c_soft;            // relaxed sigmoid path that carries the gradient
  double g_hi = 0.0;     // Gumbel noise on the keep-high branch
  double g_lo = 0.0;     // Gumbel noise on the drop-low branch
  bool beta_clamped = false;  // beta left (0,1) and was clamped for the logit
};

// Two-way Gumbel-softmax gate driven by beta:
//   c_soft = sigmoid((log beta - log(1-beta) + g_hi - g_lo) / temperature)
// With cfg.hard, the forward value is 1[c_soft >= 0.5] and the gradient
// flows through c_soft unchanged. P(c = 1) equals beta exactly at any
// temperature. beta is clamped into [1e-6, 1 - 1e-6] for the logit, with the
// gradient passed straight through so a beta sitting at 1 still learns.
SoftChoice soft_choice(Tape& t, Var beta, const GumbelConfig& cfg, Rng& rng);

// Same gate with caller-supplied noise; this is the hook tests use to freeze
// the stochasticity.
SoftChoice soft_choice_frozen(Tape& t, Var beta, const GumbelConfig& cfg, double g_hi,
                              double g_lo);

struct StochQuant {
  Var wq;              // quantized weights entering the layer
  SoftChoice choice;   // only meaningful when stochastic
  int bits_hi = 0;
  int bits_lo = 0;
  bool stochastic = false;
};

// Mixes the two branch quantizations under an already-drawn choice:
//   wq = c * Q(w, bits_hi) + (1 - c) * Q(w, bits_lo).
// Callers that share one choice across several tensors (coarse DBP
// granularity) draw once and mix per tensor.
StochQuant mix_branches(Tape& t, Var w, int bits_hi, int bits_lo, SoftChoice choice);

// Quantizes w at bits_hi and bits_lo and mixes the branches with one fresh
// choice draw: wq = c * Q(w, bits_hi) + (1 - c) * Q(w, bits_lo). One draw per
// call; callers invoke this once per group per forward pass.
StochQuant stochastic_quantize(Tape& t, Var w, Var beta, int bits_hi, int bits_lo,
                               const GumbelConfig& cfg, Rng& rng);

// Frozen-noise variant for tests.
StochQuant stochastic_quantize_frozen(Tape& t, Var w, Var beta, int bits_hi, int bits_lo,
                                      const GumbelConfig& cfg, double g_hi, double g_lo);

}  // namespace sdq
