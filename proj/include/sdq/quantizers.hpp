#pragma once

#include "sdq/array.hpp"
#include "sdq/tape.hpp"

namespace sdq {

// Bit 32 (and above) means full precision: callers bypass quantization
// entirely so the pass-through path is exact, not merely fine-grained.
inline constexpr int kFullPrecisionBits = 32;

// Number of steps of the b-bit uniform grid on [0,1]: 2^b - 1.
double unit_levels(int bits);

// --- differentiable quantizers (tape ops) ---

// round((2^b - 1) x) / (2^b - 1), straight-through backward. Inputs must lie
// in [0,1] up to 1e-12 slack.
Var quantize_unit(Tape& t, Var x, int bits);

// tanh-normalized signed weight quantizer onto the symmetric b-bit grid in
// [-1,1]. An all-zero tensor quantizes to all zeros.
Var quantize_weight(Tape& t, Var w, int bits);

// clamp to [0,1], then quantize_unit; gradient is masked outside the clamp
// range, straight-through inside.
Var quantize_activation(Tape& t, Var x, int bits);

// Rescale w so its mean absolute value becomes 2^(b-1)/(2^b - 1), roughly
// one half: w * (2^(b-1)/(2^b-1)) * count / ||w||_1. Keeps the quantization
// bins evenly occupied; applied to weights ahead of the quantizer. An
// all-zero tensor is returned unchanged.
Var normalize_weights(Tape& t, Var w, int bits);

// --- value-level counterparts (no tape, no gradients) ---
// Written out independently of the tape ops so tests can cross-check the two.

Array quantize_unit_values(const Array& x, int bits);
Array quantize_weight_values(const Array& w, int bits);
Array normalize_weights_values(const Array& w, int bits);

// The [-1,1] image of w just before rounding, tanh(w)/max|tanh(w)|: what the
// rounding step of quantize_weight actually approximates. Quantization error
// is measured against this, never against raw w, so the error vanishes as
// bits grow and the (2^b-1)^2 coefficients balance the widths.
Array weight_remap_values(const Array& w);

// The symmetric b-bit grid on [-1,1] that quantize_weight rounds onto:
// level k = 2k/(2^b - 1) - 1 for k in [0, 2^b).
std::vector<double> weight_levels(int bits);

// --- clamp quantizer (analysis tool) ---

// Uniform quantizer over a clamp range [lo, hi]: s * round(clamp(w) / s)
// with s = (hi - lo) / (2^b - 1). The grid is anchored at 0.
struct ClampQuantizer {
  int bits = 8;
  double lo = -1.0;
  double hi = 1.0;

  double range() const { return hi - lo; }
  double step() const;
  void validate() const;
};

Array quantize_clamped(const Array& w, const ClampQuantizer& q);

// Sum of squared differences; shapes must match.
double quant_error_sq(const Array& a, const Array& b);

// E[(w - Q(w))^2] / range^2 for a uniform input over the clamp range:
// 1 / (12 (2^b - 1)^2).
double expected_error_coeff(int bits);

}  // namespace sdq
