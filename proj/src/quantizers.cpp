#include "sdq/quantizers.hpp"

#include <cmath>
#include <string>

namespace sdq {

namespace {

constexpr double kUnitSlack = 1e-12;

void check_bits(int bits, const char* who) {
  check_contract(bits >= 1 && bits <= kFullPrecisionBits,
                 std::string(who) + ": bits must be in [1," +
                     std::to_string(kFullPrecisionBits) + "], got " + std::to_string(bits));
}

}  // namespace

double unit_levels(int bits) { return std::ldexp(1.0, bits) - 1.0; }

Var quantize_unit(Tape& t, Var x, int bits) {
  check_bits(bits, "quantize_unit");
  const Array& xv = x.value();
  for (std::size_t i = 0; i < xv.size(); ++i) {
    check_contract(xv[i] >= -kUnitSlack && xv[i] <= 1.0 + kUnitSlack,
                   "quantize_unit: input " + std::to_string(xv[i]) + " at index " +
                       std::to_string(i) + " outside [0,1]");
  }
  const double levels = unit_levels(bits);
  // One fused node: the backward contract (gradient passes through bitwise
  // unchanged) would not survive a scale/round/scale chain.
  return t.map_ste(x, [levels](double v) { return std::round(v * levels) / levels; });
}

Var quantize_weight(Tape& t, Var w, int bits) {
  check_bits(bits, "quantize_weight");
  Var th = t.tanh(w);
  Var m = t.max_abs(th);
  if (m.item() == 0.0) {
    // Degenerate all-zero tensor: quantizes to zeros, gradient is zero.
    return t.scale(w, 0.0);
  }
  Var unit = t.add_const(t.div(th, t.scale(m, 2.0)), 0.5);
  Var q = quantize_unit(t, unit, bits);
  return t.add_const(t.scale(q, 2.0), -1.0);
}

Var quantize_activation(Tape& t, Var x, int bits) {
  check_bits(bits, "quantize_activation");
  return quantize_unit(t, t.clamp(x, 0.0, 1.0), bits);
}

Var normalize_weights(Tape& t, Var w, int bits) {
  check_bits(bits, "normalize_weights");
  Var l1 = t.sum_abs(w);
  if (l1.item() == 0.0) return w;
  const double target = std::ldexp(1.0, bits - 1) / unit_levels(bits);
  const double count = static_cast<double>(w.size());
  return t.mul(w, t.div(t.scalar(target * count), l1));
}

Array quantize_unit_values(const Array& x, int bits) {
  check_bits(bits, "quantize_unit_values");
  const double levels = unit_levels(bits);
  Array out(x.shape);
  for (std::size_t i = 0; i < x.size(); ++i) {
    check_contract(x[i] >= -kUnitSlack && x[i] <= 1.0 + kUnitSlack,
                   "quantize_unit_values: input outside [0,1]");
    out[i] = std::round(x[i] * levels) / levels;
  }
  return out;
}

Array quantize_weight_values(const Array& w, int bits) {
  check_bits(bits, "quantize_weight_values");
  Array th(w.shape);
  double m = 0.0;
  for (std::size_t i = 0; i < w.size(); ++i) {
    th[i] = std::tanh(w[i]);
    m = std::max(m, std::abs(th[i]));
  }
  Array out(w.shape);
  if (m == 0.0) return out;
  const double levels = unit_levels(bits);
  for (std::size_t i = 0; i < w.size(); ++i) {
    const double unit = th[i] / (2.0 * m) + 0.5;
    const double q = std::round(unit * levels) / levels;
    out[i] = 2.0 * q - 1.0;
  }
  return out;
}

Array normalize_weights_values(const Array& w, int bits) {
  check_bits(bits, "normalize_weights_values");
  double l1 = 0.0;
  for (std::size_t i = 0; i < w.size(); ++i) l1 += std::abs(w[i]);
  Array out = w;
  if (l1 == 0.0) return out;
  const double target = std::ldexp(1.0, bits - 1) / unit_levels(bits);
  const double factor = target * static_cast<double>(w.size()) / l1;
  for (double& v : out.data) v *= factor;
  return out;
}

Array weight_remap_values(const Array& w) {
  Array th(w.shape);
  double m = 0.0;
  for (std::size_t i = 0; i < w.size(); ++i) {
    th[i] = std::tanh(w[i]);
    m = std::max(m, std::abs(th[i]));
  }
  if (m == 0.0) return th;  // all-zero: image is zero, same as the quantizer's
  for (double& v : th.data) v /= m;
  return th;
}

std::vector<double> weight_levels(int bits) {
  check_bits(bits, "weight_levels");
  check_contract(bits < kFullPrecisionBits, "weight_levels: full-precision has no grid");
  const double levels = unit_levels(bits);
  const std::size_t n = std::size_t{1} << bits;
  std::vector<double> out(n);
  for (std::size_t k = 0; k < n; ++k) out[k] = 2.0 * static_cast<double>(k) / levels - 1.0;
  return out;
}

double ClampQuantizer::step() const {
  validate();
  return range() / unit_levels(bits);
}

void ClampQuantizer::validate() const {
  check_contract(bits >= 1 && bits <= kFullPrecisionBits, "ClampQuantizer: bad bit count");
  check_contract(hi > lo, "ClampQuantizer: empty clamp range");
}

Array quantize_clamped(const Array& w, const ClampQuantizer& q) {
  const double s = q.step();
  Array out(w.shape);
  for (std::size_t i = 0; i < w.size(); ++i) {
    const double c = w[i] < q.lo ? q.lo : (w[i] > q.hi ? q.hi : w[i]);
    out[i] = s * std::round(c / s);
  }
  return out;
}

double quant_error_sq(const Array& a, const Array& b) {
  check_contract(same_shape(a, b), "quant_error_sq: shape mismatch " + shape_str(a.shape) +
                                       " vs " + shape_str(b.shape));
  double acc = 0.0;
  for (std::size_t i = 0; i < a.size(); ++i) {
    const double d = a[i] - b[i];
    acc += d * d;
  }
  return acc;
}

double expected_error_coeff(int bits) {
  check_bits(bits, "expected_error_coeff");
  const double levels = unit_levels(bits);
  return 1.0 / (12.0 * levels * levels);
}

}  // namespace sdq
