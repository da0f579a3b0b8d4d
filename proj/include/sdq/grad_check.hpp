#pragma once

#include <functional>

#include "sdq/tape.hpp"

namespace sdq {

// Scalar-valued function of one tensor input, built on a caller-provided
// tape. Stochastic functions must freeze their noise so repeated evaluation
// is consistent.
using ScalarFn = std::function<Var(Tape&, Var)>;

struct GradCheckOptions {
  double step = 1e-5;
  // Evaluate the finite-difference passes with straight-through ops replaced
  // by their smooth surrogates. The analytic pass always runs the real
  // forward; straight-through gradients are defined against the surrogate,
  // so that is the function the differences must probe.
  bool fd_on_surrogate = false;
};

struct GradCheckReport {
  double max_rel_err = 0.0;
  std::size_t worst_index = 0;
  double analytic_at_worst = 0.0;
  double numeric_at_worst = 0.0;
};

// Compares reverse-mode gradients of f at `point` against central
// differences, coordinate by coordinate. Relative error is
// |a - n| / max(1, |a|, |n|). Non-finite values raise NumericError naming
// the coordinate.
GradCheckReport grad_check(const ScalarFn& f, const Array& point,
                           const GradCheckOptions& opts = {});

}  // namespace sdq
