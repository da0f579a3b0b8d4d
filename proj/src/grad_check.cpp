#include "sdq/grad_check.hpp"

#include <cmath>
#include <string>

namespace sdq {

namespace {

double eval_at(const ScalarFn& f, const Array& point, bool surrogate) {
  Tape t;
  t.set_surrogate_mode(surrogate);
  Var x = t.leaf(point);
  Var y = f(t, x);
  check_contract(y.value().is_scalar(), "grad_check: f must return a scalar");
  return y.item();
}

}  // namespace

GradCheckReport grad_check(const ScalarFn& f, const Array& point, const GradCheckOptions& opts) {
  check_contract(opts.step > 0.0, "grad_check: step must be positive");

  Array analytic;
  {
    Tape t;
    Var x = t.leaf(point);
    Var y = f(t, x);
    check_contract(y.value().is_scalar(), "grad_check: f must return a scalar");
    t.backward(y);
    analytic = x.grad();
  }

  GradCheckReport report;
  Array probe = point;
  for (std::size_t i = 0; i < point.size(); ++i) {
    const double x0 = point[i];
    probe[i] = x0 + opts.step;
    const double fp = eval_at(f, probe, opts.fd_on_surrogate);
    probe[i] = x0 - opts.step;
    const double fm = eval_at(f, probe, opts.fd_on_surrogate);
    probe[i] = x0;
    const double numeric = (fp - fm) / (2.0 * opts.step);
    if (!std::isfinite(numeric) || !std::isfinite(analytic[i])) {
      throw NumericError("grad_check: non-finite gradient at coordinate " + std::to_string(i));
    }
    const double scale = std::max(1.0, std::max(std::abs(analytic[i]), std::abs(numeric)));
    const double rel = std::abs(analytic[i] - numeric) / scale;
    if (rel > report.max_rel_err) {
      report.max_rel_err = rel;
      report.worst_index = i;
      report.analytic_at_worst = analytic[i];
      report.numeric_at_worst = numeric;
    }
  }
  return report;
}

}  // namespace sdq
