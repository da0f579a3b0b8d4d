#include "sdq/optim.hpp"

#include <cmath>

#include "sdq/errors.hpp"

namespace sdq {

OptimSpec::Kind parse_optim_kind(const std::string& name) {
  if (name == "sgd") return OptimSpec::Kind::kSgd;
  if (name == "adam") return OptimSpec::Kind::kAdam;
  if (name == "adamw") return OptimSpec::Kind::kAdamW;
  throw ContractError("unknown optimizer '" + name + "' (want sgd|adam|adamw)");
}

LrSchedule::Kind parse_schedule_kind(const std::string& name) {
  if (name == "constant") return LrSchedule::Kind::kConstant;
  if (name == "cosine") return LrSchedule::Kind::kCosine;
  if (name == "multistep") return LrSchedule::Kind::kMultistep;
  throw ContractError("unknown lr schedule '" + name + "' (want constant|cosine|multistep)");
}

double LrSchedule::lr_at(double base_lr, std::size_t epoch, std::size_t total_epochs) const {
  switch (kind) {
    case Kind::kConstant:
      return base_lr;
    case Kind::kCosine: {
      check_contract(total_epochs > 0, "cosine schedule needs total_epochs > 0");
      const double frac = static_cast<double>(epoch) / static_cast<double>(total_epochs);
      return base_lr * 0.5 * (1.0 + std::cos(3.14159265358979323846 * frac));
    }
    case Kind::kMultistep: {
      double lr = base_lr;
      for (std::size_t m : milestones) {
        if (epoch >= m) lr *= gamma;
      }
      return lr;
    }
  }
  throw ContractError("unreachable schedule kind");
}

void ParamGroup::step(const std::string& name, Array& value, const Array& grad, double lr) {
  check_contract(same_shape(value, grad),
                 "optimizer step shape mismatch for '" + name + "': " + shape_str(value.shape) +
                     " vs " + shape_str(grad.shape));
  auto it = slots_.find(name);
  if (it == slots_.end()) {
    Slot s;
    s.m = Array::zeros_like(value);
    if (spec_.kind != OptimSpec::Kind::kSgd) s.v = Array::zeros_like(value);
    it = slots_.emplace(name, std::move(s)).first;
  }
  Slot& s = it->second;
  check_contract(same_shape(s.m, value), "optimizer slot '" + name + "' reused with new shape");

  const std::size_t n = value.size();
  switch (spec_.kind) {
    case OptimSpec::Kind::kSgd: {
      for (std::size_t i = 0; i < n; ++i) {
        double g = grad.data[i] + spec_.weight_decay * value.data[i];
        s.m.data[i] = spec_.momentum * s.m.data[i] + g;
        value.data[i] -= lr * s.m.data[i];
      }
      break;
    }
    case OptimSpec::Kind::kAdam:
    case OptimSpec::Kind::kAdamW: {
      s.t += 1;
      const double bc1 = 1.0 - std::pow(spec_.beta1, static_cast<double>(s.t));
      const double bc2 = 1.0 - std::pow(spec_.beta2, static_cast<double>(s.t));
      for (std::size_t i = 0; i < n; ++i) {
        double g = grad.data[i];
        if (spec_.kind == OptimSpec::Kind::kAdam) g += spec_.weight_decay * value.data[i];
        s.m.data[i] = spec_.beta1 * s.m.data[i] + (1.0 - spec_.beta1) * g;
        s.v.data[i] = spec_.beta2 * s.v.data[i] + (1.0 - spec_.beta2) * g * g;
        const double mhat = s.m.data[i] / bc1;
        const double vhat = s.v.data[i] / bc2;
        double upd = lr * mhat / (std::sqrt(vhat) + spec_.eps);
        if (spec_.kind == OptimSpec::Kind::kAdamW)
          upd += lr * spec_.weight_decay * value.data[i];
        value.data[i] -= upd;
      }
      break;
    }
  }
}

}  // namespace sdq
