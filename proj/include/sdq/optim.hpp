#pragma once

#include <cstdint>
#include <map>
#include <string>
#include <vector>

#include "sdq/array.hpp"

namespace sdq {

struct OptimSpec {
  enum class Kind { kSgd, kAdam, kAdamW };
  Kind kind = Kind::kAdam;
  double lr = 0.01;
  double momentum = 0.9;      // sgd
  double weight_decay = 0.0;  // L2 for sgd/adam, decoupled for adamw
  double beta1 = 0.9;
  double beta2 = 0.999;
  double eps = 1e-8;
};

OptimSpec::Kind parse_optim_kind(const std::string& name);  // sgd | adam | adamw

struct LrSchedule {
  enum class Kind { kConstant, kCosine, kMultistep };
  Kind kind = Kind::kConstant;
  std::vector<std::size_t> milestones;  // multistep epochs
  double gamma = 0.1;

  double lr_at(double base_lr, std::size_t epoch, std::size_t total_epochs) const;
};

LrSchedule::Kind parse_schedule_kind(const std::string& name);

// A family of named parameter slots updated with one rule. Slots hold the
// optimizer state (momentum / moment estimates) keyed by parameter name;
// state appears on first use. Iteration order never matters: each step
// touches exactly one named slot.
class ParamGroup {
public:
  explicit ParamGroup(OptimSpec spec) : spec_(spec) {}

  const OptimSpec& spec() const { return spec_; }

  // One update of `value` in place. `lr` is the already-scheduled rate.
  void step(const std::string& name, Array& value, const Array& grad, double lr);

  // Drops a slot's state; the next step starts fresh. Used when a DBP row
  // switches to a new beta after a decay.
  void reset(const std::string& name) { slots_.erase(name); }

private:
  struct Slot {
    Array m;  // momentum / first moment
    Array v;  // second moment (adam only)
    std::uint64_t t = 0;
  };
  OptimSpec spec_;
  std::map<std::string, Slot> slots_;
};

}  // namespace sdq
