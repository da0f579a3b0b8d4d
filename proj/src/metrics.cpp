#include "sdq/metrics.hpp"

#include "sdq/errors.hpp"

namespace sdq {

MetricsWriter::MetricsWriter(const std::string& path, bool append)
    : out_(path, append ? std::ios::binary | std::ios::app : std::ios::binary) {
  check_contract(static_cast<bool>(out_), "cannot open metrics log for write: " + path);
}

void MetricsWriter::write(const ordered_json& record) {
  out_ << record.dump() << "\n";
  check_contract(static_cast<bool>(out_), "short write to metrics log");
}

ordered_json to_json(const FpEpochRecord& r) {
  return ordered_json{{"phase", 0}, {"epoch", r.epoch}, {"loss", r.loss},
                      {"accuracy", r.accuracy}};
}

ordered_json to_json(const Phase1EpochRecord& r) {
  ordered_json groups = ordered_json::array();
  for (const auto& g : r.groups)
    groups.push_back(ordered_json{{"name", g.name}, {"bits", g.bits}, {"beta", g.beta}});
  ordered_json decays = ordered_json::array();
  for (const auto& d : r.decays)
    decays.push_back(
        ordered_json{{"group", d.group}, {"old_bits", d.old_bits}, {"new_bits", d.new_bits}});
  return ordered_json{{"phase", 1},
                      {"epoch", r.epoch},
                      {"task_loss", r.task_loss},
                      {"qer", r.qer},
                      {"total", r.total},
                      {"accuracy", r.accuracy},
                      {"weight_grad_norm", r.weight_grad_norm},
                      {"beta_grad_norm", r.beta_grad_norm},
                      {"clamped", r.clamped},
                      {"groups", groups},
                      {"decays", decays}};
}

ordered_json to_json(const Phase2EpochRecord& r) {
  return ordered_json{{"phase", 2},     {"epoch", r.epoch},
                      {"kd", r.kd},     {"ebr", r.ebr},
                      {"total", r.total}, {"accuracy", r.accuracy},
                      {"bin_var_sum", r.bin_var_sum}};
}

}  // namespace sdq
