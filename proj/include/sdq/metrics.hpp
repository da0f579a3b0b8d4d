#pragma once

#include <fstream>
#include <string>

#include <json.hpp>

#include "sdq/phase1.hpp"
#include "sdq/phase2.hpp"

namespace sdq {

using ordered_json = nlohmann::ordered_json;

// JSON-lines sink: one record per line, keys in insertion order, no
// timestamps or other run-varying fields — equal runs write equal bytes.
class MetricsWriter {
public:
  // Append keeps earlier phases in place when a later command extends the
  // same log (bitwidth search first, then training).
  explicit MetricsWriter(const std::string& path, bool append = false);
  void write(const ordered_json& record);

private:
  std::ofstream out_;
};

// Record shapes shared by the trainers, the CLI, and the tests. "phase" is
// 0 for plain full-precision training, 1 and 2 for the two pipeline stages.
ordered_json to_json(const FpEpochRecord& r);
ordered_json to_json(const Phase1EpochRecord& r);
ordered_json to_json(const Phase2EpochRecord& r);

}  // namespace sdq
