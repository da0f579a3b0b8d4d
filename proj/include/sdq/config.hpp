#pragma once

#include <cstdint>
#include <string>

#include "sdq/data.hpp"
#include "sdq/model.hpp"
#include "sdq/optim.hpp"
#include "sdq/phase1.hpp"
#include "sdq/phase2.hpp"

namespace sdq {

// Every knob a run needs, serializable as sectioned key-value text. A run is
// reproducible from a RunConfig alone; parse(serialize(c)) == c exactly.
struct RunConfig {
  // [run]
  std::uint64_t seed = 7;
  std::string out_dir = "runs/out";

  // [model] / [data]
  ModelSpec model;
  DatasetSpec data;

  // [phase1]
  Phase1Config phase1;
  OptimSpec p1_weight_opt;
  OptimSpec p1_dbp_opt;
  LrSchedule p1_schedule;
  std::size_t p1_batch = 32;

  // [phase2]
  Phase2Config phase2;
  OptimSpec p2_opt;
  LrSchedule p2_schedule;
  std::size_t p2_batch = 32;

  // [teacher]
  std::size_t teacher_epochs = 200;
  OptimSpec teacher_opt;

  RunConfig() {
    p1_weight_opt.kind = OptimSpec::Kind::kAdam;
    p1_weight_opt.lr = 0.01;
    p1_dbp_opt.kind = OptimSpec::Kind::kSgd;
    p1_dbp_opt.lr = 0.02;
    p1_dbp_opt.momentum = 0.9;
    p2_opt.kind = OptimSpec::Kind::kAdam;
    p2_opt.lr = 0.005;
    teacher_opt.kind = OptimSpec::Kind::kAdam;
    teacher_opt.lr = 0.01;
  }
};

// Sectioned "[section]\nkey = value" text. Doubles print in shortest
// round-trip form, so serialization is lossless and byte-deterministic.
std::string serialize_config(const RunConfig& c);

// Inverse of serialize_config; unknown sections or keys, malformed values,
// and stray text raise ContractError with the line number.
RunConfig parse_config(const std::string& text);

void write_config(const std::string& path, const RunConfig& c);
RunConfig read_config(const std::string& path);

// Field-for-field equality via the serialized form.
bool config_equal(const RunConfig& a, const RunConfig& b);

}  // namespace sdq
