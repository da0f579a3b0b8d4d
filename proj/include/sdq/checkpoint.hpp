#pragma once

#include <string>

#include "sdq/model.hpp"

namespace sdq {

// Flat binary checkpoint:
//   bytes 0-7   magic "SDQCKPT1"
//   u64         layer count
//   per layer:  u64 name length, name bytes, u64 ndims, u64 dims[ndims],
//               u64 bias length
//   per layer:  weight doubles then bias doubles, row-major
// All integers and doubles little-endian 64-bit.
void save_checkpoint(const std::string& path, const Model& m);

// Restores weights and biases into a structurally identical model; any
// mismatch in layer names or shapes is a contract violation.
void load_checkpoint(const std::string& path, Model& m);

}  // namespace sdq
