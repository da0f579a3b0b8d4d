#pragma once

#include <cstddef>
#include <string>
#include <vector>

#include "sdq/strategy.hpp"

namespace sdq {

// Static per-layer facts the cost arithmetic needs. `width`/`height` are the
// spatial extent of the volume each filter sweeps (the input-side dims for a
// strided conv), so that width*height/stride^2 equals the per-filter MAC
// count; dense layers use 1x1 stride 1.
struct LayerMeta {
  enum class Kind { kConv, kDense, kDepthwise };
  std::string name;
  Kind kind = Kind::kConv;
  std::size_t params = 0;  // filter cardinality: k*k*c_in*c_out conv, in*out dense
  std::size_t width = 1;
  std::size_t height = 1;
  std::size_t stride = 1;
};

LayerMeta::Kind parse_layer_kind(const std::string& name);
std::string layer_kind_name(LayerMeta::Kind kind);

// Bit-operations of one layer: b_w * b_a * params * width * height / stride^2.
double bitops(const LayerMeta& meta, int b_w, int b_a);

struct LayerCost {
  std::string name;
  int b_w = 0;
  int b_a = 0;
  double bitops = 0.0;
};

struct CostReport {
  double total_bitops = 0.0;
  double size_bytes = 0.0;
  double size_mib = 0.0;  // bytes / 2^20
  double avg_weight_bits = 0.0;
  double wcr = 0.0;  // 32 / avg_weight_bits
  std::vector<LayerCost> per_layer;
};

// Weight bits come from the strategy; activation bits are the strategy-wide
// width, except pinned layers whose activations run at the pinned weight
// width (an 8-bit pinned layer computes at 8/8).
CostReport cost_report(const std::vector<LayerMeta>& metas, const MpqStrategy& strategy);

double model_size_bytes(const MpqStrategy& strategy);  // sum params*bits/8
double wcr(const MpqStrategy& strategy);

// Rounds every layer UP to the smallest supported width >= its bits; never
// degrades fidelity. Supported set must be non-empty and strictly ascending;
// a layer above max(supported) is a contract violation.
MpqStrategy hw_round(const MpqStrategy& strategy, const std::vector<int>& supported);

// The theoretical-vs-deployable compression gap introduced by hw_round.
struct HwGap {
  double avg_bits_before = 0.0;
  double avg_bits_after = 0.0;
  double wcr_before = 0.0;
  double wcr_after = 0.0;
};
HwGap hw_gap(const MpqStrategy& before, const MpqStrategy& after);

// Plain-text layer table, one layer per line:
//   <name> <conv|dense|depthwise> <params> <width> <height> <stride>
// Blank lines and '#' comments allowed. Errors carry line numbers.
std::vector<LayerMeta> parse_layer_table(const std::string& text);
std::vector<LayerMeta> read_layer_table(const std::string& path);

}  // namespace sdq
