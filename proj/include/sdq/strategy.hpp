#pragma once

#include <cstddef>
#include <string>
#include <vector>

namespace sdq {

// One quantizable layer's resolved choice.
struct LayerChoice {
  std::string name;
  int bits = 0;
  std::size_t params = 0;
  bool pinned = false;  // held at a fixed width, never searched
};

// A mixed-precision assignment: the durable output of the bitwidth search
// and the input of fixed-precision training and the cost model.
struct MpqStrategy {
  std::string model_id;
  int activation_bits = 0;
  std::vector<int> candidates;  // searched widths, descending
  std::vector<LayerChoice> layers;

  // Parameter-weighted mean weight bitwidth across all layers.
  double avg_weight_bits() const;
  std::size_t total_params() const;
  const LayerChoice& layer(const std::string& name) const;  // ContractError if absent
};

// Text format: a short header (format tag, model id, activation bits,
// candidate list, layer count) followed by one record per layer:
//   <name> <bits> <params> <pinned|->
std::string serialize_strategy(const MpqStrategy& s);
MpqStrategy parse_strategy(const std::string& text);  // ContractError with line number

void write_strategy(const std::string& path, const MpqStrategy& s);
MpqStrategy read_strategy(const std::string& path);

}  // namespace sdq
