#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include "sdq/array.hpp"

namespace sdq {

struct DatasetSpec {
  std::string generator = "gaussian_mixture";  // two_blobs | two_moons | gaussian_mixture
  std::size_t samples = 2000;
  std::size_t classes = 4;  // gaussian_mixture only; the others are 2-class
  double noise = 0.3;
  double train_fraction = 0.8;
  std::uint64_t seed = 7;
};

struct Dataset {
  Array x;             // [n, 2]
  std::vector<int> y;  // n labels
  std::size_t classes = 0;

  std::size_t size() const { return y.size(); }
};

struct SplitDataset {
  Dataset train;
  Dataset test;
};

// Deterministic 2-D synthetic data. Classes are interleaved sample by sample
// so both splits stay balanced; equal specs regenerate identical bytes.
SplitDataset gen_dataset(const DatasetSpec& spec);

// CSV with a "x0,x1,label" header; doubles at full round-trip precision.
void write_csv(const std::string& path, const Dataset& data);
Dataset read_csv(const std::string& path);

}  // namespace sdq
