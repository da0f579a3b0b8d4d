#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include "sdq/array.hpp"
#include "sdq/dbp.hpp"
#include "sdq/quantizers.hpp"
#include "sdq/rng.hpp"
#include "sdq/tape.hpp"

namespace sdq {

enum class LayerKind { kDense, kConv };

// A parameterized layer whose weights are subject to quantization. Dense
// weights are [in, out] with a full-precision bias; conv weights are
// [out_ch, in_ch, k, k] without bias.
struct QuantLayer {
  std::string name;
  LayerKind kind = LayerKind::kDense;
  std::size_t in = 0, out = 0;                       // dense dims
  std::size_t in_ch = 0, out_ch = 0, ksize = 0;      // conv dims
  std::size_t stride = 1, pad = 0;
  std::size_t block = 0;   // residual-block id, used by block DBP granularity
  bool pinned = false;     // first/last layers keep the pinned bitwidth
  Array weight;
  Array bias;

  std::size_t param_count() const { return weight.size(); }
};

// One step of the forward program.
struct Step {
  static constexpr std::size_t npos = ~std::size_t{0};
  enum class Op { kLinear, kAct, kGlobalPool, kResidualSave, kResidualAdd };
  Op op = Op::kLinear;
  std::size_t layer = npos;  // kLinear: which layer to apply
  std::size_t proj = npos;   // kResidualAdd: projection layer for the skip, or npos
};

struct Model {
  std::string id;
  std::size_t input_features = 0;
  std::size_t classes = 0;
  // Stub models emit constant zero logits and run no layers; they give the
  // pipeline a task loss that is exactly indifferent to everything.
  bool constant_logits = false;
  std::vector<QuantLayer> layers;
  std::vector<Step> steps;
  Array lift;         // fixed (non-trainable) input projection for conv models
  Shape image_shape;  // {c, h, w} the lift reshapes to

  std::size_t num_params() const;
  std::vector<std::size_t> free_ids() const;  // quantizable and not pinned
};

// Config-facing architecture description.
struct ModelSpec {
  std::string id = "mlp";  // mlp | resnet_toy | stub
  std::size_t input_features = 2;
  std::size_t classes = 4;
  std::vector<std::size_t> hidden = {32, 32, 32};  // mlp hidden widths
  std::size_t base_channels = 8;                   // resnet_toy
  std::size_t image_hw = 8;                        // resnet_toy lift target
};

// Deterministic construction: weights are N(0, 1/sqrt(fan_in)) from a seeded
// stream per layer, hidden dense biases start at 0.5 (the middle of the
// bounded activation), the output bias at 0.
Model build_model(const ModelSpec& spec, std::uint64_t seed);

enum class WeightMode { kFullPrecision, kDeterministic, kStochastic };

// One stochastically quantized slice of a layer. With layer granularity
// there is a single piece covering the whole tensor (mask == nullptr);
// kernel granularity uses one piece per filter with a 0/1 mask.
struct StochPiece {
  Var beta;                      // scalar leaf owned by the caller
  int bits_hi = 8;
  int bits_lo = 0;
  bool stochastic = true;        // false: deterministic at bits_hi
  const Array* mask = nullptr;   // nullptr = whole tensor
  // Pre-drawn gate shared across a whole DBP group (coarse granularity).
  // nullptr: draw fresh noise inside the forward.
  const SoftChoice* choice = nullptr;
};

struct ForwardOptions {
  WeightMode mode = WeightMode::kFullPrecision;
  int activation_bits = kFullPrecisionBits;
  // Per-layer weight bits for kDeterministic; also supplies the pinned
  // layers' bits in kStochastic mode. Bits >= 32 bypass quantization.
  const std::vector<int>* layer_bits = nullptr;
  bool normalize = false;  // normalize_weights ahead of each quantizer
  // kStochastic: per-layer piece lists, indexed by layer id.
  const std::vector<std::vector<StochPiece>>* stoch = nullptr;
  Rng* rng = nullptr;  // noise source for stochastic draws
  GumbelConfig gumbel;
};

struct ForwardResult {
  Var logits;
  std::vector<Var> w_leaf;       // raw weight leaf per layer (invalid if unused)
  std::vector<Var> b_leaf;       // bias leaf per layer (invalid if none)
  std::vector<Var> w_pre_quant;  // tensor that entered the quantizer, if any
  std::vector<std::vector<StochQuant>> draws;  // stochastic draws per layer
  std::vector<double> act_max;   // max |output| per layer, for diagnostics
};

ForwardResult forward(Tape& t, const Model& m, const Array& x, const ForwardOptions& opts);

}  // namespace sdq
