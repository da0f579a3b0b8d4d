#include "sdq/model.hpp"

#include <algorithm>
#include <cmath>
#include <map>

namespace sdq {

std::size_t Model::num_params() const {
  std::size_t n = 0;
  for (const auto& l : layers) n += l.param_count();
  return n;
}

std::vector<std::size_t> Model::free_ids() const {
  std::vector<std::size_t> ids;
  for (std::size_t i = 0; i < layers.size(); ++i) {
    if (!layers[i].pinned) ids.push_back(i);
  }
  return ids;
}

namespace {

Array init_weight(Shape shape, std::size_t fan_in, Rng rng) {
  Array w(std::move(shape));
  const double scale = 1.0 / std::sqrt(static_cast<double>(fan_in));
  for (double& x : w.data) x = rng.normal(0.0, scale);
  return w;
}

QuantLayer make_dense(const std::string& name, std::size_t in, std::size_t out,
                      double bias_init, Rng rng) {
  QuantLayer l;
  l.name = name;
  l.kind = LayerKind::kDense;
  l.in = in;
  l.out = out;
  l.weight = init_weight({in, out}, in, rng);
  l.bias = Array::full({out}, bias_init);
  return l;
}

QuantLayer make_conv(const std::string& name, std::size_t in_ch, std::size_t out_ch,
                     std::size_t ksize, std::size_t stride, std::size_t pad, Rng rng) {
  QuantLayer l;
  l.name = name;
  l.kind = LayerKind::kConv;
  l.in_ch = in_ch;
  l.out_ch = out_ch;
  l.ksize = ksize;
  l.stride = stride;
  l.pad = pad;
  l.weight = init_weight({out_ch, in_ch, ksize, ksize}, in_ch * ksize * ksize, rng);
  return l;
}

Model build_mlp(const ModelSpec& spec, Rng rng) {
  check_contract(!spec.hidden.empty(), "build_model: mlp needs at least one hidden layer");
  Model m;
  m.id = spec.id;
  m.input_features = spec.input_features;
  m.classes = spec.classes;
  std::size_t prev = spec.input_features;
  for (std::size_t i = 0; i < spec.hidden.size(); ++i) {
    m.layers.push_back(make_dense("dense" + std::to_string(i + 1), prev, spec.hidden[i], 0.5,
                                  rng.derive(i)));
    m.layers.back().block = i / 2;
    prev = spec.hidden[i];
  }
  m.layers.push_back(make_dense("head", prev, spec.classes, 0.0, rng.derive(spec.hidden.size())));
  m.layers.back().block = spec.hidden.size() / 2;
  m.layers.front().pinned = true;
  m.layers.back().pinned = true;
  for (std::size_t i = 0; i < m.layers.size(); ++i) {
    m.steps.push_back({Step::Op::kLinear, i, Step::npos});
    if (i + 1 < m.layers.size()) m.steps.push_back({Step::Op::kAct, Step::npos, Step::npos});
  }
  return m;
}

Model build_resnet_toy(const ModelSpec& spec, Rng rng) {
  check_contract(spec.image_hw >= 4, "build_model: resnet_toy image side must be >= 4");
  const std::size_t C = spec.base_channels;
  check_contract(C >= 1, "build_model: resnet_toy needs base_channels >= 1");
  Model m;
  m.id = spec.id;
  m.input_features = spec.input_features;
  m.classes = spec.classes;
  m.image_shape = {1, spec.image_hw, spec.image_hw};

  // Fixed random lift from the feature vector to a 1-channel image.
  Rng lift_rng = rng.derive(100);
  m.lift = Array({spec.input_features, spec.image_hw * spec.image_hw});
  for (double& x : m.lift.data) x = lift_rng.normal(0.0, 0.5);

  auto add = [&](QuantLayer l, std::size_t block) {
    l.block = block;
    m.layers.push_back(std::move(l));
    return m.layers.size() - 1;
  };
  const std::size_t conv_in = add(make_conv("conv_in", 1, C, 3, 1, 1, rng.derive(0)), 0);
  const std::size_t b1c1 = add(make_conv("b1_conv1", C, C, 3, 1, 1, rng.derive(1)), 1);
  const std::size_t b1c2 = add(make_conv("b1_conv2", C, C, 3, 1, 1, rng.derive(2)), 1);
  const std::size_t b2c1 = add(make_conv("b2_conv1", C, 2 * C, 3, 2, 1, rng.derive(3)), 2);
  const std::size_t b2c2 = add(make_conv("b2_conv2", 2 * C, 2 * C, 3, 1, 1, rng.derive(4)), 2);
  const std::size_t b2p = add(make_conv("b2_proj", C, 2 * C, 1, 2, 0, rng.derive(5)), 2);
  const std::size_t head = add(make_dense("head", 2 * C, spec.classes, 0.0, rng.derive(6)), 3);
  m.layers[conv_in].pinned = true;
  m.layers[head].pinned = true;

  using Op = Step::Op;
  m.steps = {
      {Op::kLinear, conv_in, Step::npos},
      {Op::kAct, Step::npos, Step::npos},
      {Op::kResidualSave, Step::npos, Step::npos},
      {Op::kLinear, b1c1, Step::npos},
      {Op::kAct, Step::npos, Step::npos},
      {Op::kLinear, b1c2, Step::npos},
      {Op::kResidualAdd, Step::npos, Step::npos},
      {Op::kAct, Step::npos, Step::npos},
      {Op::kResidualSave, Step::npos, Step::npos},
      {Op::kLinear, b2c1, Step::npos},
      {Op::kAct, Step::npos, Step::npos},
      {Op::kLinear, b2c2, Step::npos},
      {Op::kResidualAdd, Step::npos, b2p},
      {Op::kAct, Step::npos, Step::npos},
      {Op::kGlobalPool, Step::npos, Step::npos},
      {Op::kLinear, head, Step::npos},
  };
  return m;
}

Model build_stub(const ModelSpec& spec, Rng rng) {
  // Same layer roster as a small mlp, but the forward emits constant zero
  // logits: the task loss is exactly flat, so nothing receives gradient.
  ModelSpec tiny = spec;
  tiny.id = "mlp";
  if (tiny.hidden.empty()) tiny.hidden = {8, 8, 8};
  Model m = build_mlp(tiny, rng);
  m.id = spec.id;
  m.steps.clear();
  m.constant_logits = true;
  return m;
}

}  // namespace

Model build_model(const ModelSpec& spec, std::uint64_t seed) {
  check_contract(spec.classes >= 2, "build_model: need at least two classes");
  check_contract(spec.input_features >= 1, "build_model: need at least one input feature");
  Rng rng(Rng::splitmix64(seed ^ 0xA11CE5));
  if (spec.id == "mlp") return build_mlp(spec, rng);
  if (spec.id == "resnet_toy") return build_resnet_toy(spec, rng);
  if (spec.id == "stub") return build_stub(spec, rng);
  throw ContractError("build_model: unknown model id '" + spec.id + "'");
}

namespace {

// Applies the layer's quantization policy and returns the weights to use.
Var quantized_weights(Tape& t, const Model& m, std::size_t idx, const ForwardOptions& opts,
                      ForwardResult& res) {
  const QuantLayer& layer = m.layers[idx];
  Var w = t.leaf(layer.weight);
  res.w_leaf[idx] = w;
  if (opts.mode == WeightMode::kFullPrecision) return w;

  const int det_bits =
      opts.layer_bits ? (*opts.layer_bits)[idx] : kFullPrecisionBits;

  const bool stochastic_layer = opts.mode == WeightMode::kStochastic && !layer.pinned &&
                                opts.stoch && !(*opts.stoch)[idx].empty();
  if (!stochastic_layer) {
    // Deterministic path: strategy bits, or pinned bits during phase 1.
    if (det_bits >= kFullPrecisionBits) return w;
    Var pre = opts.normalize ? normalize_weights(t, w, det_bits) : w;
    res.w_pre_quant[idx] = pre;
    return quantize_weight(t, pre, det_bits);
  }

  const auto& pieces = (*opts.stoch)[idx];
  Var pre = opts.normalize ? normalize_weights(t, w, pieces[0].bits_hi) : w;
  res.w_pre_quant[idx] = pre;

  Var combined;
  for (const StochPiece& piece : pieces) {
    Var piece_wq;
    if (piece.stochastic) {
      StochQuant sq;
      if (piece.choice) {
        sq = mix_branches(t, pre, piece.bits_hi, piece.bits_lo, *piece.choice);
      } else {
        check_contract(opts.rng != nullptr, "forward: stochastic draw needs an rng");
        sq = stochastic_quantize(t, pre, piece.beta, piece.bits_hi, piece.bits_lo, opts.gumbel,
                                 *opts.rng);
      }
      piece_wq = sq.wq;
      res.draws[idx].push_back(sq);
    } else {
      piece_wq = quantize_weight(t, pre, piece.bits_hi);
      StochQuant sq;
      sq.bits_hi = piece.bits_hi;
      sq.bits_lo = piece.bits_hi;
      sq.stochastic = false;
      res.draws[idx].push_back(sq);
    }
    if (piece.mask == nullptr) {
      check_contract(pieces.size() == 1, "forward: unmasked piece must be the only piece");
      combined = piece_wq;
    } else {
      Var masked = t.mul(piece_wq, t.constant(*piece.mask));
      combined = combined.valid() ? t.add(combined, masked) : masked;
    }
  }
  return combined;
}

Var apply_layer(Tape& t, const Model& m, std::size_t idx, Var input,
                const ForwardOptions& opts, ForwardResult& res) {
  const QuantLayer& layer = m.layers[idx];
  Var w = quantized_weights(t, m, idx, opts, res);
  Var h;
  if (layer.kind == LayerKind::kDense) {
    h = t.matmul(input, w);
    if (layer.bias.size() > 0) {
      Var b = t.leaf(layer.bias);
      res.b_leaf[idx] = b;
      h = t.add_rowvec(h, b);
    }
  } else {
    h = t.conv2d(input, w, layer.stride, layer.pad);
  }
  double peak = 0.0;
  for (double v : h.value().data) peak = std::max(peak, std::abs(v));
  res.act_max[idx] = peak;
  return h;
}

}  // namespace

ForwardResult forward(Tape& t, const Model& m, const Array& x, const ForwardOptions& opts) {
  check_contract(x.shape.size() == 2 && x.shape[1] == m.input_features,
                 "forward: input must be [batch, " + std::to_string(m.input_features) +
                     "], got " + shape_str(x.shape));
  const std::size_t n = x.shape[0];
  ForwardResult res;
  res.w_leaf.resize(m.layers.size());
  res.b_leaf.resize(m.layers.size());
  res.w_pre_quant.resize(m.layers.size());
  res.draws.resize(m.layers.size());
  res.act_max.resize(m.layers.size(), 0.0);

  if (m.constant_logits) {
    res.logits = t.constant(Array({n, m.classes}));
    return res;
  }

  Var h = t.constant(x);
  if (m.lift.size() > 0) {
    h = t.matmul(h, t.constant(m.lift));
    Shape img{n, m.image_shape[0], m.image_shape[1], m.image_shape[2]};
    h = t.reshape(h, img);
  }

  std::vector<Var> saved;
  for (const Step& step : m.steps) {
    switch (step.op) {
      case Step::Op::kLinear:
        h = apply_layer(t, m, step.layer, h, opts, res);
        break;
      case Step::Op::kAct:
        // Bounded activation; quantized flavor when activation bits are set.
        h = opts.activation_bits < kFullPrecisionBits
                ? quantize_activation(t, h, opts.activation_bits)
                : t.clamp(h, 0.0, 1.0);
        break;
      case Step::Op::kGlobalPool:
        h = t.global_avg_pool(h);
        break;
      case Step::Op::kResidualSave:
        saved.push_back(h);
        break;
      case Step::Op::kResidualAdd: {
        check_contract(!saved.empty(), "forward: residual add without a save");
        Var skip = saved.back();
        saved.pop_back();
        if (step.proj != Step::npos) skip = apply_layer(t, m, step.proj, skip, opts, res);
        h = t.add(h, skip);
        break;
      }
    }
  }
  res.logits = h;
  check_contract(res.logits.shape() == Shape{n, m.classes},
                 "forward: program did not end in [batch, classes] logits");
  return res;
}

}  // namespace sdq
