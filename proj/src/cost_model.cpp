#include "sdq/cost_model.hpp"

#include <fstream>
#include <sstream>

#include "sdq/errors.hpp"

namespace sdq {

LayerMeta::Kind parse_layer_kind(const std::string& name) {
  if (name == "conv") return LayerMeta::Kind::kConv;
  if (name == "dense") return LayerMeta::Kind::kDense;
  if (name == "depthwise") return LayerMeta::Kind::kDepthwise;
  throw ContractError("unknown layer kind '" + name + "' (want conv|dense|depthwise)");
}

std::string layer_kind_name(LayerMeta::Kind kind) {
  switch (kind) {
    case LayerMeta::Kind::kConv: return "conv";
    case LayerMeta::Kind::kDense: return "dense";
    case LayerMeta::Kind::kDepthwise: return "depthwise";
  }
  throw ContractError("unreachable layer kind");
}

double bitops(const LayerMeta& meta, int b_w, int b_a) {
  check_contract(b_w >= 1 && b_a >= 1, "bitops needs bitwidths >= 1");
  check_contract(meta.params > 0, "bitops: layer '" + meta.name + "' has zero params");
  check_contract(meta.stride >= 1, "bitops: layer '" + meta.name + "' has zero stride");
  const double macs = static_cast<double>(meta.params) * static_cast<double>(meta.width) *
                      static_cast<double>(meta.height) /
                      (static_cast<double>(meta.stride) * static_cast<double>(meta.stride));
  return static_cast<double>(b_w) * static_cast<double>(b_a) * macs;
}

CostReport cost_report(const std::vector<LayerMeta>& metas, const MpqStrategy& strategy) {
  check_contract(!metas.empty(), "cost_report on empty layer table");
  CostReport r;
  for (const auto& meta : metas) {
    const LayerChoice& choice = strategy.layer(meta.name);  // throws if uncovered
    LayerCost c;
    c.name = meta.name;
    c.b_w = choice.bits;
    c.b_a = choice.pinned ? choice.bits : strategy.activation_bits;
    c.bitops = bitops(meta, c.b_w, c.b_a);
    r.total_bitops += c.bitops;
    r.per_layer.push_back(std::move(c));
  }
  r.size_bytes = model_size_bytes(strategy);
  r.size_mib = r.size_bytes / (1024.0 * 1024.0);
  r.avg_weight_bits = strategy.avg_weight_bits();
  r.wcr = 32.0 / r.avg_weight_bits;
  return r;
}

double model_size_bytes(const MpqStrategy& strategy) {
  double bytes = 0.0;
  for (const auto& l : strategy.layers)
    bytes += static_cast<double>(l.params) * static_cast<double>(l.bits) / 8.0;
  return bytes;
}

double wcr(const MpqStrategy& strategy) { return 32.0 / strategy.avg_weight_bits(); }

MpqStrategy hw_round(const MpqStrategy& strategy, const std::vector<int>& supported) {
  check_contract(!supported.empty(), "hw_round with empty supported set");
  for (std::size_t i = 1; i < supported.size(); ++i)
    check_contract(supported[i - 1] < supported[i], "hw_round supported set must be ascending");
  MpqStrategy out = strategy;
  for (auto& l : out.layers) {
    int rounded = -1;
    for (int s : supported) {
      if (s >= l.bits) {
        rounded = s;
        break;
      }
    }
    check_contract(rounded > 0, "hw_round: layer '" + l.name + "' at " +
                                    std::to_string(l.bits) +
                                    " bits exceeds max supported width");
    l.bits = rounded;
  }
  return out;
}

HwGap hw_gap(const MpqStrategy& before, const MpqStrategy& after) {
  HwGap g;
  g.avg_bits_before = before.avg_weight_bits();
  g.avg_bits_after = after.avg_weight_bits();
  g.wcr_before = 32.0 / g.avg_bits_before;
  g.wcr_after = 32.0 / g.avg_bits_after;
  return g;
}

std::vector<LayerMeta> parse_layer_table(const std::string& text) {
  std::vector<LayerMeta> metas;
  std::istringstream in(text);
  std::string line;
  std::size_t line_no = 0;
  while (std::getline(in, line)) {
    ++line_no;
    const auto hash = line.find('#');
    if (hash != std::string::npos) line.erase(hash);
    std::istringstream ls(line);
    std::string name;
    if (!(ls >> name)) continue;  // blank or comment-only
    std::string kind;
    LayerMeta m;
    m.name = name;
    if (!(ls >> kind >> m.params >> m.width >> m.height >> m.stride))
      throw ContractError("layer table line " + std::to_string(line_no) +
                          ": want '<name> <kind> <params> <width> <height> <stride>'");
    try {
      m.kind = parse_layer_kind(kind);
    } catch (const ContractError& e) {
      throw ContractError("layer table line " + std::to_string(line_no) + ": " + e.what());
    }
    if (m.params == 0 || m.stride == 0)
      throw ContractError("layer table line " + std::to_string(line_no) +
                          ": params and stride must be positive");
    metas.push_back(std::move(m));
  }
  check_contract(!metas.empty(), "layer table has no layers");
  return metas;
}

std::vector<LayerMeta> read_layer_table(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  check_contract(static_cast<bool>(in), "cannot open layer table: " + path);
  std::ostringstream buf;
  buf << in.rdbuf();
  return parse_layer_table(buf.str());
}

}  // namespace sdq
