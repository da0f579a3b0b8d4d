#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <cmath>
#include <cstdio>
#include <string>
#include <vector>

#include "sdq/cost_model.hpp"
#include "sdq/errors.hpp"
#include "sdq/strategy.hpp"

using namespace sdq;

namespace {

// The reference ResNet18 table shipped with the tool. Tests run from the
// build tree, so resolve against the source-relative data directory.
std::vector<LayerMeta> resnet18() {
  for (const char* p : {"data/resnet18_layers.txt", "../data/resnet18_layers.txt",
                        "../../data/resnet18_layers.txt",
#ifdef SDQ_SOURCE_DATA_DIR
                        SDQ_SOURCE_DATA_DIR "/resnet18_layers.txt",
#endif
                        }) {
    std::FILE* f = std::fopen(p, "rb");
    if (f) {
      std::fclose(f);
      return read_layer_table(p);
    }
  }
  throw ContractError("resnet18 layer table not found from test working dir");
}

// Uniform 4-bit weights and activations with first/last layers held at 8.
MpqStrategy mixed_4_8(const std::vector<LayerMeta>& metas) {
  MpqStrategy s;
  s.model_id = "resnet18";
  s.activation_bits = 4;
  s.candidates = {8, 7, 6, 5, 4, 3, 2};
  for (std::size_t i = 0; i < metas.size(); ++i) {
    const bool edge = (i == 0 || i + 1 == metas.size());
    s.layers.push_back({metas[i].name, edge ? 8 : 4, metas[i].params, edge});
  }
  return s;
}

}  // namespace

TEST_CASE("bitops evaluates the closed form") {
  LayerMeta meta{"f", LayerMeta::Kind::kConv, 100, 4, 4, 2};
  CHECK(bitops(meta, 2, 2) == 1600.0);
  CHECK(bitops(meta, 2, 4) == 3200.0);         // linear in b_a
  CHECK(bitops(meta, 4, 2) == 3200.0);         // linear in b_w
  CHECK(bitops(meta, 1, 1) * 4.0 == bitops(meta, 2, 2));  // separable
  CHECK_THROWS_AS((void)bitops(meta, 0, 2), ContractError);
  CHECK_THROWS_AS((void)bitops(meta, 2, 0), ContractError);
}

TEST_CASE("bitops halving both widths quarters the total") {
  LayerMeta meta{"f", LayerMeta::Kind::kConv, 12345, 14, 14, 2};
  CHECK(bitops(meta, 8, 8) == doctest::Approx(4.0 * bitops(meta, 4, 4)).epsilon(1e-12));
}

TEST_CASE("the resnet18 table carries the reference totals") {
  auto metas = resnet18();
  REQUIRE(metas.size() == 21);
  std::size_t params = 0;
  double macs = 0.0;
  for (const auto& m : metas) {
    params += m.params;
    macs += bitops(m, 1, 1);
  }
  CHECK(params == 11678912);
  CHECK(macs == 1814073344.0);
}

TEST_CASE("resnet18 at 4/4 with 8-bit edges hits the reference cost point") {
  auto metas = resnet18();
  MpqStrategy s = mixed_4_8(metas);
  CostReport rep = cost_report(metas, s);

  // Exact arithmetic of the mixed strategy, then the reference rounded values.
  CHECK(rep.total_bitops == 34714419200.0);
  CHECK(std::abs(rep.total_bitops - 34.7e9) / 34.7e9 < 0.05);
  CHECK(rep.size_bytes == 6100160.0);
  CHECK(rep.size_mib == doctest::Approx(6100160.0 / 1048576.0).epsilon(1e-12));
  CHECK(std::abs(rep.size_mib - 5.8) / 5.8 < 0.03);
  CHECK(rep.per_layer.size() == metas.size());

  // Pinned layers compute at their own width on both operands.
  CHECK(rep.per_layer.front().b_w == 8);
  CHECK(rep.per_layer.front().b_a == 8);
  CHECK(rep.per_layer[1].b_w == 4);
  CHECK(rep.per_layer[1].b_a == 4);
}

TEST_CASE("the reference compression rate follows from the average bitwidth") {
  MpqStrategy s;
  s.model_id = "toy";
  s.activation_bits = 4;
  s.candidates = {2, 1};
  s.layers.push_back({"a", 1, 7, false});
  s.layers.push_back({"b", 2, 93, false});
  CHECK(s.avg_weight_bits() == doctest::Approx(1.93).epsilon(1e-12));
  CHECK(wcr(s) == doctest::Approx(32.0 / 1.93).epsilon(1e-12));
  CHECK(std::abs(wcr(s) - 16.6) / 16.6 < 0.005);
}

TEST_CASE("all layers at 32 bits gives unit compression") {
  MpqStrategy s;
  s.model_id = "toy";
  s.activation_bits = 32;
  s.candidates = {32};
  s.layers.push_back({"a", 32, 100, false});
  s.layers.push_back({"b", 32, 300, false});
  CHECK(wcr(s) == 1.0);
  CHECK(model_size_bytes(s) == 400.0 * 4.0);
}

TEST_CASE("model size is exactly linear in each layer's bitwidth") {
  MpqStrategy s;
  s.model_id = "toy";
  s.activation_bits = 4;
  s.candidates = {8, 4};
  s.layers.push_back({"a", 4, 1000, false});
  s.layers.push_back({"b", 8, 50, false});
  const double base = model_size_bytes(s);
  s.layers[0].bits = 5;
  CHECK(model_size_bytes(s) - base == doctest::Approx(1000.0 / 8.0).epsilon(1e-12));
  s.layers[0].bits = 6;
  CHECK(model_size_bytes(s) - base == doctest::Approx(2.0 * 1000.0 / 8.0).epsilon(1e-12));
}

TEST_CASE("hw_round lifts to the next supported width and reports the gap") {
  MpqStrategy s;
  s.model_id = "toy";
  s.activation_bits = 4;
  s.candidates = {8, 4, 3, 2};
  s.layers.push_back({"a", 3, 100, false});
  s.layers.push_back({"b", 4, 100, false});
  s.layers.push_back({"c", 2, 100, false});

  MpqStrategy r = hw_round(s, {2, 4, 8, 16});
  CHECK(r.layer("a").bits == 4);   // ceiling rule
  CHECK(r.layer("b").bits == 4);   // fixed point
  CHECK(r.layer("c").bits == 2);   // fixed point
  for (std::size_t i = 0; i < s.layers.size(); ++i) {
    CHECK(r.layers[i].bits >= s.layers[i].bits);
  }

  // Idempotent: rounding a rounded strategy changes nothing.
  MpqStrategy rr = hw_round(r, {2, 4, 8, 16});
  CHECK(serialize_strategy(rr) == serialize_strategy(r));

  HwGap gap = hw_gap(s, r);
  CHECK(gap.avg_bits_before == doctest::Approx(3.0).epsilon(1e-12));
  CHECK(gap.avg_bits_after == doctest::Approx(10.0 / 3.0).epsilon(1e-12));
  CHECK(gap.avg_bits_after >= gap.avg_bits_before);  // ceiling monotonicity
  CHECK(gap.wcr_after <= gap.wcr_before);

  // A width above the largest lane cannot be deployed.
  s.layers[0].bits = 12;
  CHECK_THROWS_AS((void)hw_round(s, {2, 4, 8}), ContractError);
  // The supported set must be strictly ascending and non-empty.
  CHECK_THROWS_AS((void)hw_round(r, {}), ContractError);
  CHECK_THROWS_AS((void)hw_round(r, {4, 2, 8}), ContractError);
}

TEST_CASE("layer tables parse kinds, comments, and report bad lines") {
  const std::string good =
      "# a comment\n"
      "\n"
      "conv1 conv 9408 224 224 2\n"
      "fc dense 512000 1 1 1\n"
      "dw depthwise 288 56 56 1\n";
  auto metas = parse_layer_table(good);
  REQUIRE(metas.size() == 3);
  CHECK(metas[0].kind == LayerMeta::Kind::kConv);
  CHECK(metas[0].params == 9408);
  CHECK(metas[0].stride == 2);
  CHECK(metas[1].kind == LayerMeta::Kind::kDense);
  CHECK(metas[2].kind == LayerMeta::Kind::kDepthwise);

  auto line_of = [](const std::string& text) {
    try {
      (void)parse_layer_table(text);
    } catch (const ContractError& e) {
      return std::string(e.what());
    }
    return std::string();
  };
  CHECK(line_of("conv1 conv 9408 224 224\n").find("line 1") != std::string::npos);
  CHECK(line_of("ok conv 1 1 1 1\nbad pool 1 1 1 1\n").find("line 2") != std::string::npos);
  CHECK(line_of("bad conv x 1 1 1\n").find("line 1") != std::string::npos);

  CHECK_THROWS_AS((void)read_layer_table("does_not_exist.txt"), ContractError);
}

TEST_CASE("cost_report rejects a strategy that misses table layers") {
  auto metas = parse_layer_table("a conv 10 4 4 1\nb conv 10 4 4 1\n");
  MpqStrategy s;
  s.model_id = "toy";
  s.activation_bits = 4;
  s.candidates = {4};
  s.layers.push_back({"a", 4, 10, false});
  CHECK_THROWS_AS((void)cost_report(metas, s), ContractError);
}
