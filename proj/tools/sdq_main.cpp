// Command-line surface: strategy generation, fixed-strategy training,
// evaluation, cost reporting, metrics conversion, and a quick self-test.
// Exit codes: 0 success, 1 configuration/contract faults (single-line
// message), 2 numerical aborts.

#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <sstream>

#include <CLI11.hpp>

#include "sdq/checkpoint.hpp"
#include "sdq/config.hpp"
#include "sdq/cost_model.hpp"
#include "sdq/grad_check.hpp"
#include "sdq/metrics.hpp"
#include "sdq/phase1.hpp"
#include "sdq/phase2.hpp"
#include "sdq/quantizers.hpp"

namespace fs = std::filesystem;
using namespace sdq;

namespace {

void apply_env_overrides(RunConfig& cfg) {
  if (const char* dir = std::getenv("SDQ_OUT_DIR")) cfg.out_dir = dir;
  if (const char* seed = std::getenv("SDQ_SEED")) {
    std::istringstream in(seed);
    std::uint64_t v = 0;
    if (!(in >> v) || !in.eof()) throw ContractError("SDQ_SEED must be an integer");
    cfg.seed = v;
  }
}

RunConfig load_run_config(const std::string& path) {
  RunConfig cfg = read_config(path);
  apply_env_overrides(cfg);
  return cfg;
}

fs::path prepare_out_dir(const RunConfig& cfg) {
  fs::path dir(cfg.out_dir);
  fs::create_directories(dir);
  write_config((dir / "config.cfg").string(), cfg);
  return dir;
}

Model build_from(const RunConfig& cfg) { return build_model(cfg.model, cfg.seed); }

SplitDataset data_from(const RunConfig& cfg) {
  DatasetSpec spec = cfg.data;
  spec.classes = cfg.model.classes;  // labels must line up with the head
  return gen_dataset(spec);
}

int cmd_generate_strategy(const std::string& config_path) {
  RunConfig cfg = load_run_config(config_path);
  fs::path dir = prepare_out_dir(cfg);

  Model model = build_from(cfg);
  SplitDataset data = data_from(cfg);

  Phase1Options opt;
  opt.weight_opt = cfg.p1_weight_opt;
  opt.dbp_opt = cfg.p1_dbp_opt;
  opt.schedule = cfg.p1_schedule;
  opt.batch_size = cfg.p1_batch;
  opt.seed = cfg.seed;
  Phase1Result result = run_phase1(model, data.train, cfg.phase1, opt);

  MetricsWriter metrics((dir / "metrics.jsonl").string());
  for (const auto& rec : result.epochs) metrics.write(to_json(rec));
  write_strategy((dir / "strategy.txt").string(), result.strategy);
  save_checkpoint((dir / "checkpoint.ckpt").string(), model);

  std::cout << "strategy " << (dir / "strategy.txt").string() << "\n";
  std::cout << "avg_weight_bits " << result.strategy.avg_weight_bits() << "\n";
  return 0;
}

int cmd_train(const std::string& config_path, const std::string& strategy_path,
              std::string teacher_path) {
  RunConfig cfg = load_run_config(config_path);
  fs::path dir = prepare_out_dir(cfg);

  MpqStrategy strategy = read_strategy(strategy_path);
  check_contract(strategy.model_id == cfg.model.id,
                 "strategy is for model '" + strategy.model_id + "', config builds '" +
                     cfg.model.id + "'");
  SplitDataset data = data_from(cfg);

  // Extend the log the bitwidth search started so one file tells the whole
  // story; a fresh out dir still begins a fresh log.
  MetricsWriter metrics((dir / "metrics.jsonl").string(), /*append=*/true);

  // The teacher is the same architecture trained at full precision. Train
  // one unless a checkpoint was supplied.
  Model teacher = build_from(cfg);
  if (teacher_path.empty()) {
    auto records = train_full_precision(teacher, data.train, cfg.teacher_epochs,
                                        cfg.teacher_opt, LrSchedule{}, cfg.p2_batch, cfg.seed);
    for (const auto& rec : records) metrics.write(to_json(rec));
    teacher_path = (dir / "teacher.ckpt").string();
    save_checkpoint(teacher_path, teacher);
  } else {
    load_checkpoint(teacher_path, teacher);
  }

  // Student starts from the teacher's weights.
  Model student = build_from(cfg);
  for (std::size_t l = 0; l < student.layers.size(); ++l) {
    student.layers[l].weight = teacher.layers[l].weight;
    student.layers[l].bias = teacher.layers[l].bias;
  }

  Phase2Options opt;
  opt.opt = cfg.p2_opt;
  opt.schedule = cfg.p2_schedule;
  opt.batch_size = cfg.p2_batch;
  opt.seed = cfg.seed;
  Phase2Result result = run_phase2(student, teacher, data.train, strategy, cfg.phase2, opt);
  for (const auto& rec : result.epochs) metrics.write(to_json(rec));

  write_strategy((dir / "strategy.txt").string(), strategy);
  save_checkpoint((dir / "checkpoint.ckpt").string(), student);

  const double test_acc = evaluate(student, data.test, &strategy, cfg.phase2.normalize);
  std::cout << "checkpoint " << (dir / "checkpoint.ckpt").string() << "\n";
  std::cout << "test_accuracy " << test_acc << "\n";
  return 0;
}

int cmd_eval(const std::string& config_path, const std::string& checkpoint_path,
             const std::string& strategy_path) {
  RunConfig cfg = load_run_config(config_path);
  Model model = build_from(cfg);
  load_checkpoint(checkpoint_path, model);
  SplitDataset data = data_from(cfg);

  double acc;
  if (strategy_path.empty()) {
    acc = evaluate(model, data.test, nullptr, false);
  } else {
    MpqStrategy strategy = read_strategy(strategy_path);
    acc = evaluate(model, data.test, &strategy, cfg.phase2.normalize);
  }
  std::cout << "test_accuracy " << acc << "\n";
  return 0;
}

int cmd_cost(const std::string& strategy_path, const std::string& layers_path,
             const std::string& hw) {
  MpqStrategy strategy = read_strategy(strategy_path);
  std::vector<LayerMeta> metas = read_layer_table(layers_path);
  CostReport report = cost_report(metas, strategy);

  std::cout << "layers " << report.per_layer.size() << "\n";
  std::cout << "total_bitops " << report.total_bitops << "\n";
  std::cout << "size_bytes " << report.size_bytes << "\n";
  std::cout << "size_mib " << report.size_mib << "\n";
  std::cout << "avg_weight_bits " << report.avg_weight_bits << "\n";
  std::cout << "wcr " << report.wcr << "\n";

  if (!hw.empty()) {
    std::vector<int> supported;
    std::istringstream in(hw);
    std::string piece;
    while (std::getline(in, piece, ','))
      supported.push_back(static_cast<int>(std::stol(piece)));
    MpqStrategy rounded = hw_round(strategy, supported);
    HwGap gap = hw_gap(strategy, rounded);
    std::cout << "hw_supported " << hw << "\n";
    std::cout << "hw_avg_weight_bits " << gap.avg_bits_after << "\n";
    std::cout << "theoretical_wcr " << gap.wcr_before << "\n";
    std::cout << "hw_wcr " << gap.wcr_after << "\n";
  }
  return 0;
}

int cmd_report(const std::string& metrics_path, const std::string& out_dir,
               const std::string& config_path, const std::string& checkpoint_path,
               const std::string& strategy_path) {
  fs::create_directories(out_dir);
  std::ifstream in(metrics_path);
  check_contract(static_cast<bool>(in), "cannot open metrics log: " + metrics_path);

  // Bitwidth-trajectory table from the phase-1 records.
  std::ofstream bits_csv(fs::path(out_dir) / "bits_trajectory.csv");
  check_contract(static_cast<bool>(bits_csv), "cannot write bits_trajectory.csv");
  bits_csv << "epoch,group,bits,beta\n";
  std::string line;
  while (std::getline(in, line)) {
    if (line.empty()) continue;
    ordered_json rec = ordered_json::parse(line, nullptr, false);
    check_contract(!rec.is_discarded(), "metrics log holds a malformed line");
    if (rec.value("phase", -1) != 1) continue;
    for (const auto& g : rec.at("groups")) {
      bits_csv << rec.at("epoch").get<std::size_t>() << ',' << g.at("name").get<std::string>()
               << ',' << g.at("bits").get<int>() << ',' << g.at("beta").get<double>() << "\n";
    }
  }

  // Per-layer weight/bin histograms from a checkpoint at a strategy.
  if (!checkpoint_path.empty()) {
    check_contract(!config_path.empty() && !strategy_path.empty(),
                   "report --checkpoint needs --config and --strategy");
    RunConfig cfg = load_run_config(config_path);
    Model model = build_from(cfg);
    load_checkpoint(checkpoint_path, model);
    MpqStrategy strategy = read_strategy(strategy_path);

    std::ofstream bins_csv(fs::path(out_dir) / "bins.csv");
    check_contract(static_cast<bool>(bins_csv), "cannot write bins.csv");
    bins_csv << "layer,level,count,mean,variance\n";
    for (const QuantLayer& layer : model.layers) {
      const int bits = strategy.layer(layer.name).bits;
      if (bits >= kFullPrecisionBits) continue;
      const Array w = cfg.phase2.normalize ? normalize_weights_values(layer.weight, bits)
                                           : layer.weight;
      BinHistogram h = bin_assign(w, bits);
      for (std::size_t bin = 0; bin < h.members.size(); ++bin) {
        const auto& idx = h.members[bin];
        double mean = 0.0, var = 0.0;
        for (std::size_t i : idx) mean += w[i];
        if (!idx.empty()) mean /= static_cast<double>(idx.size());
        for (std::size_t i : idx) var += (w[i] - mean) * (w[i] - mean);
        if (!idx.empty()) var /= static_cast<double>(idx.size());
        bins_csv << layer.name << ',' << h.levels[bin] << ',' << idx.size() << ',' << mean
                 << ',' << var << "\n";
      }
    }
  }
  std::cout << "report " << out_dir << "\n";
  return 0;
}

// A fast subset of the oracle suites; the full set lives in the test
// binaries.
int cmd_selftest() {
  std::size_t failures = 0;
  auto check = [&failures](bool ok, const std::string& what) {
    std::cout << (ok ? "ok " : "FAIL ") << what << "\n";
    if (!ok) ++failures;
  };

  {
    // Straight-through gradient: bitwise pass-through on quantize_unit.
    Rng rng(11);
    bool ok = true;
    for (int rep = 0; rep < 50 && ok; ++rep) {
      Array x({16});
      for (double& v : x.data) v = rng.uniform01();
      Tape t;
      Var leaf = t.leaf(x);
      Var q = quantize_unit(t, leaf, 1 + rep % 8);
      t.backward(t.sum(q));
      const Array& g = t.grad(leaf);
      for (double v : g.data) ok = ok && v == 1.0;
    }
    check(ok, "ste gradient pass-through");
  }
  {
    // Monte-Carlo quantization error against the closed form at b=4.
    Rng rng(13);
    const ClampQuantizer q{4, 0.0, 1.0};
    double acc = 0.0;
    const int n = 200000;
    for (int i = 0; i < n; ++i) {
      const double w = rng.uniform01();
      const double err = w - q.step() * std::round(w / q.step());
      acc += err * err;
    }
    const double coeff = acc / n;
    check(std::abs(coeff - expected_error_coeff(4)) / expected_error_coeff(4) < 0.05,
          "expected quantization error coefficient");
  }
  {
    // Hardened Gumbel choice frequency tracks beta.
    Rng rng(17);
    const double beta = 0.3;
    int ones = 0;
    const int n = 20000;
    for (int i = 0; i < n; ++i) {
      Tape t;
      SoftChoice c = soft_choice(t, t.leaf(Array::scalar(beta)), GumbelConfig{}, rng);
      ones += c.c.item() >= 0.5 ? 1 : 0;
    }
    const double freq = static_cast<double>(ones) / n;
    check(std::abs(freq - beta) < 0.02, "bernoulli fidelity of the hardened choice gate");
  }
  {
    // Uniform bins carry entropy b ln 2.
    Array w({4096});
    Rng rng(19);
    for (double& v : w.data) v = rng.uniform01() * 2.0 - 1.0;
    BinHistogram h = bin_assign(w, 2);
    check(std::abs(bin_entropy(h) - 2.0 * std::log(2.0)) < 0.05, "bin entropy near b ln 2");
  }
  {
    // Pinned cost constants for the bundled ResNet18 table; look next to the
    // working dir first, then next to the binary (in-tree build layout), then
    // in the source tree this binary was configured from.
    std::string table = "data/resnet18_layers.txt";
    if (!fs::exists(table)) {
      std::error_code ec;
      const fs::path exe = fs::read_symlink("/proc/self/exe", ec);
      if (!ec) {
        const fs::path near_exe = exe.parent_path() / ".." / ".." / "data" /
                                  "resnet18_layers.txt";
        if (fs::exists(near_exe)) table = near_exe.string();
      }
    }
#ifdef SDQ_SOURCE_DATA_DIR
    if (!fs::exists(table)) {
      const fs::path in_source = fs::path(SDQ_SOURCE_DATA_DIR) / "resnet18_layers.txt";
      if (fs::exists(in_source)) table = in_source.string();
    }
#endif
    std::vector<LayerMeta> metas = read_layer_table(table);
    MpqStrategy s;
    s.model_id = "resnet18";
    s.activation_bits = 4;
    s.candidates = {8, 4};
    for (const auto& m : metas) {
      const bool pinned = m.name == "conv1" || m.name == "fc";
      s.layers.push_back({m.name, pinned ? 8 : 4, m.params, pinned});
    }
    CostReport r = cost_report(metas, s);
    check(std::abs(r.total_bitops - 34.7e9) / 34.7e9 < 0.05, "resnet18 bitops constant");
    check(std::abs(r.size_mib - 5.8) / 5.8 < 0.03, "resnet18 size constant");
  }

  if (failures) {
    std::cout << failures << " selftest failures\n";
    return 1;
  }
  std::cout << "selftest passed\n";
  return 0;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"stochastic differentiable quantization pipeline"};
  app.require_subcommand(1);

  std::string config_path, strategy_path, checkpoint_path, teacher_path;
  std::string layers_path, hw, metrics_path, out_dir;

  auto* gen = app.add_subcommand("generate-strategy", "run the bitwidth search (phase 1)");
  gen->add_option("--config", config_path, "run configuration")->required();

  auto* train = app.add_subcommand("train", "train at a fixed strategy (phase 2)");
  train->add_option("--config", config_path, "run configuration")->required();
  train->add_option("--strategy", strategy_path, "strategy file")->required();
  train->add_option("--teacher", teacher_path, "teacher checkpoint (trained if omitted)");

  auto* eval_cmd = app.add_subcommand("eval", "report a checkpoint's test accuracy");
  eval_cmd->add_option("--config", config_path, "run configuration")->required();
  eval_cmd->add_option("--checkpoint", checkpoint_path, "model checkpoint")->required();
  eval_cmd->add_option("--strategy", strategy_path, "evaluate at this strategy");

  auto* cost = app.add_subcommand("cost", "BitOPs / size / compression of a strategy");
  cost->add_option("--strategy", strategy_path, "strategy file")->required();
  cost->add_option("--layers", layers_path, "layer table")->required();
  cost->add_option("--hw", hw, "supported hardware bitwidths, e.g. 2,4,8,16");

  auto* report = app.add_subcommand("report", "convert metrics logs to CSV tables");
  report->add_option("--metrics", metrics_path, "metrics JSON-lines file")->required();
  report->add_option("--out", out_dir, "output directory")->required();
  report->add_option("--config", config_path, "run configuration (for bin histograms)");
  report->add_option("--checkpoint", checkpoint_path, "checkpoint (for bin histograms)");
  report->add_option("--strategy", strategy_path, "strategy (for bin histograms)");

  auto* selftest = app.add_subcommand("selftest", "run the quick oracle checks");

  try {
    app.parse(argc, argv);
    if (gen->parsed()) return cmd_generate_strategy(config_path);
    if (train->parsed()) return cmd_train(config_path, strategy_path, teacher_path);
    if (eval_cmd->parsed()) return cmd_eval(config_path, checkpoint_path, strategy_path);
    if (cost->parsed()) return cmd_cost(strategy_path, layers_path, hw);
    if (report->parsed())
      return cmd_report(metrics_path, out_dir, config_path, checkpoint_path, strategy_path);
    if (selftest->parsed()) return cmd_selftest();
    throw ContractError("no subcommand selected");
  } catch (const CLI::ParseError& e) {
    if (e.get_exit_code() == 0) return app.exit(e);  // --help
    std::cerr << "error: " << e.what() << "\n";
    return 1;
  } catch (const NumericError& e) {
    std::cerr << "numeric-error: " << e.what() << "\n";
    return 2;
  } catch (const ContractError& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 1;
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 1;
  }
}
