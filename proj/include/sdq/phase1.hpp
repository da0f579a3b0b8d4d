#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include "sdq/data.hpp"
#include "sdq/dbp.hpp"
#include "sdq/model.hpp"
#include "sdq/optim.hpp"
#include "sdq/strategy.hpp"

namespace sdq {

// How many bitwidth parameters the search maintains: one for the whole net,
// one per residual block, one per layer (default), or one per conv filter.
enum class Granularity { kNet, kBlock, kLayer, kKernel };

Granularity parse_granularity(const std::string& name);
std::string granularity_name(Granularity g);

// One searchable group: the network slice governed by a single beta row.
// masks[i] restricts the group to part of layers[i]'s tensor; an empty mask
// means the whole tensor.
struct DbpGroup {
  std::string name;
  std::vector<std::size_t> layers;
  std::vector<Array> masks;
  std::size_t params = 0;
};

// Partition of the non-pinned layers; pinned layers are never searched.
std::vector<DbpGroup> make_groups(const Model& m, Granularity g);

struct Phase1Config {
  double lambda_q = 2e-4;        // quantization-error regularizer weight
  double beta_threshold = 1e-3;  // decay trigger, strict less-than
  std::size_t epochs = 14;
  std::vector<int> candidates = {2, 3, 4, 5, 6, 7, 8};  // ascending
  int activation_bits = 4;
  int pinned_bits = 8;
  Granularity granularity = Granularity::kLayer;
  bool normalize = false;        // weight normalization ahead of quantizers
  bool decay_per_step = false;   // default: decay check at each epoch end
  bool per_sample_choice = false;  // fresh branch draw per sample, not per batch
  GumbelConfig gumbel;
};

struct DecayEvent {
  std::string group;
  int old_bits = 0;
  int new_bits = 0;
};

struct StepRecord {
  double task_loss = 0.0;
  double qer = 0.0;    // unscaled regularizer value
  double total = 0.0;  // task + lambda_q * qer
  double weight_grad_norm = 0.0;
  double beta_grad_norm = 0.0;
  std::size_t correct = 0;  // argmax hits in the batch
  std::size_t clamped = 0;  // betas pushed back into storage range
};

// Everything phase1_step mutates across steps.
struct Phase1State {
  DbpTable dbp;
  std::vector<DbpGroup> groups;
  ParamGroup weight_opt;
  ParamGroup dbp_opt;
  Rng rng;

  Phase1State(DbpTable table, std::vector<DbpGroup> gs, OptimSpec wopt, OptimSpec bopt,
              std::uint64_t seed)
      : dbp(std::move(table)),
        groups(std::move(gs)),
        weight_opt(wopt),
        dbp_opt(bopt),
        rng(seed) {}
};

// The quantization-error regularizer: sum over groups of
//   beta_active * (2^bits - 1)^2 * ||Q(w, bits) - w||^2
// evaluated on detached weight values, so the betas are the only gradient
// path. `pre_quant` must be the tensors the quantizers actually saw.
Var qer_loss(Tape& t, const Model& m, const std::vector<DbpGroup>& groups, const DbpTable& dbp,
             const std::vector<Var>& beta_leaf, const std::vector<Array>& pre_quant);

// One minibatch update: stochastic-quantization forward, task loss plus the
// scaled regularizer, one optimizer step on weights (task gradients only)
// and on the active betas (both terms). Throws NumericError on a non-finite
// loss, naming the layer with the largest activation magnitude.
StepRecord phase1_step(Model& m, Phase1State& st, const Phase1Config& cfg, const Array& x,
                       const std::vector<int>& labels, double lr, double dbp_lr);

// Moves every group whose active beta fell strictly below the threshold down
// one candidate; the lowest candidate is a floor. The new level's beta is
// whatever it already held (1 unless previously trained). Optimizer state
// for a decayed row is dropped. Returns the change log.
std::vector<DecayEvent> decay_bitwidths(DbpTable& dbp, const std::vector<DbpGroup>& groups,
                                        double beta_threshold, ParamGroup* dbp_opt);

// Freezes the current table into a per-layer strategy. A layer covered by
// several groups (kernel granularity) records the widest choice.
MpqStrategy extract_strategy(const Model& m, const DbpTable& dbp,
                             const std::vector<DbpGroup>& groups, const Phase1Config& cfg);

struct GroupSnapshot {
  std::string name;
  int bits = 0;
  double beta = 1.0;
};

struct Phase1EpochRecord {
  std::size_t epoch = 0;
  double task_loss = 0.0;
  double qer = 0.0;
  double total = 0.0;
  double accuracy = 0.0;
  double weight_grad_norm = 0.0;
  double beta_grad_norm = 0.0;
  std::size_t clamped = 0;
  std::vector<GroupSnapshot> groups;
  std::vector<DecayEvent> decays;
};

struct Phase1Options {
  OptimSpec weight_opt;  // kind/lr defaults below
  OptimSpec dbp_opt;
  LrSchedule schedule;
  std::size_t batch_size = 32;
  std::uint64_t seed = 7;

  Phase1Options() {
    weight_opt.kind = OptimSpec::Kind::kAdam;
    weight_opt.lr = 0.01;
    dbp_opt.kind = OptimSpec::Kind::kSgd;
    dbp_opt.lr = 0.02;
    dbp_opt.momentum = 0.9;
  }
};

struct Phase1Result {
  MpqStrategy strategy;
  std::vector<Phase1EpochRecord> epochs;
};

Phase1Result run_phase1(Model& m, const Dataset& train, const Phase1Config& cfg,
                        const Phase1Options& opt);

}  // namespace sdq
