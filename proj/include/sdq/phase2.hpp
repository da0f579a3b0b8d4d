#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include "sdq/data.hpp"
#include "sdq/model.hpp"
#include "sdq/optim.hpp"
#include "sdq/strategy.hpp"

namespace sdq {

// Membership of one tensor's entries in the 2^b quantization bins: bin k is
// the equal-width cell of [-1,1] around level 2k/(2^b-1) - 1. Values beyond
// [-1,1] land in the end bins; a value on a boundary belongs to the upper
// bin.
struct BinHistogram {
  int bits = 0;
  std::vector<double> levels;
  std::vector<std::vector<std::size_t>> members;  // indices into the tensor
  std::size_t total = 0;

  std::vector<double> proportions() const;  // counts / total, sums to 1
};

BinHistogram bin_assign(const Array& w, int bits);

// Shannon entropy of the bin proportions, natural log, 0 log 0 := 0.
// Maximal at b ln 2 for uniform occupancy.
double bin_entropy(const BinHistogram& h);

struct Phase2Config {
  double lambda_e = 5e-2;  // bin regularizer weight
  std::size_t epochs = 30;
  // Bins need at least this many members before their variance is penalized.
  // 3 reads "more than two elements" literally; 2 is the alternative reading.
  int min_var_count = 3;
  bool normalize = true;  // weight normalization ahead of the quantizers
};

// Distillation loss: -(1/N) sum_i sum_c softmax(teacher)_ic log softmax(student)_ic.
// The teacher side is a constant; labels play no part.
Var kd_loss(Tape& t, const Array& teacher_logits, Var student_logits);

// Bin regularizer for one tensor: per occupied bin, (mean - level)^2, plus
// the bin's variance when it holds at least min_var_count members. Bin
// membership is fixed for the step; gradients flow to the member weights.
Var ebr_term(Tape& t, Var w, const BinHistogram& h, int min_var_count);

// Sum of ebr_term over every layer that entered a quantizer this forward.
Var ebr_loss(Tape& t, const Model& m, const ForwardResult& res, const MpqStrategy& strategy,
             int min_var_count);

// Diagnostic scalar behind the centralization claim: total per-bin variance
// across quantized layers, bins with >= 2 members, computed on the tensors
// the quantizers would see.
double bin_variance_sum(const Model& m, const MpqStrategy& strategy, bool normalize);

// Test-set (or train-set) accuracy at a fixed strategy; a null strategy
// means full precision.
double evaluate(const Model& m, const Dataset& data, const MpqStrategy* strategy,
                bool normalize);

struct Phase2StepRecord {
  double kd = 0.0;
  double ebr = 0.0;
  double total = 0.0;
  std::size_t correct = 0;
};

struct Phase2State {
  ParamGroup opt;
  Rng rng;
  Phase2State(OptimSpec spec, std::uint64_t seed) : opt(spec), rng(seed) {}
};

// One distillation step at the fixed strategy; stochastic quantization is
// never used here. Labels feed the accuracy metric only, never the loss.
Phase2StepRecord phase2_step(Model& student, const Model& teacher,
                             const MpqStrategy& strategy, const Phase2Config& cfg,
                             Phase2State& st, const Array& x,
                             const std::vector<int>& labels, double lr);

struct Phase2EpochRecord {
  std::size_t epoch = 0;
  double kd = 0.0;
  double ebr = 0.0;
  double total = 0.0;
  double accuracy = 0.0;      // train-batch argmax agreement with labels
  double bin_var_sum = 0.0;   // end-of-epoch centralization diagnostic
};

struct Phase2Options {
  OptimSpec opt;
  LrSchedule schedule;
  std::size_t batch_size = 32;
  std::uint64_t seed = 7;

  Phase2Options() {
    opt.kind = OptimSpec::Kind::kAdam;
    opt.lr = 0.005;
  }
};

struct Phase2Result {
  std::vector<Phase2EpochRecord> epochs;
};

Phase2Result run_phase2(Model& student, const Model& teacher, const Dataset& train,
                        const MpqStrategy& strategy, const Phase2Config& cfg,
                        const Phase2Options& opt);

// Plain full-precision supervised training; used for the teacher and the
// accuracy baseline.
struct FpEpochRecord {
  std::size_t epoch = 0;
  double loss = 0.0;
  double accuracy = 0.0;
};

std::vector<FpEpochRecord> train_full_precision(Model& m, const Dataset& train,
                                                std::size_t epochs, const OptimSpec& spec,
                                                const LrSchedule& schedule,
                                                std::size_t batch_size, std::uint64_t seed);

}  // namespace sdq
