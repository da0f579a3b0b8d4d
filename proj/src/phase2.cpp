#include "sdq/phase2.hpp"

#include <algorithm>
#include <cmath>

#include "sdq/losses.hpp"
#include "sdq/quantizers.hpp"

namespace sdq {

std::vector<double> BinHistogram::proportions() const {
  check_contract(total > 0, "proportions of an empty histogram");
  std::vector<double> p(members.size());
  for (std::size_t i = 0; i < members.size(); ++i)
    p[i] = static_cast<double>(members[i].size()) / static_cast<double>(total);
  return p;
}

BinHistogram bin_assign(const Array& w, int bits) {
  check_contract(bits >= 1 && bits < kFullPrecisionBits,
                 "bin_assign: need a finite quantization grid");
  check_contract(w.size() > 0, "bin_assign on empty tensor");
  BinHistogram h;
  h.bits = bits;
  h.levels = weight_levels(bits);
  const std::size_t bins = h.levels.size();
  h.members.resize(bins);
  h.total = w.size();
  const double half_levels = std::ldexp(1.0, bits - 1);  // 2^(b-1) cells per unit
  for (std::size_t i = 0; i < w.size(); ++i) {
    double k = std::floor((w[i] + 1.0) * half_levels);
    if (k < 0.0) k = 0.0;
    const std::size_t bin = std::min(static_cast<std::size_t>(k), bins - 1);
    h.members[bin].push_back(i);
  }
  return h;
}

double bin_entropy(const BinHistogram& h) {
  // Accumulate in base 2 and convert once: log2 of the power-of-two
  // proportions produced by uniform occupancy is an exact integer, so the
  // uniform case lands on bits * ln 2 with no rounding drift.
  double e2 = 0.0;
  for (double p : h.proportions()) {
    if (p > 0.0) e2 -= p * std::log2(p);
  }
  return e2 * std::log(2.0);
}

Var kd_loss(Tape& t, const Array& teacher_logits, Var student_logits) {
  check_contract(teacher_logits.shape == student_logits.shape(),
                 "kd_loss: teacher/student logit shapes differ: " +
                     shape_str(teacher_logits.shape) + " vs " +
                     shape_str(student_logits.shape()));
  check_contract(teacher_logits.shape.size() == 2, "kd_loss: logits must be [batch, classes]");
  for (double v : teacher_logits.data) {
    if (!std::isfinite(v)) throw NumericError("kd_loss: non-finite teacher logits");
  }
  for (double v : student_logits.value().data) {
    if (!std::isfinite(v)) throw NumericError("kd_loss: non-finite student logits");
  }
  const std::size_t n = teacher_logits.shape[0];
  const std::size_t c = teacher_logits.shape[1];

  // Teacher distribution, computed as constants.
  Array p(teacher_logits.shape);
  for (std::size_t i = 0; i < n; ++i) {
    double mx = teacher_logits[i * c];
    for (std::size_t j = 1; j < c; ++j) mx = std::max(mx, teacher_logits[i * c + j]);
    double z = 0.0;
    for (std::size_t j = 0; j < c; ++j) {
      p[i * c + j] = std::exp(teacher_logits[i * c + j] - mx);
      z += p[i * c + j];
    }
    for (std::size_t j = 0; j < c; ++j) p[i * c + j] /= z;
  }

  Var ls = t.log_softmax_rows(student_logits);
  Var weighted = t.mul(ls, t.constant(p));
  return t.scale(t.sum(weighted), -1.0 / static_cast<double>(n));
}

Var ebr_term(Tape& t, Var w, const BinHistogram& h, int min_var_count) {
  check_contract(min_var_count >= 2, "ebr_term: variance needs at least two members");
  Var total;
  for (std::size_t bin = 0; bin < h.members.size(); ++bin) {
    const auto& idx = h.members[bin];
    if (idx.empty()) continue;
    Var members = t.gather(w, idx);
    Var diff = t.add_const(t.mean(members), -h.levels[bin]);
    Var term = t.mul(diff, diff);
    if (idx.size() >= static_cast<std::size_t>(min_var_count))
      term = t.add(term, t.variance(members));
    total = total.valid() ? t.add(total, term) : term;
  }
  return total.valid() ? total : t.scalar(0.0);
}

Var ebr_loss(Tape& t, const Model& m, const ForwardResult& res, const MpqStrategy& strategy,
             int min_var_count) {
  Var total;
  for (std::size_t l = 0; l < m.layers.size(); ++l) {
    if (!res.w_pre_quant[l].valid()) continue;
    const int bits = strategy.layer(m.layers[l].name).bits;
    if (bits >= kFullPrecisionBits) continue;
    BinHistogram h = bin_assign(res.w_pre_quant[l].value(), bits);
    Var term = ebr_term(t, res.w_pre_quant[l], h, min_var_count);
    total = total.valid() ? t.add(total, term) : term;
  }
  return total.valid() ? total : t.scalar(0.0);
}

double bin_variance_sum(const Model& m, const MpqStrategy& strategy, bool normalize) {
  double total = 0.0;
  for (const QuantLayer& layer : m.layers) {
    const int bits = strategy.layer(layer.name).bits;
    if (bits >= kFullPrecisionBits) continue;
    const Array w = normalize ? normalize_weights_values(layer.weight, bits) : layer.weight;
    BinHistogram h = bin_assign(w, bits);
    for (const auto& idx : h.members) {
      if (idx.size() < 2) continue;
      double mean = 0.0;
      for (std::size_t i : idx) mean += w[i];
      mean /= static_cast<double>(idx.size());
      double var = 0.0;
      for (std::size_t i : idx) {
        const double d = w[i] - mean;
        var += d * d;
      }
      total += var / static_cast<double>(idx.size());
    }
  }
  return total;
}

namespace {

std::vector<int> strategy_bits(const Model& m, const MpqStrategy& strategy) {
  std::vector<int> bits(m.layers.size());
  for (std::size_t l = 0; l < m.layers.size(); ++l)
    bits[l] = strategy.layer(m.layers[l].name).bits;
  return bits;
}

Array fp_logits(const Model& m, const Array& x) {
  Tape t;
  ForwardOptions opts;  // full precision throughout
  return forward(t, m, x, opts).logits.value();
}

}  // namespace

double evaluate(const Model& m, const Dataset& data, const MpqStrategy* strategy,
                bool normalize) {
  check_contract(data.size() > 0, "evaluate on empty dataset");
  Tape t;
  ForwardOptions opts;
  std::vector<int> bits;
  if (strategy) {
    bits = strategy_bits(m, *strategy);
    opts.mode = WeightMode::kDeterministic;
    opts.activation_bits = strategy->activation_bits;
    opts.layer_bits = &bits;
    opts.normalize = normalize;
  }
  ForwardResult res = forward(t, m, data.x, opts);
  return accuracy(res.logits.value(), data.y);
}

Phase2StepRecord phase2_step(Model& student, const Model& teacher,
                             const MpqStrategy& strategy, const Phase2Config& cfg,
                             Phase2State& st, const Array& x,
                             const std::vector<int>& labels, double lr) {
  const Array teacher_logits = fp_logits(teacher, x);

  Tape t;
  const std::vector<int> bits = strategy_bits(student, strategy);
  ForwardOptions opts;
  opts.mode = WeightMode::kDeterministic;
  opts.activation_bits = strategy.activation_bits;
  opts.layer_bits = &bits;
  opts.normalize = cfg.normalize;
  ForwardResult res = forward(t, student, x, opts);

  Var kd = kd_loss(t, teacher_logits, res.logits);
  Phase2StepRecord rec;
  rec.correct = static_cast<std::size_t>(std::lround(
      accuracy(res.logits.value(), labels) * static_cast<double>(labels.size())));
  rec.kd = kd.item();
  Var total = kd;
  if (cfg.lambda_e > 0.0) {
    Var ebr = ebr_loss(t, student, res, strategy, cfg.min_var_count);
    rec.ebr = ebr.item();
    total = t.add(kd, t.scale(ebr, cfg.lambda_e));
  }
  rec.total = total.item();
  if (!std::isfinite(rec.total)) {
    std::size_t worst = 0;
    for (std::size_t i = 1; i < res.act_max.size(); ++i) {
      if (res.act_max[i] > res.act_max[worst]) worst = i;
    }
    throw NumericError("phase2_step: non-finite loss; largest activation at layer '" +
                       student.layers[worst].name + "'");
  }

  t.backward(total);
  for (std::size_t l = 0; l < student.layers.size(); ++l) {
    if (res.w_leaf[l].valid()) {
      st.opt.step("w:" + student.layers[l].name, student.layers[l].weight,
                  t.grad(res.w_leaf[l]), lr);
    }
    if (res.b_leaf[l].valid()) {
      st.opt.step("b:" + student.layers[l].name, student.layers[l].bias,
                  t.grad(res.b_leaf[l]), lr);
    }
  }
  return rec;
}

Phase2Result run_phase2(Model& student, const Model& teacher, const Dataset& train,
                        const MpqStrategy& strategy, const Phase2Config& cfg,
                        const Phase2Options& opt) {
  check_contract(cfg.epochs >= 1, "phase 2 needs at least one epoch");
  check_contract(cfg.lambda_e >= 0.0, "lambda_e must be non-negative");
  check_contract(train.size() > 0, "phase 2 needs training data");
  check_contract(student.layers.size() == teacher.layers.size(),
                 "phase 2 teacher must share the student architecture");

  Phase2State st(opt.opt, Rng::splitmix64(opt.seed ^ 0x6a09e667f3bcc908ull));
  Phase2Result out;
  const std::size_t n = train.size();
  std::vector<std::size_t> order(n);
  for (std::size_t i = 0; i < n; ++i) order[i] = i;

  for (std::size_t epoch = 0; epoch < cfg.epochs; ++epoch) {
    const double lr = opt.schedule.lr_at(opt.opt.lr, epoch, cfg.epochs);
    st.rng.shuffle(order);
    Phase2EpochRecord rec;
    rec.epoch = epoch;
    std::size_t steps = 0;
    std::size_t correct = 0;
    for (std::size_t start = 0; start < n; start += opt.batch_size) {
      const std::size_t count = std::min(opt.batch_size, n - start);
      Array x({count, train.x.shape[1]});
      std::vector<int> labels(count);
      for (std::size_t i = 0; i < count; ++i) {
        const std::size_t src = order[start + i];
        for (std::size_t j = 0; j < train.x.shape[1]; ++j)
          x[i * x.shape[1] + j] = train.x[src * x.shape[1] + j];
        labels[i] = train.y[src];
      }
      Phase2StepRecord sr = phase2_step(student, teacher, strategy, cfg, st, x, labels, lr);
      rec.kd += sr.kd;
      rec.ebr += sr.ebr;
      rec.total += sr.total;
      correct += sr.correct;
      ++steps;
    }
    rec.kd /= static_cast<double>(steps);
    rec.ebr /= static_cast<double>(steps);
    rec.total /= static_cast<double>(steps);
    rec.accuracy = static_cast<double>(correct) / static_cast<double>(n);
    rec.bin_var_sum = bin_variance_sum(student, strategy, cfg.normalize);
    out.epochs.push_back(rec);
  }
  return out;
}

std::vector<FpEpochRecord> train_full_precision(Model& m, const Dataset& train,
                                                std::size_t epochs, const OptimSpec& spec,
                                                const LrSchedule& schedule,
                                                std::size_t batch_size, std::uint64_t seed) {
  check_contract(epochs >= 1, "full-precision training needs at least one epoch");
  check_contract(train.size() > 0, "full-precision training needs data");
  ParamGroup opt(spec);
  Rng rng(Rng::splitmix64(seed ^ 0xbb67ae8584caa73bull));
  const std::size_t n = train.size();
  std::vector<std::size_t> order(n);
  for (std::size_t i = 0; i < n; ++i) order[i] = i;

  std::vector<FpEpochRecord> records;
  for (std::size_t epoch = 0; epoch < epochs; ++epoch) {
    const double lr = schedule.lr_at(spec.lr, epoch, epochs);
    rng.shuffle(order);
    FpEpochRecord rec;
    rec.epoch = epoch;
    std::size_t steps = 0;
    std::size_t correct = 0;
    for (std::size_t start = 0; start < n; start += batch_size) {
      const std::size_t count = std::min(batch_size, n - start);
      Array x({count, train.x.shape[1]});
      std::vector<int> labels(count);
      for (std::size_t i = 0; i < count; ++i) {
        const std::size_t src = order[start + i];
        for (std::size_t j = 0; j < train.x.shape[1]; ++j)
          x[i * x.shape[1] + j] = train.x[src * x.shape[1] + j];
        labels[i] = train.y[src];
      }
      Tape t;
      ForwardOptions opts;  // full precision
      ForwardResult res = forward(t, m, x, opts);
      Var loss = cross_entropy(t, res.logits, labels);
      rec.loss += loss.item();
      if (!std::isfinite(rec.loss)) throw NumericError("full-precision training diverged");
      correct += static_cast<std::size_t>(std::lround(
          accuracy(res.logits.value(), labels) * static_cast<double>(labels.size())));
      t.backward(loss);
      for (std::size_t l = 0; l < m.layers.size(); ++l) {
        if (res.w_leaf[l].valid())
          opt.step("w:" + m.layers[l].name, m.layers[l].weight, t.grad(res.w_leaf[l]), lr);
        if (res.b_leaf[l].valid())
          opt.step("b:" + m.layers[l].name, m.layers[l].bias, t.grad(res.b_leaf[l]), lr);
      }
      ++steps;
    }
    rec.loss /= static_cast<double>(steps);
    rec.accuracy = static_cast<double>(correct) / static_cast<double>(n);
    records.push_back(rec);
  }
  return records;
}

}  // namespace sdq
