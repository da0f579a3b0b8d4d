#include "sdq/phase1.hpp"

#include <algorithm>
#include <cmath>
#include <map>

#include "sdq/losses.hpp"
#include "sdq/quantizers.hpp"

namespace sdq {

Granularity parse_granularity(const std::string& name) {
  if (name == "net") return Granularity::kNet;
  if (name == "block") return Granularity::kBlock;
  if (name == "layer") return Granularity::kLayer;
  if (name == "kernel") return Granularity::kKernel;
  throw ContractError("unknown granularity '" + name + "' (want net|block|layer|kernel)");
}

std::string granularity_name(Granularity g) {
  switch (g) {
    case Granularity::kNet: return "net";
    case Granularity::kBlock: return "block";
    case Granularity::kLayer: return "layer";
    case Granularity::kKernel: return "kernel";
  }
  throw ContractError("unreachable granularity");
}

std::vector<DbpGroup> make_groups(const Model& m, Granularity g) {
  const auto free = m.free_ids();
  check_contract(!free.empty(), "make_groups: model has no searchable layers");
  std::vector<DbpGroup> groups;
  switch (g) {
    case Granularity::kNet: {
      DbpGroup net;
      net.name = "net";
      for (std::size_t id : free) {
        net.layers.push_back(id);
        net.masks.emplace_back();
        net.params += m.layers[id].param_count();
      }
      groups.push_back(std::move(net));
      break;
    }
    case Granularity::kBlock: {
      std::map<std::size_t, DbpGroup> by_block;
      for (std::size_t id : free) {
        DbpGroup& grp = by_block[m.layers[id].block];
        grp.name = "block" + std::to_string(m.layers[id].block);
        grp.layers.push_back(id);
        grp.masks.emplace_back();
        grp.params += m.layers[id].param_count();
      }
      for (auto& [block, grp] : by_block) groups.push_back(std::move(grp));
      break;
    }
    case Granularity::kLayer: {
      for (std::size_t id : free) {
        DbpGroup grp;
        grp.name = m.layers[id].name;
        grp.layers.push_back(id);
        grp.masks.emplace_back();
        grp.params = m.layers[id].param_count();
        groups.push_back(std::move(grp));
      }
      break;
    }
    case Granularity::kKernel: {
      for (std::size_t id : free) {
        const QuantLayer& layer = m.layers[id];
        if (layer.kind != LayerKind::kConv) {
          // A dense layer has no filter axis; it stays one group.
          DbpGroup grp;
          grp.name = layer.name;
          grp.layers.push_back(id);
          grp.masks.emplace_back();
          grp.params = layer.param_count();
          groups.push_back(std::move(grp));
          continue;
        }
        const std::size_t per_filter = layer.in_ch * layer.ksize * layer.ksize;
        for (std::size_t o = 0; o < layer.out_ch; ++o) {
          DbpGroup grp;
          grp.name = layer.name + ".k" + std::to_string(o);
          grp.layers.push_back(id);
          Array mask = Array::zeros_like(layer.weight);
          for (std::size_t j = 0; j < per_filter; ++j) mask[o * per_filter + j] = 1.0;
          grp.masks.push_back(std::move(mask));
          grp.params = per_filter;
          groups.push_back(std::move(grp));
        }
      }
      break;
    }
  }
  return groups;
}

namespace {

double masked_error_sq(const Array& pre, const Array& quant, const Array& mask) {
  double acc = 0.0;
  for (std::size_t i = 0; i < pre.size(); ++i) {
    if (mask.size() > 0 && mask[i] == 0.0) continue;
    const double d = quant[i] - pre[i];
    acc += d * d;
  }
  return acc;
}

// Unscaled regularizer value for one group, as a plain number. The error is
// taken in the quantizer's own domain — rounded grid value against the
// remapped real weight — so it shrinks as ~(2^b-1)^-2 and the lambda_b
// coefficients put every width on an equal footing.
double qer_group_coeff(const Model& m, const DbpGroup& grp, int bits,
                       const std::vector<Array>& pre_quant) {
  const double lambda_b = unit_levels(bits) * unit_levels(bits);
  double err = 0.0;
  for (std::size_t k = 0; k < grp.layers.size(); ++k) {
    const std::size_t id = grp.layers[k];
    const Array& pre =
        pre_quant[id].size() > 0 ? pre_quant[id] : m.layers[id].weight;
    const Array quant = quantize_weight_values(pre, bits);
    const Array real = weight_remap_values(pre);
    err += masked_error_sq(real, quant, grp.masks[k]);
  }
  return lambda_b * err;
}

}  // namespace

Var qer_loss(Tape& t, const Model& m, const std::vector<DbpGroup>& groups, const DbpTable& dbp,
             const std::vector<Var>& beta_leaf, const std::vector<Array>& pre_quant) {
  check_contract(groups.size() == dbp.rows(), "qer_loss: group/table row mismatch");
  check_contract(beta_leaf.size() == groups.size(), "qer_loss: missing beta leaves");
  Var total = t.scalar(0.0);
  for (std::size_t g = 0; g < groups.size(); ++g) {
    const double coeff = qer_group_coeff(m, groups[g], dbp.bits_at(g), pre_quant);
    total = t.add(total, t.scale(beta_leaf[g], coeff));
  }
  return total;
}

namespace {

std::string largest_activation_layer(const Model& m, const std::vector<double>& act_max) {
  std::size_t best = 0;
  for (std::size_t i = 1; i < act_max.size(); ++i) {
    if (act_max[i] > act_max[best]) best = i;
  }
  return m.layers.empty() ? std::string("<none>") : m.layers[best].name;
}

}  // namespace

StepRecord phase1_step(Model& m, Phase1State& st, const Phase1Config& cfg, const Array& x,
                       const std::vector<int>& labels, double lr, double dbp_lr) {
  check_contract(!cfg.per_sample_choice || cfg.granularity == Granularity::kLayer,
                 "per-sample choice draws require layer granularity");
  const std::size_t rows = st.groups.size();
  Tape t;

  std::vector<Var> beta_leaf(rows);
  std::vector<SoftChoice> choices(rows);
  for (std::size_t g = 0; g < rows; ++g) {
    beta_leaf[g] = t.leaf(Array::scalar(st.dbp.active_beta(g)));
    if (st.dbp.active_index[g] >= 1 && !cfg.per_sample_choice)
      choices[g] = soft_choice(t, beta_leaf[g], cfg.gumbel, st.rng);
  }

  std::vector<std::vector<StochPiece>> pieces(m.layers.size());
  for (std::size_t g = 0; g < rows; ++g) {
    const DbpGroup& grp = st.groups[g];
    for (std::size_t k = 0; k < grp.layers.size(); ++k) {
      StochPiece piece;
      piece.beta = beta_leaf[g];
      piece.bits_hi = st.dbp.bits_at(g);
      if (st.dbp.active_index[g] >= 1) {
        piece.stochastic = true;
        piece.bits_lo = st.dbp.bits_below(g);
        piece.choice = cfg.per_sample_choice ? nullptr : &choices[g];
      } else {
        piece.stochastic = false;  // floor candidate: deterministic
      }
      piece.mask = grp.masks[k].size() > 0 ? &grp.masks[k] : nullptr;
      pieces[grp.layers[k]].push_back(piece);
    }
  }

  const std::vector<int> layer_bits(m.layers.size(), cfg.pinned_bits);
  ForwardOptions opts;
  opts.mode = WeightMode::kStochastic;
  opts.activation_bits = cfg.activation_bits;
  opts.layer_bits = &layer_bits;
  opts.normalize = cfg.normalize;
  opts.stoch = &pieces;
  opts.rng = &st.rng;
  opts.gumbel = cfg.gumbel;

  StepRecord rec;
  Var task;
  std::vector<ForwardResult> results;
  std::vector<double> act_max(m.layers.size(), 0.0);
  if (cfg.per_sample_choice) {
    // Fresh branch draw per sample: run single-row forwards and average.
    const std::size_t n = x.shape[0];
    Var acc;
    for (std::size_t i = 0; i < n; ++i) {
      Array row({std::size_t{1}, x.shape[1]});
      for (std::size_t j = 0; j < x.shape[1]; ++j) row[j] = x[i * x.shape[1] + j];
      ForwardResult res = forward(t, m, row, opts);
      rec.correct += accuracy(res.logits.value(), {labels[i]}) > 0.5 ? 1 : 0;
      Var ce = cross_entropy(t, res.logits, {labels[i]});
      acc = acc.valid() ? t.add(acc, ce) : ce;
      for (std::size_t l = 0; l < m.layers.size(); ++l)
        act_max[l] = std::max(act_max[l], res.act_max[l]);
      results.push_back(std::move(res));
    }
    task = t.scale(acc, 1.0 / static_cast<double>(n));
  } else {
    ForwardResult res = forward(t, m, x, opts);
    task = cross_entropy(t, res.logits, labels);
    rec.correct = static_cast<std::size_t>(
        std::lround(accuracy(res.logits.value(), labels) * static_cast<double>(labels.size())));
    act_max = res.act_max;
    results.push_back(std::move(res));
  }

  // The regularizer reads the tensors the quantizers saw (empty = raw weight).
  std::vector<Array> pre_quant(m.layers.size());
  for (std::size_t l = 0; l < m.layers.size(); ++l) {
    if (results.front().w_pre_quant[l].valid())
      pre_quant[l] = results.front().w_pre_quant[l].value();
  }
  rec.qer = 0.0;
  for (std::size_t g = 0; g < rows; ++g)
    rec.qer += st.dbp.active_beta(g) * qer_group_coeff(m, st.groups[g], st.dbp.bits_at(g),
                                                       pre_quant);

  Var total = task;
  if (cfg.lambda_q > 0.0) {
    Var qer = qer_loss(t, m, st.groups, st.dbp, beta_leaf, pre_quant);
    total = t.add(task, t.scale(qer, cfg.lambda_q));
  }
  rec.task_loss = task.item();
  rec.total = total.item();
  if (!std::isfinite(rec.total)) {
    throw NumericError("phase1_step: non-finite loss; largest activation at layer '" +
                       largest_activation_layer(m, act_max) + "'");
  }

  t.backward(total);

  // Weights and biases take task gradients only (the regularizer holds none).
  double wnorm_sq = 0.0;
  for (std::size_t l = 0; l < m.layers.size(); ++l) {
    Array wgrad = Array::zeros_like(m.layers[l].weight);
    Array bgrad = Array::zeros_like(m.layers[l].bias);
    bool touched = false;
    for (const ForwardResult& res : results) {
      if (res.w_leaf[l].valid()) {
        const Array& g = t.grad(res.w_leaf[l]);
        for (std::size_t i = 0; i < wgrad.size(); ++i) wgrad[i] += g[i];
        touched = true;
      }
      if (res.b_leaf[l].valid()) {
        const Array& g = t.grad(res.b_leaf[l]);
        for (std::size_t i = 0; i < bgrad.size(); ++i) bgrad[i] += g[i];
      }
    }
    if (!touched) continue;
    for (double v : wgrad.data) wnorm_sq += v * v;
    for (double v : bgrad.data) wnorm_sq += v * v;
    st.weight_opt.step("w:" + m.layers[l].name, m.layers[l].weight, wgrad, lr);
    if (m.layers[l].bias.size() > 0)
      st.weight_opt.step("b:" + m.layers[l].name, m.layers[l].bias, bgrad, lr);
  }
  rec.weight_grad_norm = std::sqrt(wnorm_sq);

  double bnorm_sq = 0.0;
  for (std::size_t g = 0; g < rows; ++g) {
    const double grad = t.grad(beta_leaf[g]).item();
    bnorm_sq += grad * grad;
    Array value = Array::scalar(st.dbp.active_beta(g));
    st.dbp_opt.step("beta:" + st.groups[g].name, value, Array::scalar(grad), dbp_lr);
    double v = value.item();
    if (v < 1e-6) {
      v = 1e-6;
      ++rec.clamped;
    } else if (v > 1.0) {
      v = 1.0;
      ++rec.clamped;
    }
    st.dbp.set_active_beta(g, v);
  }
  rec.beta_grad_norm = std::sqrt(bnorm_sq);
  return rec;
}

std::vector<DecayEvent> decay_bitwidths(DbpTable& dbp, const std::vector<DbpGroup>& groups,
                                        double beta_threshold, ParamGroup* dbp_opt) {
  check_contract(beta_threshold > 0.0 && beta_threshold < 1.0,
                 "decay threshold must lie in (0,1)");
  check_contract(groups.size() == dbp.rows(), "decay_bitwidths: group/table row mismatch");
  std::vector<DecayEvent> log;
  for (std::size_t g = 0; g < dbp.rows(); ++g) {
    const std::size_t i = dbp.active_index[g];
    if (i == 0) continue;  // candidate-set floor
    if (!(dbp.active_beta(g) < beta_threshold)) continue;  // strict inequality
    DecayEvent ev{groups[g].name, dbp.bits_at(g), dbp.bits_below(g)};
    dbp.active_index[g] = i - 1;
    if (dbp_opt) dbp_opt->reset("beta:" + groups[g].name);
    log.push_back(std::move(ev));
  }
  return log;
}

MpqStrategy extract_strategy(const Model& m, const DbpTable& dbp,
                             const std::vector<DbpGroup>& groups, const Phase1Config& cfg) {
  MpqStrategy s;
  s.model_id = m.id;
  s.activation_bits = cfg.activation_bits;
  s.candidates = cfg.candidates;
  std::sort(s.candidates.begin(), s.candidates.end(), std::greater<int>());
  for (std::size_t l = 0; l < m.layers.size(); ++l) {
    LayerChoice choice;
    choice.name = m.layers[l].name;
    choice.params = m.layers[l].param_count();
    if (m.layers[l].pinned) {
      choice.bits = cfg.pinned_bits;
      choice.pinned = true;
    } else {
      int bits = 0;
      for (std::size_t g = 0; g < groups.size(); ++g) {
        for (std::size_t id : groups[g].layers) {
          if (id == l) bits = std::max(bits, dbp.bits_at(g));
        }
      }
      check_contract(bits > 0, "extract_strategy: layer '" + choice.name + "' uncovered");
      choice.bits = bits;
    }
    s.layers.push_back(std::move(choice));
  }
  return s;
}

Phase1Result run_phase1(Model& m, const Dataset& train, const Phase1Config& cfg,
                        const Phase1Options& opt) {
  check_contract(cfg.epochs >= 1, "phase 1 needs at least one epoch");
  check_contract(cfg.beta_threshold > 0.0 && cfg.beta_threshold < 1.0,
                 "beta threshold must lie in (0,1)");
  check_contract(!cfg.candidates.empty(), "phase 1 needs candidate bitwidths");
  check_contract(opt.batch_size >= 1, "batch size must be positive");
  check_contract(train.size() > 0, "phase 1 needs training data");

  auto groups = make_groups(m, cfg.granularity);
  DbpTable dbp = DbpTable::init(groups.size(), cfg.candidates);
  Phase1State st(std::move(dbp), std::move(groups), opt.weight_opt, opt.dbp_opt,
                 Rng::splitmix64(opt.seed ^ 0x9e3779b97f4a7c15ull));

  Phase1Result out;
  const std::size_t n = train.size();
  std::vector<std::size_t> order(n);
  for (std::size_t i = 0; i < n; ++i) order[i] = i;

  for (std::size_t epoch = 0; epoch < cfg.epochs; ++epoch) {
    const double lr = opt.schedule.lr_at(opt.weight_opt.lr, epoch, cfg.epochs);
    st.rng.shuffle(order);

    Phase1EpochRecord rec;
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
      StepRecord sr = phase1_step(m, st, cfg, x, labels, lr, opt.dbp_opt.lr);
      rec.task_loss += sr.task_loss;
      rec.qer += sr.qer;
      rec.total += sr.total;
      rec.weight_grad_norm += sr.weight_grad_norm;
      rec.beta_grad_norm += sr.beta_grad_norm;
      rec.clamped += sr.clamped;
      correct += sr.correct;
      ++steps;
      if (cfg.decay_per_step) {
        auto events = decay_bitwidths(st.dbp, st.groups, cfg.beta_threshold, &st.dbp_opt);
        rec.decays.insert(rec.decays.end(), events.begin(), events.end());
      }
    }
    rec.task_loss /= static_cast<double>(steps);
    rec.qer /= static_cast<double>(steps);
    rec.total /= static_cast<double>(steps);
    rec.weight_grad_norm /= static_cast<double>(steps);
    rec.beta_grad_norm /= static_cast<double>(steps);
    rec.accuracy = static_cast<double>(correct) / static_cast<double>(n);
    if (!cfg.decay_per_step) {
      auto events = decay_bitwidths(st.dbp, st.groups, cfg.beta_threshold, &st.dbp_opt);
      rec.decays = std::move(events);
    }
    for (std::size_t g = 0; g < st.groups.size(); ++g)
      rec.groups.push_back({st.groups[g].name, st.dbp.bits_at(g), st.dbp.active_beta(g)});
    out.epochs.push_back(std::move(rec));
  }

  out.strategy = extract_strategy(m, st.dbp, st.groups, cfg);
  return out;
}

}  // namespace sdq
