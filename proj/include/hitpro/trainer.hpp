#pragma once

#include <cmath>
#include <functional>
#include <optional>
#include <string>
#include <vector>

#include "hitpro/config.hpp"
#include "hitpro/datamodel.hpp"
#include "hitpro/encoder.hpp"
#include "hitpro/evaluator.hpp"
#include "hitpro/mining.hpp"
#include "hitpro/objective.hpp"
#include "hitpro/prototyping.hpp"
#include "hitpro/sampler.hpp"

namespace hitpro {

struct OptState {
  EncoderParams velocity;
  double lr = 0.0;
  long step = 0;
  bool round_to_f32 = true;  // keep parameters float32-representable

  static OptState for_params(const EncoderParams& p, double lr) { return {p.zeros_like(), lr, 0, true}; }
};

// Momentum SGD: v <- mu v + g; theta <- theta - lr v.
inline void sgd_step(EncoderParams& params, const EncoderParams& grads, OptState& opt, double momentum) {
  if (!params.same_shapes(grads) || !params.same_shapes(opt.velocity))
    throw ConfigError("sgd_step: parameter, gradient and momentum shapes differ");
  std::vector<const Mat*> g;
  grads.for_each([&](const std::string&, const Mat& m) { g.push_back(&m); });
  std::vector<Mat*> v;
  opt.velocity.for_each([&](const std::string&, Mat& m) { v.push_back(&m); });
  std::size_t i = 0;
  params.for_each([&](const std::string&, Mat& theta) {
    *v[i] = momentum * *v[i] + *g[i];
    theta -= opt.lr * *v[i];
    if (opt.round_to_f32) round_to_float(theta);
    ++i;
  });
  ++opt.step;
}

// Step decay: lr * factor^(floor(e / every)).
inline double learning_rate(int e, const TrainConfig& cfg) {
  if (cfg.lr_decay_every <= 0) return cfg.lr;
  return cfg.lr * std::pow(cfg.lr_decay_factor, e / cfg.lr_decay_every);
}

struct IterationLog {
  double l_ic = 0.0, l_imcc = 0.0, l_cm = 0.0, l_total = 0.0;
};

struct EpochMetrics {
  int epoch = 0;
  double rho = 0.0;
  double lr = 0.0;
  bool imcc_active = false;
  bool cm_active = false;
  std::vector<IterationLog> iterations;
  std::array<double, 2> intra_set_size{0, 0};  // mean positives per source, by source modality
  std::array<double, 2> cross_set_size{0, 0};
  std::array<std::optional<MiningQuality>, 2> intra_quality;
  std::array<std::optional<MiningQuality>, 2> cross_quality;

  IterationLog mean() const {
    IterationLog m;
    if (iterations.empty()) return m;
    for (const auto& it : iterations) {
      m.l_ic += it.l_ic;
      m.l_imcc += it.l_imcc;
      m.l_cm += it.l_cm;
      m.l_total += it.l_total;
    }
    const double n = static_cast<double>(iterations.size());
    return {m.l_ic / n, m.l_imcc / n, m.l_cm / n, m.l_total / n};
  }
};

struct MetricsReport {
  std::vector<EpochMetrics> epochs;
};

inline Json to_json(const EpochMetrics& m) {
  const auto mean = m.mean();
  Json j{{"epoch", m.epoch},
         {"rho", m.rho},
         {"lr", m.lr},
         {"imcc_active", m.imcc_active},
         {"cm_active", m.cm_active},
         {"mean_loss", {{"l_ic", mean.l_ic}, {"l_imcc", mean.l_imcc}, {"l_cm", mean.l_cm}, {"l_total", mean.l_total}}}};
  Json iters = Json::array();
  for (const auto& it : m.iterations) iters.push_back({it.l_ic, it.l_imcc, it.l_cm, it.l_total});
  j["iterations"] = {{"columns", {"l_ic", "l_imcc", "l_cm", "l_total"}}, {"values", iters}};
  for (Modality mod : kModalities) {
    const int k = index_of(mod);
    const std::string name = to_string(mod);
    j["positive_set_size"]["intra_" + name] = m.intra_set_size[k];
    j["positive_set_size"]["cross_" + name + "->" + to_string(other(mod))] = m.cross_set_size[k];
    if (m.intra_quality[k]) j["mining_quality"]["intra_" + name] = to_json(*m.intra_quality[k]);
    if (m.cross_quality[k]) j["mining_quality"]["cross_" + name + "->" + to_string(other(mod))] = to_json(*m.cross_quality[k]);
  }
  return j;
}

inline Json to_json(const MetricsReport& r) {
  Json epochs = Json::array();
  for (const auto& e : r.epochs) epochs.push_back(to_json(e));
  return Json{{"epochs", epochs}};
}

struct TrainResult {
  EncoderParams params;
  PrototypeStore store;
  int epochs_completed = 0;
  MetricsReport metrics;
};

struct TrainHooks {
  // Called after each epoch with the current encoder.
  std::function<void(int epoch, const EncoderParams&, const EpochMetrics&)> on_epoch_end;
};

inline EncoderParams initial_params(const Dataset& ds, const TrainConfig& cfg) {
  return encoder_init(EncoderShape::from(cfg, ds.d_in), mix_seed(cfg.seed, 0x1417));
}

// Runs the full epoch loop: rebuild prototypes with a frozen encoder, mine the
// four positive-set families, then iterate SGD steps with EMA prototype updates.
inline TrainResult train(const Dataset& ds, const TrainConfig& cfg, const TrainHooks& hooks = {}) {
  cfg.validate();
  if (ds.count(Modality::VIS) == 0 || ds.count(Modality::IR) == 0)
    throw ConfigError("train: dataset needs tracklets in both modalities");

  TrainResult result;
  result.params = initial_params(ds, cfg);
  const PartitionTable partitions = partition_dataset(ds, cfg.K);
  const bool gt = has_labels(ds);
  OptState opt = OptState::for_params(result.params, cfg.lr);

  if (cfg.e_total == 0) result.store = build_prototypes(result.params, ds, cfg, partitions);

  for (int e = 0; e < cfg.e_total; ++e) {
    EpochMetrics em;
    em.epoch = e;
    em.rho = rho_schedule(e, cfg);
    opt.lr = learning_rate(e, cfg);
    em.lr = opt.lr;
    const LossSchedule sched = loss_schedule(e, cfg);
    em.imcc_active = sched.imcc;
    em.cm_active = sched.cm;

    PrototypeStore store = build_prototypes(result.params, ds, cfg, partitions);
    const PositiveSets positives = mine_all(store, e, cfg);
    for (Modality m : kModalities) {
      const int k = index_of(m);
      em.intra_set_size[k] = positives.intra[k].mean_size();
      em.cross_set_size[k] = positives.cross[k].mean_size();
      if (gt) {
        em.intra_quality[k] = mining_quality(positives.intra[k], store, ds);
        em.cross_quality[k] = mining_quality(positives.cross[k], store, ds);
      }
    }

    Rng rng(mix_seed(cfg.seed, static_cast<std::uint64_t>(e)));
    for (int it = 0; it < cfg.iters_per_epoch; ++it) {
      std::array<BatchSpec, 2> batches;
      for (Modality m : kModalities) batches[index_of(m)] = sample_batch(ds, partitions, m, cfg, rng);

      struct Slot {
        int batch;
        std::size_t item;
      };
      std::vector<Slot> slots;
      for (int b = 0; b < 2; ++b)
        for (std::size_t i = 0; i < batches[b].items.size(); ++i) slots.push_back({b, i});

      std::vector<Encoding> encodings(slots.size());
      parallel_for(slots.size(), [&](std::size_t s) {
        const auto& item = batches[slots[s].batch].items[slots[s].item];
        encodings[s] = encode(result.params, gather_frames(ds.tracklets[item.tracklet], item.sub, cfg.seq_len));
      });

      std::array<std::vector<Vec>, 2> q;
      std::array<std::vector<PrototypeRef>, 2> src;
      for (std::size_t s = 0; s < slots.size(); ++s) {
        q[slots[s].batch].push_back(encodings[s].embedding);
        src[slots[s].batch].push_back(batches[slots[s].batch].items[slots[s].item].source);
      }

      IterationLog log;
      std::vector<Vec> grad_q(slots.size());
      std::size_t offset = 0;
      for (Modality m : kModalities) {
        const int b = index_of(m);
        LossBreakdown lb = total_loss(e, q[b], src[b], store, positives, m, cfg);
        if (!std::isfinite(lb.l_total))
          throw NumericError("non-finite loss at epoch " + std::to_string(e) + ", iteration " + std::to_string(it));
        log.l_ic += lb.l_ic;
        log.l_imcc += lb.l_imcc;
        log.l_cm += lb.l_cm;
        log.l_total += lb.l_total;
        for (std::size_t i = 0; i < lb.grads.size(); ++i) grad_q[offset + i] = std::move(lb.grads[i]);
        offset += lb.grads.size();
      }
      em.iterations.push_back(log);

      std::vector<EncoderParams> grads(slots.size());
      parallel_for(slots.size(), [&](std::size_t s) {
        grads[s] = encode_backward(result.params, encodings[s].cache, grad_q[s]);
      });
      EncoderParams total = result.params.zeros_like();
      for (const auto& g : grads) total.add_scaled(g, 1.0);
      sgd_step(result.params, total, opt, cfg.sgd_momentum);
      if (!result.params.all_finite())
        throw NumericError("non-finite parameters at epoch " + std::to_string(e) + ", iteration " + std::to_string(it));

      for (Modality m : kModalities) {
        const int b = index_of(m);
        ema_update(store, q[b], src[b], positives.intra_of(m), positives.cross_of(m), cfg.alpha, cfg.ema_renormalize);
      }
    }

    result.store = std::move(store);
    result.epochs_completed = e + 1;
    if (hooks.on_epoch_end) hooks.on_epoch_end(e, result.params, em);
    result.metrics.epochs.push_back(std::move(em));
  }
  return result;
}

}  // namespace hitpro
