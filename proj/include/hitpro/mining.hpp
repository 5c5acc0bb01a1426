#pragma once

#include <cmath>
#include <optional>
#include <vector>

#include "hitpro/config.hpp"
#include "hitpro/datamodel.hpp"

namespace hitpro {

inline double cosine_sim(const Vec& a, const Vec& b) {
  if (a.size() != b.size()) throw ConfigError("cosine_sim: dimension mismatch");
  const double na = a.norm(), nb = b.norm();
  if (!(na > 0.0) || !(nb > 0.0)) throw NumericError("cosine_sim: zero-norm input");
  return a.dot(b) / (na * nb);
}

// Linearly decaying reliability factor, rho_init at e = 0 and rho_final at e = e_total.
inline double rho_schedule(int e, const TrainConfig& cfg) {
  if (e < 0 || e > cfg.e_total) throw ConfigError("rho_schedule: epoch out of range");
  if (cfg.e_total == 0) return cfg.rho_init;
  return cfg.rho_init + (cfg.rho_final - cfg.rho_init) * static_cast<double>(e) / static_cast<double>(cfg.e_total);
}

// Temperature softmax over similarities, max-subtracted.
inline std::vector<double> soft_weights(const std::vector<double>& sims, double tau_w) {
  if (sims.empty()) throw ConfigError("soft_weights: empty candidate list");
  if (!(tau_w > 0)) throw ConfigError("soft_weights: tau_w must be > 0");
  const double mx = *std::max_element(sims.begin(), sims.end());
  std::vector<double> w(sims.size());
  double sum = 0.0;
  for (std::size_t j = 0; j < sims.size(); ++j) {
    w[j] = std::exp((sims[j] - mx) / tau_w);
    sum += w[j];
  }
  for (double& x : w) x /= sum;
  return w;
}

struct CameraBest {
  int camera = 0;
  int index = 0;
  double sim = 0.0;
};

// Per-source mining diagnostics.
struct SourceMining {
  PrototypeRef source;
  std::vector<CameraBest> candidates;  // one per target camera with prototypes
  double s_max = 0.0;
  double threshold = 0.0;
};

struct MiningResult {
  PositiveFamily family;
  std::vector<SourceMining> diagnostics;  // camera-major source order
};

inline MiningResult mine_with_diagnostics(const PrototypeStore& store, Modality source, PositiveKind kind, int e,
                                          const TrainConfig& cfg) {
  const Modality target = kind == PositiveKind::INTRA_MODAL ? source : other(source);
  if (kind == PositiveKind::CROSS_MODAL && (store.size(source) == 0 || store.size(target) == 0))
    throw ConfigError("cross-modal mining needs prototypes in both modalities");
  const double rho = rho_schedule(e, cfg);

  const auto sources = store.refs(source);
  std::vector<WeightedPositiveSet> sets(sources.size());
  std::vector<SourceMining> diag(sources.size());

  parallel_for(sources.size(), [&](std::size_t s) {
    const PrototypeRef src = sources[s];
    const Vec& p = store.at(src).vector;
    SourceMining& d = diag[s];
    d.source = src;
    for (int c = 0; c < store.cameras(target); ++c) {
      if (kind == PositiveKind::INTRA_MODAL && c == src.camera) continue;
      const auto& cam = store.camera(target, c);
      if (cam.empty()) continue;
      CameraBest best{c, 0, cosine_sim(p, cam[0].vector)};
      for (int j = 1; j < static_cast<int>(cam.size()); ++j) {
        const double sim = cosine_sim(p, cam[j].vector);
        if (sim > best.sim) best = {c, j, sim};  // ties keep the lowest index
      }
      d.candidates.push_back(best);
    }

    WeightedPositiveSet& out = sets[s];
    out.source = src;
    out.kind = kind;
    if (d.candidates.empty()) return;
    d.s_max = d.candidates[0].sim;
    for (const auto& b : d.candidates) d.s_max = std::max(d.s_max, b.sim);
    if (cfg.use_dts) {
      // rho * s_max would invert the threshold's meaning for non-positive s_max.
      if (d.s_max <= 0.0) {
        d.threshold = d.s_max;
        return;
      }
      d.threshold = rho * d.s_max;
    } else {
      d.threshold = cfg.fixed_threshold;
    }
    std::vector<double> sims;
    for (const auto& b : d.candidates)
      if (b.sim >= d.threshold) {
        out.entries.push_back({{target, b.camera, b.index}, b.sim, 0.0});
        sims.push_back(b.sim);
      }
    if (out.entries.empty()) return;
    std::vector<double> w;
    if (cfg.use_swa) {
      w = soft_weights(sims, cfg.tau_w);
    } else {
      w.assign(sims.size(), 1.0 / static_cast<double>(sims.size()));
    }
    for (std::size_t j = 0; j < w.size(); ++j) out.entries[j].weight = w[j];
  });

  MiningResult result;
  result.family.source = source;
  result.family.kind = kind;
  result.family.sets.resize(static_cast<std::size_t>(store.cameras(source)));
  for (auto& s : sets) result.family.sets[s.source.camera].push_back(std::move(s));
  result.diagnostics = std::move(diag);
  return result;
}

inline PositiveFamily mine_positive_sets(const PrototypeStore& store, Modality source, PositiveKind kind, int e,
                                         const TrainConfig& cfg) {
  return mine_with_diagnostics(store, source, kind, e, cfg).family;
}

// All four families for one epoch.
inline PositiveSets mine_all(const PrototypeStore& store, int e, const TrainConfig& cfg) {
  PositiveSets ps;
  for (Modality m : kModalities) {
    ps.intra[index_of(m)] = mine_positive_sets(store, m, PositiveKind::INTRA_MODAL, e, cfg);
    ps.cross[index_of(m)] = mine_positive_sets(store, m, PositiveKind::CROSS_MODAL, e, cfg);
  }
  return ps;
}

}  // namespace hitpro
