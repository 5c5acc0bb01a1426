#pragma once

#include <cmath>
#include <span>
#include <vector>

#include "hitpro/config.hpp"
#include "hitpro/datamodel.hpp"

namespace hitpro {

struct LossValue {
  double value = 0.0;
  std::vector<Vec> grads;  // d value / d q, one per batch embedding
};

namespace detail {

inline LossValue zero_loss(std::span<const Vec> q) {
  LossValue out;
  out.grads.reserve(q.size());
  for (const auto& v : q) out.grads.push_back(Vec::Zero(v.size()));
  return out;
}

// weight * (-log softmax_target) over logits q.p_k / tau for the prototypes of
// one camera; adds the scaled gradient into `grad`.
inline double camera_nll(const Vec& q, const std::vector<Prototype>& cam, int target, double tau, double weight,
                         double inv_batch, Vec& grad) {
  Vec logits(static_cast<Eigen::Index>(cam.size()));
  for (std::size_t k = 0; k < cam.size(); ++k) logits(static_cast<Eigen::Index>(k)) = q.dot(cam[k].vector) / tau;
  const double mx = logits.maxCoeff();
  const Vec ex = (logits.array() - mx).exp().matrix();
  const double sum = ex.sum();
  const double nll = mx + std::log(sum) - logits(target);
  Vec expected = Vec::Zero(q.size());
  for (std::size_t k = 0; k < cam.size(); ++k) expected += (ex(static_cast<Eigen::Index>(k)) / sum) * cam[k].vector;
  grad += (weight * inv_batch / tau) * (expected - cam[target].vector);
  return weight * nll;
}

inline void check_batch(std::span<const Vec> q, std::span<const PrototypeRef> sources) {
  if (q.size() != sources.size()) throw ConfigError("loss: embeddings and source references differ in length");
}

// Shared body of the two positive-set losses.
inline LossValue positive_loss(std::span<const Vec> q, std::span<const PrototypeRef> sources,
                               const PrototypeStore& store, const PositiveFamily& family, double tau) {
  check_batch(q, sources);
  LossValue out = zero_loss(q);
  if (q.empty()) return out;
  const double inv_b = 1.0 / static_cast<double>(q.size());
  double total = 0.0;
  for (std::size_t i = 0; i < q.size(); ++i) {
    for (const auto& e : family.at(sources[i]).entries) {
      if (!store.contains(e.target)) throw ConfigError("loss: positive set references a missing prototype");
      total += camera_nll(q[i], store.camera(e.target.modality, e.target.camera), e.target.index, tau, e.weight,
                          inv_b, out.grads[i]);
    }
  }
  out.value = total * inv_b;
  return out;
}

}  // namespace detail

// Instance discrimination among the prototypes of each query's own camera.
inline LossValue loss_intra_camera(std::span<const Vec> q, std::span<const PrototypeRef> sources,
                                   const PrototypeStore& store, double tau) {
  detail::check_batch(q, sources);
  LossValue out = detail::zero_loss(q);
  if (q.empty()) return out;
  const double inv_b = 1.0 / static_cast<double>(q.size());
  double total = 0.0;
  for (std::size_t i = 0; i < q.size(); ++i) {
    const auto& src = sources[i];
    if (!store.contains(src)) throw ConfigError("loss: source prototype missing from store");
    total += detail::camera_nll(q[i], store.camera(src.modality, src.camera), src.index, tau, 1.0, inv_b,
                                out.grads[i]);
  }
  out.value = total * inv_b;
  return out;
}

// Weighted pull towards same-modality positives in other cameras.
inline LossValue loss_imcc(std::span<const Vec> q, std::span<const PrototypeRef> sources, const PrototypeStore& store,
                           const PositiveFamily& intra_modal, double tau) {
  return detail::positive_loss(q, sources, store, intra_modal, tau);
}

// Weighted pull towards positives of the opposite modality.
inline LossValue loss_cross_modal(std::span<const Vec> q, std::span<const PrototypeRef> sources,
                                  const PrototypeStore& store, const PositiveFamily& cross_modal, double tau) {
  return detail::positive_loss(q, sources, store, cross_modal, tau);
}

struct LossBreakdown {
  double l_ic = 0.0;
  double l_imcc = 0.0;
  double l_cm = 0.0;
  double l_total = 0.0;
  bool imcc_active = false;
  bool cm_active = false;
  std::vector<Vec> grads;
};

struct LossSchedule {
  bool imcc = false;
  bool cm = false;
};

// Epoch gating of the cross-camera and cross-modality terms.
inline LossSchedule loss_schedule(int e, const TrainConfig& cfg) {
  if (!cfg.use_hls) return {cfg.use_imcc, cfg.use_cm};
  return {cfg.use_imcc && e >= cfg.e_intra, cfg.use_cm && e >= cfg.e_cross};
}

// One modality's batch: L_ic plus the active positive-set terms. Inactive terms
// are not evaluated, so they contribute exactly nothing to value or gradient.
inline LossBreakdown total_loss(int e, std::span<const Vec> q, std::span<const PrototypeRef> sources,
                                const PrototypeStore& store, const PositiveSets& positives, Modality modality,
                                const TrainConfig& cfg) {
  if (e < 0 || (cfg.e_total > 0 && e >= cfg.e_total)) throw ConfigError("total_loss: epoch out of range");
  const LossSchedule sched = loss_schedule(e, cfg);
  LossBreakdown out;
  out.imcc_active = sched.imcc;
  out.cm_active = sched.cm;

  LossValue ic = loss_intra_camera(q, sources, store, cfg.tau);
  out.l_ic = ic.value;
  out.l_total = ic.value;
  out.grads = std::move(ic.grads);
  if (sched.imcc) {
    const LossValue v = loss_imcc(q, sources, store, positives.intra_of(modality), cfg.tau);
    out.l_imcc = v.value;
    out.l_total += v.value;
    for (std::size_t i = 0; i < out.grads.size(); ++i) out.grads[i] += v.grads[i];
  }
  if (sched.cm) {
    const LossValue v = loss_cross_modal(q, sources, store, positives.cross_of(modality), cfg.tau);
    out.l_cm = v.value;
    out.l_total += v.value;
    for (std::size_t i = 0; i < out.grads.size(); ++i) out.grads[i] += v.grads[i];
  }
  return out;
}

// p <- (1 - alpha) p + alpha q, then back to unit length unless disabled.
inline void ema_blend(Vec& p, const Vec& q, double alpha, bool renormalize) {
  p = (1.0 - alpha) * p + alpha * q;
  if (renormalize) {
    const double n = p.norm();
    if (n > 0.0) p /= n;
  }
}

// Moves each query's own prototype and all of its accepted positives towards
// the query, in batch order (own, intra-modal targets, cross-modal targets).
inline void ema_update(PrototypeStore& store, std::span<const Vec> q, std::span<const PrototypeRef> sources,
                       const PositiveFamily& intra_modal, const PositiveFamily& cross_modal, double alpha,
                       bool renormalize = true) {
  detail::check_batch(q, sources);
  for (std::size_t i = 0; i < q.size(); ++i) {
    ema_blend(store.at(sources[i]).vector, q[i], alpha, renormalize);
    for (const auto& e : intra_modal.at(sources[i]).entries) ema_blend(store.at(e.target).vector, q[i], alpha, renormalize);
    for (const auto& e : cross_modal.at(sources[i]).entries) ema_blend(store.at(e.target).vector, q[i], alpha, renormalize);
  }
}

}  // namespace hitpro
