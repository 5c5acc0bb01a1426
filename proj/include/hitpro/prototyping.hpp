#pragma once

#include <algorithm>
#include <vector>

#include "hitpro/config.hpp"
#include "hitpro/datamodel.hpp"
#include "hitpro/encoder.hpp"

namespace hitpro {

// Splits [0, length) into min(K, length) contiguous parts; the first
// length % K_eff parts get one extra frame.
inline std::vector<SubTracklet> partition_tracklet(int parent, int length, int K) {
  if (length < 1 || K < 1) throw ConfigError("partition_tracklet: need length >= 1 and K >= 1");
  const int k_eff = std::min(K, length);
  const int base = length / k_eff;
  const int rem = length % k_eff;
  std::vector<SubTracklet> out;
  out.reserve(static_cast<std::size_t>(k_eff));
  int start = 0;
  for (int k = 0; k < k_eff; ++k) {
    const int size = base + (k < rem ? 1 : 0);
    out.push_back({parent, k, start, start + size});
    start += size;
  }
  return out;
}

inline std::vector<SubTracklet> partition_tracklet(const Dataset& ds, int parent, int K) {
  return partition_tracklet(parent, static_cast<int>(ds.tracklets.at(parent).length()), K);
}

// Sub-tracklet table for a whole dataset, indexed by tracklet.
using PartitionTable = std::vector<std::vector<SubTracklet>>;

inline PartitionTable partition_dataset(const Dataset& ds, int K) {
  PartitionTable table;
  table.reserve(ds.tracklets.size());
  for (int i = 0; i < static_cast<int>(ds.tracklets.size()); ++i) table.push_back(partition_tracklet(ds, i, K));
  return table;
}

inline Vec sub_tracklet_embedding(const EncoderParams& params, const Tracklet& t, const SubTracklet& sub) {
  return encode(params, gather_frames(t, sub, params.shape.seq_len)).embedding;
}

// Mean of unit sub-tracklet embeddings, re-normalized unless disabled.
inline Vec average_embeddings(const std::vector<Vec>& parts, bool renormalize) {
  if (parts.empty()) throw ConfigError("prototype: no sub-tracklet embeddings");
  Vec mean = Vec::Zero(parts[0].size());
  for (const auto& v : parts) mean += v;
  mean /= static_cast<double>(parts.size());
  if (renormalize) {
    const double n = mean.norm();
    if (!(n > 0.0)) throw NumericError("prototype: sub-tracklet embeddings cancel to zero");
    mean /= n;
  }
  return mean;
}

inline Vec mean_embedding(const EncoderParams& params, const Tracklet& t, const std::vector<SubTracklet>& subs,
                          bool renormalize) {
  std::vector<Vec> parts;
  parts.reserve(subs.size());
  for (const auto& sub : subs) parts.push_back(sub_tracklet_embedding(params, t, sub));
  return average_embeddings(parts, renormalize);
}

// Encodes every tracklet with a frozen encoder and groups the prototypes by
// (modality, camera). Parallel over tracklets; output order is dataset order.
inline PrototypeStore build_prototypes(const EncoderParams& params, const Dataset& ds, const TrainConfig& cfg,
                                       const PartitionTable& partitions) {
  std::vector<Vec> vectors(ds.tracklets.size());
  parallel_for(ds.tracklets.size(), [&](std::size_t i) {
    vectors[i] = mean_embedding(params, ds.tracklets[i], partitions.at(i), cfg.normalize_prototypes);
  });
  PrototypeStore store(ds.n_cameras);
  for (int i = 0; i < static_cast<int>(ds.tracklets.size()); ++i) {
    const auto& t = ds.tracklets[i];
    store.camera(t.modality, t.camera_id).push_back({i, t.modality, t.camera_id, std::move(vectors[i])});
  }
  return store;
}

inline PrototypeStore build_prototypes(const EncoderParams& params, const Dataset& ds, const TrainConfig& cfg) {
  return build_prototypes(params, ds, cfg, partition_dataset(ds, cfg.K));
}

}  // namespace hitpro
