#pragma once

#include <random>
#include <vector>

#include "hitpro/config.hpp"
#include "hitpro/datamodel.hpp"
#include "hitpro/prototyping.hpp"

namespace hitpro {

using Rng = std::mt19937_64;

struct BatchItem {
  int tracklet = 0;  // dataset index
  SubTracklet sub;
  PrototypeRef source;

  bool operator==(const BatchItem&) const = default;
};

// C cameras x P tracklets x S sub-tracklets of one modality, camera-major.
struct BatchSpec {
  Modality modality = Modality::VIS;
  std::vector<BatchItem> items;

  bool operator==(const BatchSpec&) const = default;
};

namespace detail {

// n draws from [0, pool): distinct when n <= pool, i.i.d. otherwise.
inline std::vector<int> draw(int pool, int n, Rng& rng) {
  std::vector<int> out;
  out.reserve(static_cast<std::size_t>(n));
  if (n <= pool) {
    std::vector<int> perm(static_cast<std::size_t>(pool));
    for (int i = 0; i < pool; ++i) perm[i] = i;
    for (int i = 0; i < n; ++i) {
      std::uniform_int_distribution<int> pick(i, pool - 1);
      std::swap(perm[i], perm[pick(rng)]);
      out.push_back(perm[i]);
    }
  } else {
    std::uniform_int_distribution<int> pick(0, pool - 1);
    for (int i = 0; i < n; ++i) out.push_back(pick(rng));
  }
  return out;
}

}  // namespace detail

inline BatchSpec sample_batch(const Dataset& ds, const PartitionTable& partitions, Modality modality,
                              const TrainConfig& cfg, Rng& rng) {
  std::vector<std::vector<int>> members;  // non-empty cameras only
  std::vector<int> camera_ids;
  for (int c = 0; c < ds.cameras(modality); ++c) {
    auto m = ds.camera_members(modality, c);
    if (m.empty()) continue;
    members.push_back(std::move(m));
    camera_ids.push_back(c);
  }
  if (members.empty()) throw ConfigError("sample_batch: modality " + to_string(modality) + " has no tracklets");

  BatchSpec batch;
  batch.modality = modality;
  batch.items.reserve(static_cast<std::size_t>(cfg.C * cfg.P * cfg.S));
  for (int ci : detail::draw(static_cast<int>(members.size()), cfg.C, rng)) {
    const auto& cam = members[ci];
    for (int pi : detail::draw(static_cast<int>(cam.size()), cfg.P, rng)) {
      const int t = cam[pi];
      const auto& subs = partitions.at(t);
      for (int si : detail::draw(static_cast<int>(subs.size()), cfg.S, rng))
        batch.items.push_back({t, subs[si], {modality, camera_ids[ci], pi}});
    }
  }
  return batch;
}

}  // namespace hitpro
