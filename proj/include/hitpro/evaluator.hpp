#pragma once

#include <algorithm>
#include <numeric>
#include <optional>
#include <random>
#include <string>
#include <vector>

#include "hitpro/config.hpp"
#include "hitpro/datamodel.hpp"
#include "hitpro/encoder.hpp"
#include "hitpro/mining.hpp"
#include "hitpro/prototyping.hpp"

namespace hitpro {

namespace eval {
struct LabelReader {
  static LabelAccess key() { return {}; }
};
}  // namespace eval

// Ground-truth identities in dataset order (evaluation only).
inline std::vector<std::optional<int>> labels(const Dataset& ds) {
  std::vector<std::optional<int>> out;
  out.reserve(ds.tracklets.size());
  for (const auto& t : ds.tracklets) out.push_back(t.gt_identity(eval::LabelReader::key()));
  return out;
}

inline bool has_labels(const Dataset& ds) {
  const auto l = labels(ds);
  return !l.empty() && std::all_of(l.begin(), l.end(), [](const auto& x) { return x.has_value(); });
}

// Test-time tracklet feature: same recipe as a prototype.
inline Vec embed_tracklet(const EncoderParams& params, const Tracklet& t, const TrainConfig& cfg) {
  const auto subs = partition_tracklet(0, static_cast<int>(t.length()), cfg.K);
  return mean_embedding(params, t, subs, cfg.normalize_prototypes);
}

inline std::vector<Vec> embed_dataset(const EncoderParams& params, const Dataset& ds, const TrainConfig& cfg) {
  std::vector<Vec> out(ds.tracklets.size());
  parallel_for(ds.tracklets.size(), [&](std::size_t i) { out[i] = embed_tracklet(params, ds.tracklets[i], cfg); });
  return out;
}

// Untrained reference features: plain average of a tracklet's raw frames.
inline std::vector<Vec> raw_mean_features(const Dataset& ds) {
  std::vector<Vec> out;
  for (const auto& t : ds.tracklets) out.push_back(t.frames.cast<double>().colwise().mean().transpose());
  return out;
}

struct RetrievalResult {
  std::string direction;
  std::vector<double> cmc;  // cmc[k-1] = rank-k accuracy
  double map = 0.0;
  int n_query = 0;
  int n_gallery = 0;

  double rank(int k) const { return cmc.at(static_cast<std::size_t>(k - 1)); }
};

inline RetrievalResult evaluate_retrieval(const std::vector<Vec>& queries, const std::vector<int>& query_ids,
                                          const std::vector<Vec>& gallery, const std::vector<int>& gallery_ids,
                                          int max_rank = 20) {
  if (queries.size() != query_ids.size() || gallery.size() != gallery_ids.size())
    throw ConfigError("evaluate_retrieval: embeddings and labels differ in length");
  if (max_rank < 1) throw ConfigError("evaluate_retrieval: max_rank must be >= 1");
  RetrievalResult r;
  r.n_query = static_cast<int>(queries.size());
  r.n_gallery = static_cast<int>(gallery.size());
  r.cmc.assign(static_cast<std::size_t>(max_rank), 0.0);
  if (queries.empty()) return r;

  std::vector<double> first_hit_counts(static_cast<std::size_t>(max_rank), 0.0);
  double ap_sum = 0.0;
  std::vector<int> order(gallery.size());
  std::vector<double> sims(gallery.size());
  for (std::size_t q = 0; q < queries.size(); ++q) {
    if (std::find(gallery_ids.begin(), gallery_ids.end(), query_ids[q]) == gallery_ids.end())
      throw ConfigError("evaluate_retrieval: query identity " + std::to_string(query_ids[q]) + " absent from gallery");
    for (std::size_t g = 0; g < gallery.size(); ++g) sims[g] = cosine_sim(queries[q], gallery[g]);
    std::iota(order.begin(), order.end(), 0);
    std::stable_sort(order.begin(), order.end(), [&](int a, int b) { return sims[a] > sims[b]; });

    int hits = 0;
    double precision_sum = 0.0;
    int first = -1;
    for (std::size_t pos = 0; pos < order.size(); ++pos) {
      if (gallery_ids[order[pos]] != query_ids[q]) continue;
      ++hits;
      precision_sum += static_cast<double>(hits) / static_cast<double>(pos + 1);
      if (first < 0) first = static_cast<int>(pos);
    }
    ap_sum += precision_sum / hits;
    if (first < max_rank) first_hit_counts[first] += 1.0;
  }
  double running = 0.0;
  for (int k = 0; k < max_rank; ++k) {
    running += first_hit_counts[k];
    r.cmc[k] = running / static_cast<double>(queries.size());
  }
  r.map = ap_sum / static_cast<double>(queries.size());
  return r;
}

// Cross-modal retrieval with queries from `query` and every tracklet of the
// other modality as gallery.
inline RetrievalResult cross_modal_retrieval(const std::vector<Vec>& embeddings, const Dataset& ds, Modality query,
                                             int max_rank = 20) {
  const auto ids = labels(ds);
  std::vector<Vec> qv, gv;
  std::vector<int> ql, gl;
  for (std::size_t i = 0; i < ds.tracklets.size(); ++i) {
    if (!ids[i]) throw ConfigError("retrieval requires ground-truth identities on every tracklet");
    if (ds.tracklets[i].modality == query) {
      qv.push_back(embeddings[i]);
      ql.push_back(*ids[i]);
    } else {
      gv.push_back(embeddings[i]);
      gl.push_back(*ids[i]);
    }
  }
  auto r = evaluate_retrieval(qv, ql, gv, gl, max_rank);
  r.direction = to_string(query) + "->" + to_string(other(query));
  return r;
}

inline Json to_json(const RetrievalResult& r) {
  Json j{{"direction", r.direction}, {"cmc", r.cmc}, {"mAP", r.map}, {"n_query", r.n_query}, {"n_gallery", r.n_gallery}};
  for (int k : {1, 5, 10, 20})
    if (k <= static_cast<int>(r.cmc.size())) j["rank" + std::to_string(k)] = r.rank(k);
  return j;
}

struct DistanceDistribution {
  std::vector<double> positive;  // 1 - cosine, intra-class pairs
  std::vector<double> negative;  // 1 - cosine, inter-class pairs
  double bin_width = 0.0;
  std::vector<int> positive_hist;
  std::vector<int> negative_hist;
};

// Uniformly samples n_pairs same-identity and n_pairs different-identity pairs
// (with replacement) and histograms their cosine distances over [0, 2].
inline DistanceDistribution distance_distribution(const std::vector<Vec>& embeddings, const std::vector<int>& ids,
                                                  int n_pairs, std::mt19937_64& rng, int bins = 40) {
  if (embeddings.size() != ids.size()) throw ConfigError("distance_distribution: labels and embeddings differ");
  std::vector<std::pair<int, int>> pos;
  const int n = static_cast<int>(embeddings.size());
  bool any_negative = false;
  for (int i = 0; i < n; ++i)
    for (int j = i + 1; j < n; ++j) {
      if (ids[i] == ids[j])
        pos.emplace_back(i, j);
      else
        any_negative = true;
    }
  if (pos.empty()) throw ConfigError("distance_distribution: no same-identity pair available");
  if (!any_negative) throw ConfigError("distance_distribution: no different-identity pair available");

  DistanceDistribution out;
  out.bin_width = 2.0 / bins;
  out.positive_hist.assign(static_cast<std::size_t>(bins), 0);
  out.negative_hist.assign(static_cast<std::size_t>(bins), 0);
  auto bin_of = [&](double dist) { return std::clamp(static_cast<int>(dist / out.bin_width), 0, bins - 1); };

  std::uniform_int_distribution<std::size_t> pick_pos(0, pos.size() - 1);
  std::uniform_int_distribution<int> pick(0, n - 1);
  for (int k = 0; k < n_pairs; ++k) {
    const auto [i, j] = pos[pick_pos(rng)];
    const double dist = 1.0 - cosine_sim(embeddings[i], embeddings[j]);
    out.positive.push_back(dist);
    ++out.positive_hist[bin_of(dist)];
  }
  // Rejection sampling over unordered pairs is uniform over different-identity pairs.
  for (int k = 0; k < n_pairs;) {
    const int i = pick(rng), j = pick(rng);
    if (i == j || ids[i] == ids[j]) continue;
    const double dist = 1.0 - cosine_sim(embeddings[i], embeddings[j]);
    out.negative.push_back(dist);
    ++out.negative_hist[bin_of(dist)];
    ++k;
  }
  return out;
}

struct MiningQuality {
  std::optional<double> precision;  // null when nothing was accepted
  double recall = 0.0;
  int accepted = 0;
  int accepted_true = 0;
  int available_true = 0;
};

// precision = accepted pairs with matching identity / accepted pairs;
// recall = accepted true pairs / (source, target camera) slots whose target
// camera holds a tracklet of the source's identity.
inline MiningQuality mining_quality(const PositiveFamily& family, const PrototypeStore& store, const Dataset& ds) {
  const auto ids = labels(ds);
  for (const auto& l : ids)
    if (!l) throw ConfigError("mining_quality requires ground-truth identities");
  const Modality target = family.kind == PositiveKind::INTRA_MODAL ? family.source : other(family.source);

  MiningQuality q;
  for (const auto& cam : family.sets)
    for (const auto& set : cam) {
      const int src_id = *ids[store.at(set.source).tracklet];
      for (int c = 0; c < store.cameras(target); ++c) {
        if (family.kind == PositiveKind::INTRA_MODAL && c == set.source.camera) continue;
        const auto& protos = store.camera(target, c);
        if (std::any_of(protos.begin(), protos.end(), [&](const Prototype& p) { return *ids[p.tracklet] == src_id; }))
          ++q.available_true;
      }
      for (const auto& e : set.entries) {
        ++q.accepted;
        if (*ids[store.at(e.target).tracklet] == src_id) ++q.accepted_true;
      }
    }
  if (q.accepted > 0) q.precision = static_cast<double>(q.accepted_true) / q.accepted;
  q.recall = q.available_true > 0 ? static_cast<double>(q.accepted_true) / q.available_true : 0.0;
  return q;
}

inline Json to_json(const MiningQuality& q) {
  return Json{{"precision", q.precision ? Json(*q.precision) : Json(nullptr)},
              {"recall", q.recall},
              {"accepted", q.accepted},
              {"accepted_true", q.accepted_true},
              {"available_true", q.available_true}};
}

}  // namespace hitpro
