#include <gtest/gtest.h>

#include "hitpro/hitpro.hpp"
#include "oracles.hpp"

using namespace hitpro;

namespace {

Vec v2(double a, double b) {
  Vec v(2);
  v << a, b;
  return v;
}

// VIS camera 0 holds the source [1,0]; camera 1 holds {[1,0],[0,1]}; camera 2 holds {[0.96,0.28]}.
PrototypeStore hand_store() {
  PrototypeStore s({3, 1});
  s.camera(Modality::VIS, 0).push_back({0, Modality::VIS, 0, v2(1, 0)});
  s.camera(Modality::VIS, 1).push_back({1, Modality::VIS, 1, v2(1, 0)});
  s.camera(Modality::VIS, 1).push_back({2, Modality::VIS, 1, v2(0, 1)});
  s.camera(Modality::VIS, 2).push_back({3, Modality::VIS, 2, v2(0.96, 0.28)});
  s.camera(Modality::IR, 0).push_back({4, Modality::IR, 0, v2(0, 1)});
  return s;
}

TrainConfig mining_config() {
  TrainConfig c;
  c.e_total = 60;
  return c;
}

void expect_same(const PositiveFamily& a, const PositiveFamily& b) {
  ASSERT_EQ(a.sets.size(), b.sets.size());
  for (std::size_t c = 0; c < a.sets.size(); ++c) {
    ASSERT_EQ(a.sets[c].size(), b.sets[c].size());
    for (std::size_t i = 0; i < a.sets[c].size(); ++i) {
      const auto& x = a.sets[c][i];
      const auto& y = b.sets[c][i];
      EXPECT_EQ(x.source, y.source);
      ASSERT_EQ(x.entries.size(), y.entries.size()) << "camera " << c << " source " << i;
      for (std::size_t j = 0; j < x.entries.size(); ++j) {
        EXPECT_EQ(x.entries[j].target, y.entries[j].target);
        EXPECT_EQ(x.entries[j].sim, y.entries[j].sim);
        EXPECT_EQ(x.entries[j].weight, y.entries[j].weight);
      }
    }
  }
}

std::set<PrototypeRef> targets(const WeightedPositiveSet& s) {
  std::set<PrototypeRef> out;
  for (const auto& e : s.entries) out.insert(e.target);
  return out;
}

}  // namespace

TEST(Cosine, HandValues) {
  EXPECT_DOUBLE_EQ(cosine_sim(v2(1, 0), v2(0, 1)), 0.0);
  EXPECT_NEAR(cosine_sim(v2(1, 2), v2(2, 1)), 0.8, 1e-15);
  EXPECT_THROW(cosine_sim(v2(0, 0), v2(1, 0)), NumericError);
}

TEST(RhoSchedule, EndpointsAndMidpoint) {
  TrainConfig c = mining_config();
  EXPECT_DOUBLE_EQ(rho_schedule(0, c), 0.99);
  EXPECT_NEAR(rho_schedule(60, c), 0.90, 1e-15);
  EXPECT_NEAR(rho_schedule(30, c), 0.945, 1e-15);
  EXPECT_THROW(rho_schedule(61, c), ConfigError);
  EXPECT_THROW(rho_schedule(-1, c), ConfigError);
}

TEST(SoftWeights, HandValues) {
  EXPECT_EQ(soft_weights({0.3}, 0.1), std::vector<double>{1.0});
  const auto eq = soft_weights({0.4, 0.4}, 0.1);
  EXPECT_DOUBLE_EQ(eq[0], 0.5);
  EXPECT_DOUBLE_EQ(eq[1], 0.5);
  const auto w = soft_weights({0.9, 0.7}, 0.1);
  EXPECT_NEAR(w[0], 0.8808, 1e-4);
  EXPECT_NEAR(w[1], 0.1192, 1e-4);
  EXPECT_THROW(soft_weights({}, 0.1), ConfigError);
}

TEST(Mining, HandInstanceAcrossSchedule) {
  const PrototypeStore s = hand_store();
  const TrainConfig c = mining_config();
  const auto early = mine_positive_sets(s, Modality::VIS, PositiveKind::INTRA_MODAL, 0, c).at({Modality::VIS, 0, 0});
  ASSERT_EQ(early.entries.size(), 1u);
  EXPECT_EQ(early.entries[0].target, (PrototypeRef{Modality::VIS, 1, 0}));
  EXPECT_DOUBLE_EQ(early.entries[0].weight, 1.0);

  const auto late = mine_positive_sets(s, Modality::VIS, PositiveKind::INTRA_MODAL, 60, c).at({Modality::VIS, 0, 0});
  ASSERT_EQ(late.entries.size(), 2u);
  EXPECT_EQ(late.entries[0].target, (PrototypeRef{Modality::VIS, 1, 0}));
  EXPECT_EQ(late.entries[1].target, (PrototypeRef{Modality::VIS, 2, 0}));
  // softmax([1.0, 0.96] / 0.1) = [1, e^-0.4] / (1 + e^-0.4)
  EXPECT_NEAR(late.entries[0].weight, 0.598687660112452, 1e-12);
  EXPECT_NEAR(late.entries[1].weight, 0.401312339887548, 1e-12);
}

TEST(Mining, SingleTargetCameraIsAlwaysAccepted) {
  std::mt19937_64 rng(1);
  TrainConfig c = mining_config();
  for (int trial = 0; trial < 50; ++trial) {
    const PrototypeStore s = oracle::random_store({std::vector<int>{3}, std::vector<int>{4}}, 5, rng);
    const auto fam = mine_positive_sets(s, Modality::VIS, PositiveKind::CROSS_MODAL, 0, c);
    const auto diag = mine_with_diagnostics(s, Modality::VIS, PositiveKind::CROSS_MODAL, 0, c).diagnostics;
    for (std::size_t i = 0; i < 3; ++i)
      EXPECT_EQ(fam.sets[0][i].entries.size(), diag[i].s_max > 0.0 ? 1u : 0u);
  }
}

TEST(Mining, NonPositiveBestAcceptsNothingUnderDynamicThreshold) {
  PrototypeStore s({1, 2});
  s.camera(Modality::VIS, 0).push_back({0, Modality::VIS, 0, v2(1, 0)});
  s.camera(Modality::IR, 0).push_back({1, Modality::IR, 0, v2(-1, 0.1)});
  s.camera(Modality::IR, 1).push_back({2, Modality::IR, 1, v2(-0.5, -1)});
  TrainConfig c = mining_config();
  EXPECT_TRUE(mine_positive_sets(s, Modality::VIS, PositiveKind::CROSS_MODAL, 0, c).sets[0][0].entries.empty());
  c.use_dts = false;
  c.fixed_threshold = -0.95;
  EXPECT_EQ(mine_positive_sets(s, Modality::VIS, PositiveKind::CROSS_MODAL, 0, c).sets[0][0].entries.size(), 1u);
}

TEST(Mining, TieBreakPicksLowestIndex) {
  PrototypeStore s({2, 1});
  s.camera(Modality::VIS, 0).push_back({0, Modality::VIS, 0, v2(1, 0)});
  s.camera(Modality::VIS, 1).push_back({1, Modality::VIS, 1, v2(0, 1)});
  s.camera(Modality::VIS, 1).push_back({2, Modality::VIS, 1, v2(0.6, 0.8)});
  s.camera(Modality::VIS, 1).push_back({3, Modality::VIS, 1, v2(0.6, 0.8)});
  s.camera(Modality::IR, 0).push_back({4, Modality::IR, 0, v2(1, 0)});
  const auto set = mine_positive_sets(s, Modality::VIS, PositiveKind::INTRA_MODAL, 0, mining_config()).sets[0][0];
  ASSERT_EQ(set.entries.size(), 1u);
  EXPECT_EQ(set.entries[0].target.index, 1);
}

TEST(Mining, MatchesBruteForceOnRandomStores) {
  std::mt19937_64 rng(2024);
  std::uniform_int_distribution<int> cams(1, 4), per(0, 6), dim(2, 6);
  for (int inst = 0; inst < 40; ++inst) {
    std::array<std::vector<int>, 2> sizes;
    for (auto& m : sizes) {
      m.resize(static_cast<std::size_t>(cams(rng)));
      for (int& n : m) n = per(rng);
      m[0] = std::max(m[0], 1);
    }
    const PrototypeStore s = oracle::random_store(sizes, dim(rng), rng);
    for (bool dts : {true, false})
      for (bool swa : {true, false})
        for (int e : {0, 13, 60}) {
          TrainConfig c = mining_config();
          c.use_dts = dts;
          c.use_swa = swa;
          c.fixed_threshold = 0.2;
          for (Modality m : kModalities)
            for (PositiveKind k : {PositiveKind::INTRA_MODAL, PositiveKind::CROSS_MODAL})
              expect_same(mine_positive_sets(s, m, k, e, c),
                          oracle::mine(s, m, k, rho_schedule(e, c), dts, 0.2, swa, c.tau_w));
        }
  }
}

TEST(Mining, AcceptedSetsGrowAsRhoFalls) {
  std::mt19937_64 rng(7);
  for (int inst = 0; inst < 30; ++inst) {
    const PrototypeStore s = oracle::random_store({std::vector<int>{4, 3, 5}, std::vector<int>{2, 6}}, 3, rng);
    TrainConfig c = mining_config();
    for (PositiveKind k : {PositiveKind::INTRA_MODAL, PositiveKind::CROSS_MODAL}) {
      std::vector<PositiveFamily> fams;
      for (int e = 0; e <= 60; e += 10) fams.push_back(mine_positive_sets(s, Modality::IR, k, e, c));
      for (std::size_t f = 1; f < fams.size(); ++f)
        for (std::size_t cam = 0; cam < fams[f].sets.size(); ++cam)
          for (std::size_t i = 0; i < fams[f].sets[cam].size(); ++i) {
            const auto before = targets(fams[f - 1].sets[cam][i]);
            const auto after = targets(fams[f].sets[cam][i]);
            EXPECT_TRUE(std::includes(after.begin(), after.end(), before.begin(), before.end()));
          }
    }
  }
}

TEST(Mining, RhoOneAcceptsExactlyTheGlobalBest) {
  std::mt19937_64 rng(8);
  TrainConfig c = mining_config();
  c.rho_init = c.rho_final = 1.0;
  for (int inst = 0; inst < 30; ++inst) {
    const PrototypeStore s = oracle::random_store({std::vector<int>{3, 3, 3}, std::vector<int>{3, 3}}, 4, rng);
    const auto r = mine_with_diagnostics(s, Modality::VIS, PositiveKind::CROSS_MODAL, 0, c);
    for (const auto& d : r.diagnostics) {
      const auto& set = r.family.at(d.source);
      if (d.s_max <= 0.0) {
        EXPECT_TRUE(set.entries.empty());
        continue;
      }
      ASSERT_EQ(set.entries.size(), 1u);
      EXPECT_EQ(set.entries[0].sim, d.s_max);
    }
  }
}

TEST(Mining, AcceptanceIsScaleInvariant) {
  std::mt19937_64 rng(9);
  std::uniform_real_distribution<double> lam(0.1, 10.0);
  const TrainConfig c = mining_config();
  for (int inst = 0; inst < 20; ++inst) {
    const PrototypeStore s = oracle::random_store({std::vector<int>{4, 4}, std::vector<int>{4, 4}}, 3, rng);
    PrototypeStore scaled = s;
    for (Modality m : kModalities)
      for (const auto& r : scaled.refs(m)) scaled.at(r).vector *= lam(rng);
    for (Modality m : kModalities)
      for (PositiveKind k : {PositiveKind::INTRA_MODAL, PositiveKind::CROSS_MODAL}) {
        const auto a = mine_positive_sets(s, m, k, 30, c), b = mine_positive_sets(scaled, m, k, 30, c);
        for (const auto& r : s.refs(m)) EXPECT_EQ(targets(a.at(r)), targets(b.at(r)));
      }
  }
}

TEST(Mining, UniformWeightsWithoutSoftAssignment) {
  std::mt19937_64 rng(10);
  TrainConfig c = mining_config();
  c.use_swa = false;
  c.use_dts = false;
  c.fixed_threshold = -1.0;
  const PrototypeStore s = oracle::random_store({std::vector<int>{2}, std::vector<int>{2, 2, 2, 2}}, 3, rng);
  const PositiveFamily f = mine_positive_sets(s, Modality::VIS, PositiveKind::CROSS_MODAL, 0, c);
  for (const auto& set : f.sets[0]) {
    ASSERT_EQ(set.entries.size(), 4u);
    for (const auto& e : set.entries) EXPECT_DOUBLE_EQ(e.weight, 0.25);
  }
}

TEST(Mining, CrossModalNeedsBothModalities) {
  PrototypeStore s({1, 1});
  s.camera(Modality::VIS, 0).push_back({0, Modality::VIS, 0, v2(1, 0)});
  EXPECT_THROW(mine_positive_sets(s, Modality::VIS, PositiveKind::CROSS_MODAL, 0, mining_config()), ConfigError);
  EXPECT_NO_THROW(mine_positive_sets(s, Modality::VIS, PositiveKind::INTRA_MODAL, 0, mining_config()));
}
