#include <gtest/gtest.h>

#include "hitpro/hitpro.hpp"
#include "test_util.hpp"

using namespace hitpro;

namespace {

EncoderParams constant_like(const EncoderParams& p, double v) {
  EncoderParams g = p.zeros_like();
  g.for_each([&](const std::string&, Mat& m) { m.setConstant(v); });
  return g;
}

double first_value(const EncoderParams& p) {
  double v = 0.0;
  bool done = false;
  p.for_each([&](const std::string&, const Mat& m) {
    if (!done) v = m(0, 0);
    done = true;
  });
  return v;
}

}  // namespace

TEST(Sgd, ZeroGradientLeavesParametersUnchanged) {
  const EncoderParams p0 = encoder_init({3, 4, 4, 4, 1, 2, true}, 1);
  EncoderParams p = p0;
  OptState opt = OptState::for_params(p, 0.1);
  sgd_step(p, p.zeros_like(), opt, 0.9);
  EXPECT_TRUE(p == p0);
}

TEST(Sgd, PlainDescentWithoutMomentum) {
  EncoderParams p = encoder_init({3, 4, 4, 4, 0, 2, true}, 1);
  const double before = first_value(p);
  OptState opt = OptState::for_params(p, 0.1);
  opt.round_to_f32 = false;
  sgd_step(p, constant_like(p, 0.5), opt, 0.0);
  EXPECT_DOUBLE_EQ(first_value(p), before - 0.05);
}

TEST(Sgd, MomentumUnrollsOverTwoSteps) {
  EncoderParams p = encoder_init({3, 4, 4, 4, 0, 2, true}, 1);
  const double before = first_value(p);
  OptState opt = OptState::for_params(p, 0.01);
  opt.round_to_f32 = false;
  const EncoderParams g = constant_like(p, 2.0);
  sgd_step(p, g, opt, 0.9);
  sgd_step(p, g, opt, 0.9);
  EXPECT_NEAR(before - first_value(p), 0.01 * 2.0 * (1.0 + 1.9), 1e-15);
  EXPECT_EQ(opt.step, 2);
}

TEST(Sgd, ShapeMismatchIsRejected) {
  EncoderParams p = encoder_init({3, 4, 4, 4, 0, 2, true}, 1);
  OptState opt = OptState::for_params(p, 0.1);
  EXPECT_THROW(sgd_step(p, encoder_init({3, 4, 4, 4, 1, 2, true}, 1), opt, 0.9), ConfigError);
}

TEST(Trainer, LearningRateStepDecay) {
  TrainConfig c;
  EXPECT_DOUBLE_EQ(learning_rate(0, c), 0.00035);
  EXPECT_DOUBLE_EQ(learning_rate(19, c), 0.00035);
  EXPECT_NEAR(learning_rate(20, c), 0.000035, 1e-18);
  EXPECT_NEAR(learning_rate(45, c), 0.0000035, 1e-18);
}

TEST(Trainer, ZeroEpochsProducesInitialModel) {
  const Dataset ds = generate_dataset(testutil::tiny_gen_config(1));
  TrainConfig c = testutil::tiny_train_config();
  c.e_total = c.e_intra = c.e_cross = 0;
  const TrainResult r = train(ds, c);
  EXPECT_EQ(r.epochs_completed, 0);
  EXPECT_TRUE(r.metrics.epochs.empty());
  EXPECT_TRUE(r.params == initial_params(ds, c));
  EXPECT_EQ(r.store.size(Modality::VIS), ds.count(Modality::VIS));
}

TEST(Trainer, EarlyEpochsLogOnlyIntraCameraLoss) {
  const Dataset ds = generate_dataset(testutil::tiny_gen_config(2));
  TrainConfig c = testutil::tiny_train_config();
  c.e_intra = 2;
  c.e_cross = 3;
  const TrainResult r = train(ds, c);
  ASSERT_EQ(r.metrics.epochs.size(), 4u);
  for (const auto& em : r.metrics.epochs) {
    EXPECT_EQ(em.imcc_active, em.epoch >= 2);
    EXPECT_EQ(em.cm_active, em.epoch >= 3);
    for (const auto& it : em.iterations) {
      if (em.epoch < 2) {
        EXPECT_EQ(it.l_imcc, 0.0);
        EXPECT_EQ(it.l_total, it.l_ic);
      }
      if (em.epoch < 3) EXPECT_EQ(it.l_cm, 0.0);
      EXPECT_TRUE(std::isfinite(it.l_total));
    }
  }
}

TEST(Trainer, ParametersStayFloatRepresentable) {
  const Dataset ds = generate_dataset(testutil::tiny_gen_config(3));
  const TrainResult r = train(ds, testutil::tiny_train_config());
  r.params.for_each([](const std::string& name, const Mat& m) {
    for (Eigen::Index i = 0; i < m.size(); ++i)
      ASSERT_EQ(static_cast<double>(static_cast<float>(m.data()[i])), m.data()[i]) << name;
  });
}

TEST(Trainer, DeterministicAcrossRunsAndThreadCounts) {
  const Dataset ds = generate_dataset(testutil::tiny_gen_config(4));
  const TrainConfig c = testutil::tiny_train_config();
  set_threads(1);
  const TrainResult a = train(ds, c);
  set_threads(3);
  const TrainResult b = train(ds, c);
  set_threads(0);
  EXPECT_TRUE(a.params == b.params);
  EXPECT_EQ(to_json(a.metrics).dump(), to_json(b.metrics).dump());
  const auto dir = testutil::scratch_dir("trainer_det");
  save_checkpoint(a.params, a.store, a.epochs_completed, dir / "a.hpt");
  save_checkpoint(b.params, b.store, b.epochs_completed, dir / "b.hpt");
  EXPECT_EQ(io::read_bytes(dir / "a.hpt"), io::read_bytes(dir / "b.hpt"));

  TrainConfig other = c;
  other.seed = 99;
  EXPECT_FALSE(train(ds, other).params == a.params);
}

// Each epoch mines from prototypes rebuilt with the encoder left by the
// previous epoch, not from the EMA-updated store.
TEST(Trainer, EpochMiningUsesFreshPrototypes) {
  const Dataset ds = generate_dataset(testutil::tiny_gen_config(5));
  TrainConfig c = testutil::tiny_train_config();
  std::vector<EncoderParams> snapshots{initial_params(ds, c)};
  TrainHooks hooks;
  hooks.on_epoch_end = [&](int, const EncoderParams& p, const EpochMetrics&) { snapshots.push_back(p); };
  const TrainResult r = train(ds, c, hooks);
  for (const auto& em : r.metrics.epochs) {
    const PrototypeStore store = build_prototypes(snapshots[em.epoch], ds, c);
    const PositiveSets ps = mine_all(store, em.epoch, c);
    for (Modality m : kModalities) {
      EXPECT_EQ(em.intra_set_size[index_of(m)], ps.intra_of(m).mean_size());
      EXPECT_EQ(em.cross_set_size[index_of(m)], ps.cross_of(m).mean_size());
    }
  }
}

TEST(Trainer, ZeroNoiseMiningIsPerfect) {
  GenConfig g = testutil::tiny_gen_config(6);
  g.sigma_cam = g.sigma_mod = g.sigma_frame = g.sigma_walk = 0.0;
  g.identity_maps = true;
  const Dataset ds = generate_dataset(g);
  const TrainResult r = train(ds, testutil::tiny_train_config());
  for (const auto& em : r.metrics.epochs)
    for (Modality m : kModalities) {
      ASSERT_TRUE(em.intra_quality[index_of(m)].has_value());
      EXPECT_EQ(em.intra_quality[index_of(m)]->precision.value_or(1.0), 1.0);
      EXPECT_EQ(em.cross_quality[index_of(m)]->precision.value_or(1.0), 1.0);
    }
}

TEST(Trainer, RequiresBothModalities) {
  Dataset ds = generate_dataset(testutil::tiny_gen_config(7));
  std::erase_if(ds.tracklets, [](const Tracklet& t) { return t.modality == Modality::VIS; });
  EXPECT_THROW(train(ds, testutil::tiny_train_config()), ConfigError);
}
