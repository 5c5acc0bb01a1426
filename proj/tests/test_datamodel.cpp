#include <gtest/gtest.h>

#include <cstring>
#include <filesystem>
#include <fstream>
#include <regex>
#include <type_traits>

#include "hitpro/hitpro.hpp"
#include "test_util.hpp"

using namespace hitpro;
namespace fs = std::filesystem;

static_assert(!std::is_default_constructible_v<LabelAccess>);

namespace {

GenConfig small_gen(std::uint64_t seed) {
  GenConfig g;
  g.n_identities = 5;
  g.d_in = 6;
  g.d_latent = 3;
  g.frame_len_min = 3;
  g.frame_len_max = 9;
  g.seed = seed;
  return g;
}

}  // namespace

TEST(Dataset, EmptyManifestLoadsEmpty) {
  const auto dir = testutil::scratch_dir("empty_manifest");
  io::write_json(dir / "manifest.json", Json{{"d_in", 8}, {"n_cameras_vis", 1}, {"n_cameras_ir", 1}, {"tracklets", Json::array()}});
  const Dataset ds = load_dataset(dir / "manifest.json");
  EXPECT_TRUE(ds.tracklets.empty());
  EXPECT_EQ(ds.d_in, 8);
}

TEST(Dataset, FeatureFileSizeMismatchIsRejected) {
  const auto dir = testutil::scratch_dir("mismatch");
  io::write_json(dir / "manifest.json",
                 Json{{"d_in", 8},
                      {"n_cameras_vis", 1},
                      {"n_cameras_ir", 1},
                      {"tracklets",
                       {{{"tracklet_id", "a"}, {"modality", "VIS"}, {"camera_id", 0}, {"n_frames", 6}, {"feature_file", "a.f32"}}}}});
  FrameMatrix m(5, 8);  // 40 floats where 6 x 8 are declared
  m.setConstant(1.0f);
  io::write_features(dir / "a.f32", m);
  try {
    load_dataset(dir / "manifest.json");
    FAIL() << "expected FormatError";
  } catch (const FormatError& e) {
    EXPECT_NE(std::string(e.what()).find("dimension mismatch"), std::string::npos);
  }
}

TEST(Dataset, MissingFeatureFileIsIoError) {
  const auto dir = testutil::scratch_dir("missing_file");
  io::write_json(dir / "manifest.json",
                 Json{{"d_in", 2},
                      {"n_cameras_vis", 1},
                      {"n_cameras_ir", 1},
                      {"tracklets",
                       {{{"tracklet_id", "a"}, {"modality", "IR"}, {"camera_id", 0}, {"n_frames", 1}, {"feature_file", "nope.f32"}}}}});
  EXPECT_THROW(load_dataset(dir / "manifest.json"), IoError);
}

TEST(Dataset, StructuralInvariantsAreEnforced) {
  Dataset ds = generate_dataset(small_gen(1));
  ds.tracklets[1].id = ds.tracklets[0].id;
  EXPECT_THROW(ds.validate(), FormatError);

  ds = generate_dataset(small_gen(1));
  ds.tracklets[0].camera_id = 7;
  EXPECT_THROW(ds.validate(), FormatError);

  ds = generate_dataset(small_gen(1));
  ds.tracklets[0].frames.resize(0, ds.d_in);
  EXPECT_THROW(ds.validate(), FormatError);
}

TEST(Dataset, BadModalityStringIsRejected) {
  EXPECT_THROW(modality_from_string("UV"), FormatError);
  EXPECT_EQ(modality_from_string("IR"), Modality::IR);
}

TEST(Dataset, SaveLoadRoundTripIsBitExact) {
  const Dataset ds = generate_dataset(small_gen(3));
  const auto dir = testutil::scratch_dir("roundtrip");
  save_dataset(ds, dir);
  const Dataset back = load_dataset(dir / "manifest.json");
  ASSERT_EQ(back.tracklets.size(), ds.tracklets.size());
  EXPECT_EQ(back.d_in, ds.d_in);
  EXPECT_EQ(back.n_cameras, ds.n_cameras);
  const auto l0 = labels(ds), l1 = labels(back);
  for (std::size_t i = 0; i < ds.tracklets.size(); ++i) {
    const auto& a = ds.tracklets[i];
    const auto& b = back.tracklets[i];
    EXPECT_EQ(a.id, b.id);
    EXPECT_EQ(a.modality, b.modality);
    EXPECT_EQ(a.camera_id, b.camera_id);
    ASSERT_EQ(a.frames.rows(), b.frames.rows());
    ASSERT_EQ(a.frames.cols(), b.frames.cols());
    EXPECT_EQ(std::memcmp(a.frames.data(), b.frames.data(), sizeof(float) * a.frames.size()), 0);
    EXPECT_EQ(l0[i], l1[i]);
  }
}

TEST(Dataset, UnlabelledManifestLoadsWithoutIdentities) {
  const Dataset ds = generate_dataset(small_gen(4));
  const auto dir = testutil::scratch_dir("unlabelled");
  save_dataset(ds, dir);
  Json m = io::read_json(dir / "manifest.json");
  for (auto& t : m["tracklets"]) t.erase("gt_identity");
  io::write_json(dir / "manifest.json", m);
  const Dataset back = load_dataset(dir / "manifest.json");
  EXPECT_FALSE(has_labels(back));
}

TEST(Checkpoint, RoundTripPreservesEverything) {
  const Dataset ds = generate_dataset(small_gen(5));
  TrainConfig cfg;
  cfg.d = 8;
  cfg.d_ff = 12;
  cfg.n_tte_layers = 1;
  const EncoderParams params = random_encoder_params(EncoderShape::from(cfg, ds.d_in), 9);
  const PrototypeStore store = build_prototypes(params, ds, cfg);
  const auto path = testutil::scratch_dir("ckpt") / "checkpoint.hpt";
  save_checkpoint(params, store, 17, path, Json{{"note", "x"}});
  const Checkpoint ck = load_checkpoint(path);
  EXPECT_EQ(ck.epoch, 17);
  EXPECT_TRUE(ck.params == params);
  EXPECT_EQ(ck.config.at("note"), "x");
  for (Modality m : kModalities) {
    ASSERT_EQ(ck.store.cameras(m), store.cameras(m));
    for (const auto& r : store.refs(m)) {
      EXPECT_EQ(ck.store.at(r).tracklet, store.at(r).tracklet);
      EXPECT_TRUE((ck.store.at(r).vector.array() == store.at(r).vector.array()).all());
    }
  }
}

TEST(Checkpoint, TruncationIsDetected) {
  const Dataset ds = generate_dataset(small_gen(6));
  TrainConfig cfg;
  cfg.d = 4;
  cfg.d_ff = 4;
  cfg.n_tte_layers = 0;
  const EncoderParams params = encoder_init(EncoderShape::from(cfg, ds.d_in), 1);
  const auto dir = testutil::scratch_dir("ckpt_trunc");
  save_checkpoint(params, build_prototypes(params, ds, cfg), 2, dir / "c.hpt");
  const auto bytes = io::read_bytes(dir / "c.hpt");
  for (std::size_t keep : {std::size_t{4}, std::size_t{20}, bytes.size() / 2, bytes.size() - 1}) {
    std::ofstream out(dir / "t.hpt", std::ios::binary);
    out.write(reinterpret_cast<const char*>(bytes.data()), static_cast<std::streamsize>(keep));
    out.close();
    try {
      load_checkpoint(dir / "t.hpt");
      FAIL() << "truncated to " << keep << " bytes was accepted";
    } catch (const FormatError& e) {
      EXPECT_NE(std::string(e.what()).find("corrupt checkpoint"), std::string::npos);
    }
  }
}

TEST(Checkpoint, VersionMismatchIsRejected) {
  const Dataset ds = generate_dataset(small_gen(6));
  TrainConfig cfg;
  cfg.d = 4;
  cfg.d_ff = 4;
  cfg.n_tte_layers = 0;
  const EncoderParams params = encoder_init(EncoderShape::from(cfg, ds.d_in), 1);
  const auto dir = testutil::scratch_dir("ckpt_version");
  save_checkpoint(params, build_prototypes(params, ds, cfg), 2, dir / "c.hpt");
  auto bytes = io::read_bytes(dir / "c.hpt");
  std::string s(bytes.begin(), bytes.end());
  const auto pos = s.find("\"version\":1");
  ASSERT_NE(pos, std::string::npos);
  s[pos + 10] = '2';
  std::ofstream(dir / "v.hpt", std::ios::binary) << s;
  try {
    load_checkpoint(dir / "v.hpt");
    FAIL() << "version 2 accepted";
  } catch (const FormatError& e) {
    EXPECT_NE(std::string(e.what()).find("version"), std::string::npos);
  }
}

// Only the generator, the evaluator and the manifest reader may mint label
// access tokens; every other header must go through the evaluator.
TEST(LabelAudit, OnlyAllowedModulesMintLabelAccess) {
  const fs::path inc = fs::path(HITPRO_SOURCE_DIR) / "include" / "hitpro";
  const std::regex mint(R"((LabelWriter|LabelReader|ManifestLabels)::key\(\))");
  const std::regex raw(R"(gt_identity\()");
  const std::set<std::string> may_mint{"synthgen.hpp", "evaluator.hpp", "datamodel.hpp"};
  int headers = 0;
  for (const auto& entry : fs::directory_iterator(inc)) {
    ++headers;
    std::ifstream in(entry.path());
    const std::string text((std::istreambuf_iterator<char>(in)), std::istreambuf_iterator<char>());
    const std::string name = entry.path().filename().string();
    if (may_mint.count(name)) continue;
    EXPECT_FALSE(std::regex_search(text, mint)) << name << " mints a label token";
    EXPECT_FALSE(std::regex_search(text, raw)) << name << " reads gt_identity directly";
  }
  EXPECT_GT(headers, 5);
}
