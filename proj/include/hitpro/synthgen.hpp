#pragma once

#include <cstdio>
#include <optional>
#include <random>
#include <string>
#include <vector>

#include "hitpro/datamodel.hpp"
#include "hitpro/json_util.hpp"

namespace hitpro {

// Parameters of the synthetic cross-modal tracklet generator.
//
// Frame t of a tracklet of identity z in camera c of modality m is
//   A_m (z + o_c + w_t) + eps_t
// with A_m = (1 - sigma_mod) I_pad + sigma_mod Q_m (Q_m random orthonormal
// columns), o_c ~ N(0, sigma_cam^2), w_t a reflected Gaussian random walk and
// eps_t ~ N(0, sigma_frame^2).
struct GenConfig {
  int n_identities = 50;
  int cams_vis = 2;
  int cams_ir = 2;
  int d_in = 32;
  int d_latent = 8;
  int tracklets_per_identity_per_camera = 1;
  int frame_len_min = 12;
  int frame_len_max = 24;
  double sigma_cam = 0.3;
  double sigma_mod = 0.5;
  double sigma_frame = 0.1;
  double sigma_walk = 0.1;
  bool identity_maps = false;  // forces A_VIS = A_IR = I_pad
  std::uint64_t seed = 0;
  // Seed of the shared "world" (modality maps, camera offsets). Defaults to
  // `seed`; give train and test splits the same world_seed and different seeds.
  std::optional<std::uint64_t> world_seed;

  std::uint64_t effective_world_seed() const { return world_seed.value_or(seed); }

  void validate() const {
    auto fail = [](const std::string& m) { throw ConfigError("invalid gen config: " + m); };
    if (n_identities < 0) fail("n_identities must be >= 0");
    if (cams_vis < 1 || cams_ir < 1) fail("each modality needs >= 1 camera");
    if (d_in < 1 || d_latent < 1) fail("dimensions must be >= 1");
    if (d_latent > d_in) fail("d_latent must be <= d_in");
    if (tracklets_per_identity_per_camera < 0) fail("tracklets_per_identity_per_camera must be >= 0");
    if (frame_len_min < 1 || frame_len_max < frame_len_min) fail("need 1 <= frame_len_min <= frame_len_max");
    if (!(sigma_cam >= 0 && sigma_mod >= 0 && sigma_frame >= 0 && sigma_walk >= 0)) fail("scales must be >= 0");
  }
};

inline Json to_json(const GenConfig& c) {
  Json j{{"n_identities", c.n_identities},
         {"cams_vis", c.cams_vis},
         {"cams_ir", c.cams_ir},
         {"d_in", c.d_in},
         {"d_latent", c.d_latent},
         {"tracklets_per_identity_per_camera", c.tracklets_per_identity_per_camera},
         {"frame_len_min", c.frame_len_min},
         {"frame_len_max", c.frame_len_max},
         {"sigma_cam", c.sigma_cam},
         {"sigma_mod", c.sigma_mod},
         {"sigma_frame", c.sigma_frame},
         {"sigma_walk", c.sigma_walk},
         {"identity_maps", c.identity_maps},
         {"seed", c.seed},
         {"world_seed", c.effective_world_seed()}};
  return j;
}

inline void read_fields(JsonFields& f, GenConfig& c) {
  f.get("n_identities", c.n_identities);
  f.get("cams_vis", c.cams_vis);
  f.get("cams_ir", c.cams_ir);
  f.get("d_in", c.d_in);
  f.get("d_latent", c.d_latent);
  f.get("tracklets_per_identity_per_camera", c.tracklets_per_identity_per_camera);
  f.get("frame_len_min", c.frame_len_min);
  f.get("frame_len_max", c.frame_len_max);
  f.get("sigma_cam", c.sigma_cam);
  f.get("sigma_mod", c.sigma_mod);
  f.get("sigma_frame", c.sigma_frame);
  f.get("sigma_walk", c.sigma_walk);
  f.get("identity_maps", c.identity_maps);
  f.get("seed", c.seed);
  if (f.has("world_seed")) {
    std::uint64_t ws = 0;
    f.get("world_seed", ws);
    c.world_seed = ws;
  }
}

inline GenConfig gen_config_from_json(const Json& j) {
  GenConfig c;
  JsonFields f(j, "gen config");
  read_fields(f, c);
  f.reject_unknown();
  c.validate();
  return c;
}

namespace synth {

struct LabelWriter {
  static LabelAccess key() { return {}; }
};

inline Mat gaussian(int rows, int cols, double sigma, std::mt19937_64& rng) {
  std::normal_distribution<double> n(0.0, 1.0);
  Mat m(rows, cols);
  for (int r = 0; r < rows; ++r)
    for (int c = 0; c < cols; ++c) m(r, c) = sigma * n(rng);
  return m;
}

// d_in x d_latent matrix with orthonormal columns.
inline Mat random_orthonormal(int d_in, int d_latent, std::mt19937_64& rng) {
  const Mat g = gaussian(d_in, d_latent, 1.0, rng);
  Eigen::HouseholderQR<Mat> qr(g);
  Mat q = qr.householderQ() * Mat::Identity(d_in, d_latent);
  // Fix column signs so the factorization is unique.
  const Mat r = qr.matrixQR();
  for (int c = 0; c < d_latent; ++c)
    if (r(c, c) < 0) q.col(c) *= -1.0;
  return q;
}

// Per-modality linear maps from latent to feature space.
inline std::array<Mat, 2> modality_maps(const GenConfig& cfg, std::mt19937_64& world) {
  const Mat pad = Mat::Identity(cfg.d_in, cfg.d_latent);
  std::array<Mat, 2> maps;
  for (Modality m : kModalities) {
    const Mat q = random_orthonormal(cfg.d_in, cfg.d_latent, world);
    maps[index_of(m)] = cfg.identity_maps ? pad : Mat((1.0 - cfg.sigma_mod) * pad + cfg.sigma_mod * q);
  }
  return maps;
}

inline double reflect(double x, double bound) {
  if (bound <= 0.0) return 0.0;
  const double period = 4.0 * bound;
  double y = std::fmod(x + bound, period);
  if (y < 0) y += period;
  return y <= 2.0 * bound ? y - bound : 3.0 * bound - y;
}

}  // namespace synth

inline Dataset generate_dataset(const GenConfig& cfg) {
  cfg.validate();
  std::mt19937_64 world(mix_seed(cfg.effective_world_seed(), 1));
  const auto maps = synth::modality_maps(cfg, world);
  std::array<std::vector<Vec>, 2> offsets;
  for (Modality m : kModalities) {
    const int n_cams = m == Modality::VIS ? cfg.cams_vis : cfg.cams_ir;
    for (int c = 0; c < n_cams; ++c) offsets[index_of(m)].push_back(synth::gaussian(cfg.d_latent, 1, cfg.sigma_cam, world).col(0));
  }

  std::mt19937_64 ids(mix_seed(cfg.seed, 2));
  std::vector<Vec> latent;
  for (int i = 0; i < cfg.n_identities; ++i) latent.push_back(synth::gaussian(cfg.d_latent, 1, 1.0, ids).col(0));

  struct Plan {
    Modality modality;
    int camera;
    int identity;
  };
  std::vector<Plan> plan;
  for (Modality m : kModalities) {
    const int n_cams = m == Modality::VIS ? cfg.cams_vis : cfg.cams_ir;
    for (int c = 0; c < n_cams; ++c) {
      std::vector<Plan> cam;
      for (int id = 0; id < cfg.n_identities; ++id)
        for (int r = 0; r < cfg.tracklets_per_identity_per_camera; ++r) cam.push_back({m, c, id});
      std::shuffle(cam.begin(), cam.end(), ids);  // listing order carries no identity information
      plan.insert(plan.end(), cam.begin(), cam.end());
    }
  }

  Dataset ds;
  ds.d_in = cfg.d_in;
  ds.n_cameras = {cfg.cams_vis, cfg.cams_ir};
  ds.tracklets.resize(plan.size());
  std::array<int, 2> counters{0, 0};
  std::vector<std::string> names(plan.size());
  for (std::size_t i = 0; i < plan.size(); ++i) {
    char buf[64];
    std::snprintf(buf, sizeof buf, "%s%d_%04d", plan[i].modality == Modality::VIS ? "vis" : "ir", plan[i].camera,
                  counters[index_of(plan[i].modality)]++);
    names[i] = buf;
  }

  const double bound = 3.0 * cfg.sigma_walk;
  parallel_for(plan.size(), [&](std::size_t i) {
    const Plan& p = plan[i];
    std::mt19937_64 rng(mix_seed(cfg.seed, 1000 + i));
    std::uniform_int_distribution<int> len(cfg.frame_len_min, cfg.frame_len_max);
    const int L = len(rng);
    const Vec base = latent[p.identity] + offsets[index_of(p.modality)][p.camera];
    const Mat& A = maps[index_of(p.modality)];
    std::normal_distribution<double> n(0.0, 1.0);
    Vec walk = Vec::Zero(cfg.d_latent);
    Tracklet t;
    t.id = names[i];
    t.modality = p.modality;
    t.camera_id = p.camera;
    t.frames.resize(L, cfg.d_in);
    for (int f = 0; f < L; ++f) {
      if (f > 0)
        for (int k = 0; k < cfg.d_latent; ++k) walk(k) = synth::reflect(walk(k) + cfg.sigma_walk * n(rng), bound);
      Vec x = A * (base + walk);
      for (int k = 0; k < cfg.d_in; ++k) x(k) += cfg.sigma_frame * n(rng);
      t.frames.row(f) = x.cast<float>().transpose();
    }
    t.set_gt_identity(synth::LabelWriter::key(), p.identity);
    ds.tracklets[i] = std::move(t);
  });
  return ds;
}

}  // namespace hitpro
