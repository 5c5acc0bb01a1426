#pragma once

#include <cstdint>
#include <string>

#include "hitpro/common.hpp"
#include "hitpro/json_util.hpp"

namespace hitpro {

// Training hyperparameters. Defaults follow the published full-scale settings;
// desk-scale runs override dims, epochs and learning rate via config files.
struct TrainConfig {
  // prototyping / encoder
  int K = 4;
  int seq_len = 6;
  int d = 32;
  int d_ff = 64;
  int d_h = 0;  // 0 -> d
  int n_tte_layers = 2;
  bool normalize_embedding = true;
  bool normalize_prototypes = true;

  // mining
  double tau_w = 0.1;
  double rho_init = 0.99;
  double rho_final = 0.90;
  bool use_dts = true;
  double fixed_threshold = 0.5;
  bool use_swa = true;

  // objective
  double tau = 0.05;
  double alpha = 0.2;
  bool ema_renormalize = true;
  bool use_imcc = true;
  bool use_cm = true;
  bool use_hls = true;

  // schedule
  int e_intra = 5;
  int e_cross = 15;
  int e_total = 60;
  int iters_per_epoch = 300;

  // batch shape C cameras x P tracklets x S sub-tracklets
  int C = 2;
  int P = 2;
  int S = 2;

  // optimizer
  double lr = 0.00035;
  double sgd_momentum = 0.9;
  int lr_decay_every = 20;
  double lr_decay_factor = 0.1;

  std::uint64_t seed = 0;

  int hidden() const { return d_h > 0 ? d_h : d; }

  void validate() const {
    auto fail = [](const std::string& m) { throw ConfigError("invalid train config: " + m); };
    if (K < 1) fail("K must be >= 1");
    if (seq_len < 1) fail("seq_len must be >= 1");
    if (d < 1 || d_ff < 1 || d_h < 0) fail("dimensions must be >= 1");
    if (n_tte_layers < 0 || n_tte_layers > 2) fail("n_tte_layers must be in {0,1,2}");
    if (!(tau > 0) || !(tau_w > 0)) fail("temperatures must be > 0");
    if (!(rho_final > 0 && rho_final <= rho_init && rho_init <= 1)) fail("need 0 < rho_final <= rho_init <= 1");
    if (!(alpha > 0 && alpha <= 1)) fail("alpha must be in (0,1]");
    if (!(0 <= e_intra && e_intra <= e_cross && e_cross <= e_total)) fail("need 0 <= e_intra <= e_cross <= e_total");
    if (iters_per_epoch < 0) fail("iters_per_epoch must be >= 0");
    if (C < 1 || P < 1 || S < 1) fail("C, P, S must be >= 1");
    if (!(lr >= 0) || !(sgd_momentum >= 0)) fail("lr and momentum must be >= 0");
    if (lr_decay_every < 0 || !(lr_decay_factor > 0)) fail("bad learning-rate decay");
  }
};

inline Json to_json(const TrainConfig& c) {
  return Json{{"K", c.K},
              {"seq_len", c.seq_len},
              {"d", c.d},
              {"d_ff", c.d_ff},
              {"d_h", c.hidden()},
              {"n_tte_layers", c.n_tte_layers},
              {"normalize_embedding", c.normalize_embedding},
              {"normalize_prototypes", c.normalize_prototypes},
              {"tau_w", c.tau_w},
              {"rho_init", c.rho_init},
              {"rho_final", c.rho_final},
              {"use_dts", c.use_dts},
              {"fixed_threshold", c.fixed_threshold},
              {"use_swa", c.use_swa},
              {"tau", c.tau},
              {"alpha", c.alpha},
              {"ema_renormalize", c.ema_renormalize},
              {"use_imcc", c.use_imcc},
              {"use_cm", c.use_cm},
              {"use_hls", c.use_hls},
              {"e_intra", c.e_intra},
              {"e_cross", c.e_cross},
              {"e_total", c.e_total},
              {"iters_per_epoch", c.iters_per_epoch},
              {"C", c.C},
              {"P", c.P},
              {"S", c.S},
              {"lr", c.lr},
              {"sgd_momentum", c.sgd_momentum},
              {"lr_decay_every", c.lr_decay_every},
              {"lr_decay_factor", c.lr_decay_factor},
              {"seed", c.seed}};
}

// Reads known keys from `fields`; the caller decides whether leftovers are an error.
inline void read_fields(JsonFields& f, TrainConfig& c) {
  f.get("K", c.K);
  f.get("seq_len", c.seq_len);
  f.get("d", c.d);
  f.get("d_ff", c.d_ff);
  f.get("d_h", c.d_h);
  f.get("n_tte_layers", c.n_tte_layers);
  f.get("normalize_embedding", c.normalize_embedding);
  f.get("normalize_prototypes", c.normalize_prototypes);
  f.get("tau_w", c.tau_w);
  f.get("rho_init", c.rho_init);
  f.get("rho_final", c.rho_final);
  f.get("use_dts", c.use_dts);
  f.get("fixed_threshold", c.fixed_threshold);
  f.get("use_swa", c.use_swa);
  f.get("tau", c.tau);
  f.get("alpha", c.alpha);
  f.get("ema_renormalize", c.ema_renormalize);
  f.get("use_imcc", c.use_imcc);
  f.get("use_cm", c.use_cm);
  f.get("use_hls", c.use_hls);
  f.get("e_intra", c.e_intra);
  f.get("e_cross", c.e_cross);
  f.get("e_total", c.e_total);
  f.get("iters_per_epoch", c.iters_per_epoch);
  f.get("C", c.C);
  f.get("P", c.P);
  f.get("S", c.S);
  f.get("lr", c.lr);
  f.get("sgd_momentum", c.sgd_momentum);
  f.get("lr_decay_every", c.lr_decay_every);
  f.get("lr_decay_factor", c.lr_decay_factor);
  f.get("seed", c.seed);
}

inline TrainConfig train_config_from_json(const Json& j) {
  TrainConfig c;
  JsonFields f(j, "train config");
  read_fields(f, c);
  f.reject_unknown();
  c.validate();
  return c;
}

}  // namespace hitpro
