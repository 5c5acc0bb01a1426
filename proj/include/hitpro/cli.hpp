#pragma once

#include <CLI11.hpp>

#include <cstdlib>
#include <filesystem>
#include <iostream>
#include <optional>
#include <random>
#include <string>
#include <vector>

#include "hitpro/hitpro.hpp"

namespace hitpro {

// Everything a run can be configured with: generator and trainer settings in
// one flat JSON object (a shared "seed"), plus optional paths.
struct RunConfig {
  GenConfig gen;
  TrainConfig train;
  std::string data;
  std::string out;
  std::string checkpoint;
};

inline RunConfig run_config_from_json(const Json& j) {
  RunConfig rc;
  JsonFields f(j, "run config");
  read_fields(f, rc.gen);
  read_fields(f, rc.train);
  f.get("data", rc.data);
  f.get("out", rc.out);
  f.get("checkpoint", rc.checkpoint);
  f.reject_unknown();
  return rc;
}

inline Json to_json(const RunConfig& rc) {
  Json j = to_json(rc.gen);
  const Json train = to_json(rc.train);
  for (auto& [k, v] : train.items()) j[k] = v;
  j["data"] = rc.data;
  j["out"] = rc.out;
  j["checkpoint"] = rc.checkpoint;
  return j;
}

namespace cli {

namespace fs = std::filesystem;

struct Options {
  std::string config;
  std::optional<std::uint64_t> seed;
  std::optional<int> threads;
  std::string data, out, checkpoint;
  bool no_dts = false, no_swa = false, no_hls = false, no_imcc = false, no_cm = false;
  std::optional<double> fixed_threshold;
  std::optional<int> tte_layers;
  std::optional<int> epoch;
  int pairs = 2000;
};

inline int resolve_threads(const Options& o) {
  if (o.threads) return *o.threads;
  if (const char* env = std::getenv("HITPRO_THREADS")) {
    try {
      return std::stoi(env);
    } catch (const std::exception&) {
      throw ConfigError(std::string("HITPRO_THREADS is not an integer: '") + env + "'");
    }
  }
  return 0;
}

// Config file (if any) with the command-line flags applied on top.
inline RunConfig resolve(const Options& o, const Json& base = Json::object()) {
  Json j = base;
  if (!o.config.empty()) {
    const Json file = io::read_json(o.config);
    if (!file.is_object()) throw ConfigError("config file must hold a JSON object");
    for (auto& [k, v] : file.items()) j[k] = v;
  }
  RunConfig rc = run_config_from_json(j);
  if (o.seed) rc.gen.seed = rc.train.seed = *o.seed;
  if (!o.data.empty()) rc.data = o.data;
  if (!o.out.empty()) rc.out = o.out;
  if (!o.checkpoint.empty()) rc.checkpoint = o.checkpoint;
  if (o.no_dts) rc.train.use_dts = false;
  if (o.fixed_threshold) {
    rc.train.use_dts = false;
    rc.train.fixed_threshold = *o.fixed_threshold;
  }
  if (o.no_swa) rc.train.use_swa = false;
  if (o.no_hls) rc.train.use_hls = false;
  if (o.no_imcc) rc.train.use_imcc = false;
  if (o.no_cm) rc.train.use_cm = false;
  if (o.tte_layers) rc.train.n_tte_layers = *o.tte_layers;
  rc.train.validate();
  return rc;
}

// Thread count is deliberately absent: outputs do not depend on it.
inline void write_effective_config(const fs::path& dir, const RunConfig& rc, const std::string& command) {
  fs::create_directories(dir);
  Json j = to_json(rc);
  j["command"] = command;
  io::write_json(dir / "effective_config.json", j);
}

inline fs::path manifest_of(const std::string& data) {
  if (data.empty()) throw ConfigError("--data is required");
  const fs::path p(data);
  return fs::is_directory(p) ? p / "manifest.json" : p;
}

inline fs::path parent_or_cwd(const fs::path& p) { return p.has_parent_path() ? p.parent_path() : fs::path("."); }

inline int cmd_gen(const Options& o) {
  const RunConfig rc = resolve(o);
  rc.gen.validate();
  if (rc.out.empty()) throw ConfigError("--out is required");
  const Dataset ds = generate_dataset(rc.gen);
  save_dataset(ds, rc.out);
  write_effective_config(rc.out, rc, "gen");
  std::cout << "wrote " << ds.tracklets.size() << " tracklets to " << rc.out << "\n";
  return 0;
}

inline int cmd_train(const Options& o) {
  const RunConfig rc = resolve(o);
  if (rc.out.empty()) throw ConfigError("--out is required");
  const Dataset ds = load_dataset(manifest_of(rc.data));
  fs::create_directories(rc.out);
  write_effective_config(rc.out, rc, "train");
  TrainHooks hooks;
  hooks.on_epoch_end = [](int e, const EncoderParams&, const EpochMetrics& m) {
    const auto mean = m.mean();
    std::cout << "epoch " << e << "  l_ic " << mean.l_ic << "  l_imcc " << mean.l_imcc << "  l_cm " << mean.l_cm << "\n";
  };
  const TrainResult r = train(ds, rc.train, hooks);
  save_checkpoint(r.params, r.store, r.epochs_completed, fs::path(rc.out) / "checkpoint.hpt", to_json(rc.train));
  io::write_json(fs::path(rc.out) / "metrics.json", to_json(r.metrics));
  return 0;
}

// Train config stored in a checkpoint header, if any.
inline Json checkpoint_train_config(const Checkpoint& ck) {
  return ck.config.is_object() ? ck.config : Json::object();
}

inline Json mining_report(const MiningResult& mr, const PrototypeStore& store, const Dataset& ds) {
  auto id_of = [&](const PrototypeRef& r) { return ds.tracklets.at(store.at(r).tracklet).id; };
  Json sources = Json::array();
  std::size_t k = 0;
  for (const auto& cam : mr.family.sets)
    for (const auto& set : cam) {
      const auto& d = mr.diagnostics.at(k++);
      Json cands = Json::array(), acc = Json::array();
      for (const auto& c : d.candidates) cands.push_back({{"tracklet_id", id_of({mr.family.kind == PositiveKind::INTRA_MODAL ? mr.family.source : other(mr.family.source), c.camera, c.index})}, {"camera", c.camera}, {"sim", c.sim}});
      for (const auto& e : set.entries) acc.push_back({{"tracklet_id", id_of(e.target)}, {"sim", e.sim}, {"weight", e.weight}});
      sources.push_back({{"tracklet_id", id_of(set.source)}, {"s_max", d.s_max}, {"h", d.threshold}, {"candidates", cands}, {"accepted", acc}});
    }
  Json j{{"source_modality", to_string(mr.family.source)},
         {"kind", mr.family.kind == PositiveKind::INTRA_MODAL ? "INTRA_MODAL" : "CROSS_MODAL"},
         {"mean_positive_set_size", mr.family.mean_size()},
         {"sources", sources}};
  if (has_labels(ds)) j["quality"] = to_json(mining_quality(mr.family, store, ds));
  return j;
}

inline int cmd_mine(const Options& o) {
  if (o.checkpoint.empty()) throw ConfigError("--checkpoint is required");
  const Checkpoint ck = load_checkpoint(o.checkpoint);
  const RunConfig rc = resolve(o, checkpoint_train_config(ck));
  if (rc.out.empty()) throw ConfigError("--out is required");
  const Dataset ds = load_dataset(manifest_of(rc.data));
  for (Modality m : kModalities)
    for (int c = 0; c < ck.store.cameras(m); ++c)
      for (const auto& p : ck.store.camera(m, c))
        if (p.tracklet < 0 || p.tracklet >= static_cast<int>(ds.tracklets.size()))
          throw FormatError("checkpoint store does not match the dataset");
  const int epoch = std::clamp(o.epoch.value_or(ck.epoch), 0, rc.train.e_total);
  Json families = Json::array();
  for (Modality m : kModalities)
    for (PositiveKind kind : {PositiveKind::INTRA_MODAL, PositiveKind::CROSS_MODAL})
      families.push_back(mining_report(mine_with_diagnostics(ck.store, m, kind, epoch, rc.train), ck.store, ds));
  write_effective_config(parent_or_cwd(rc.out), rc, "mine");
  io::write_json(rc.out, Json{{"epoch", epoch}, {"rho", rho_schedule(epoch, rc.train)}, {"families", families}});
  return 0;
}

inline int cmd_eval(const Options& o) {
  if (o.checkpoint.empty()) throw ConfigError("--checkpoint is required");
  const Checkpoint ck = load_checkpoint(o.checkpoint);
  const RunConfig rc = resolve(o, checkpoint_train_config(ck));
  if (rc.out.empty()) throw ConfigError("--out is required");
  const Dataset ds = load_dataset(manifest_of(rc.data));
  if (ck.params.shape.d_in != ds.d_in) throw ConfigError("checkpoint and dataset disagree on d_in");
  const auto emb = embed_dataset(ck.params, ds, rc.train);

  Json report;
  report["retrieval"] = Json::array();
  for (Modality q : {Modality::IR, Modality::VIS}) {
    const auto r = cross_modal_retrieval(emb, ds, q);
    report["retrieval"].push_back(to_json(r));
    std::cout << r.direction << "  R1 " << r.rank(1) << "  R5 " << r.rank(5) << "  R10 " << r.rank(10) << "  mAP " << r.map
              << "\n";
  }
  const auto ids = labels(ds);
  std::vector<int> gt;
  for (const auto& l : ids) gt.push_back(*l);
  std::mt19937_64 rng(mix_seed(rc.train.seed, 0xD157));
  const auto dist = distance_distribution(emb, gt, o.pairs, rng);
  report["distance_distribution"] = {{"bin_width", dist.bin_width},
                                     {"positive_hist", dist.positive_hist},
                                     {"negative_hist", dist.negative_hist},
                                     {"positive", dist.positive},
                                     {"negative", dist.negative}};
  Json embeddings = Json::array();
  for (std::size_t i = 0; i < ds.tracklets.size(); ++i) {
    const auto& t = ds.tracklets[i];
    embeddings.push_back({{"tracklet_id", t.id},
                          {"modality", to_string(t.modality)},
                          {"camera_id", t.camera_id},
                          {"gt_identity", gt[i]},
                          {"embedding", std::vector<double>(emb[i].data(), emb[i].data() + emb[i].size())}});
  }
  report["embeddings"] = embeddings;
  write_effective_config(parent_or_cwd(rc.out), rc, "eval");
  io::write_json(rc.out, report);
  return 0;
}

inline int cmd_gradcheck(const Options& o) {
  const RunConfig rc = resolve(o);
  const std::uint64_t seed = o.seed.value_or(rc.train.seed);
  std::vector<int> layers{0, 1, 2};
  if (o.tte_layers) layers = {*o.tte_layers};
  double worst = 0.0;
  for (int n : layers) {
    const EncoderShape shape{4, 8, 16, 8, n, 3, true};
    const auto report = encoder_gradcheck(shape, seed);
    std::cout << "tte_layers=" << n << "  max relative error " << report.max_rel_error << "\n";
    for (const auto& t : report.tensors) std::cout << "    " << t.name << "  " << t.rel_error << "\n";
    worst = std::max(worst, report.max_rel_error);
  }
  std::cout << "max relative error " << worst << "\n";
  if (!rc.out.empty()) write_effective_config(rc.out, rc, "gradcheck");
  return worst < 1e-4 ? 0 : 2;
}

inline void add_common(CLI::App* sub, Options& o) {
  sub->add_option("--config", o.config, "JSON run config");
  sub->add_option("--seed", o.seed, "Seed overriding the config");
  sub->add_option("--threads", o.threads, "Worker threads (default: HITPRO_THREADS or all cores)");
}

inline void add_ablation(CLI::App* sub, Options& o) {
  sub->add_flag("--no-dts", o.no_dts, "Fixed threshold instead of the dynamic one");
  sub->add_option("--fixed-threshold", o.fixed_threshold, "Fixed mining threshold (implies --no-dts)");
  sub->add_flag("--no-swa", o.no_swa, "Uniform weights over accepted positives");
  sub->add_flag("--no-hls", o.no_hls, "Activate all loss terms from epoch 0");
  sub->add_flag("--no-imcc", o.no_imcc, "Disable the intra-modality cross-camera loss");
  sub->add_flag("--no-cm", o.no_cm, "Disable the cross-modality loss");
  sub->add_option("--tte-layers", o.tte_layers, "Transformer layers in the encoder (0-2)");
}

}  // namespace cli

// Entry point of the `hitpro` executable. Exit codes: 0 ok, 1 usage, 2 runtime failure.
inline int run_cli(int argc, const char* const* argv) {
  cli::Options o;
  CLI::App app{"hitpro: unsupervised cross-modal tracklet re-identification"};
  app.require_subcommand(1);

  auto* gen = app.add_subcommand("gen", "Generate a synthetic dataset");
  cli::add_common(gen, o);
  gen->add_option("--out", o.out, "Output dataset directory");

  auto* tr = app.add_subcommand("train", "Train an encoder");
  cli::add_common(tr, o);
  cli::add_ablation(tr, o);
  tr->add_option("--data", o.data, "Dataset directory or manifest");
  tr->add_option("--out", o.out, "Output directory");

  auto* mine = app.add_subcommand("mine", "Dump positive mining diagnostics for a checkpoint");
  cli::add_common(mine, o);
  cli::add_ablation(mine, o);
  mine->add_option("--checkpoint", o.checkpoint, "checkpoint.hpt")->required();
  mine->add_option("--data", o.data, "Dataset directory or manifest")->required();
  mine->add_option("--out", o.out, "Output JSON file")->required();
  mine->add_option("--epoch", o.epoch, "Epoch used for the threshold schedule");

  auto* ev = app.add_subcommand("eval", "Evaluate retrieval for a checkpoint");
  cli::add_common(ev, o);
  ev->add_option("--checkpoint", o.checkpoint, "checkpoint.hpt")->required();
  ev->add_option("--data", o.data, "Dataset directory or manifest")->required();
  ev->add_option("--out", o.out, "Output report JSON")->required();
  ev->add_option("--pairs", o.pairs, "Sampled pairs per kind for the distance distribution");

  auto* gc = app.add_subcommand("gradcheck", "Finite-difference check of the encoder gradients");
  cli::add_common(gc, o);
  gc->add_option("--tte-layers", o.tte_layers, "Check only this layer count");
  gc->add_option("--out", o.out, "Directory for effective_config.json");

  try {
    app.parse(argc, argv);
  } catch (const CLI::CallForHelp& e) {
    std::cout << app.help();
    return 0;
  } catch (const CLI::ParseError& e) {
    std::cerr << "error: " << e.what() << "\n\n" << app.help();
    return 1;
  }

  try {
    set_threads(cli::resolve_threads(o));
    if (*gen) return cli::cmd_gen(o);
    if (*tr) return cli::cmd_train(o);
    if (*mine) return cli::cmd_mine(o);
    if (*ev) return cli::cmd_eval(o);
    if (*gc) return cli::cmd_gradcheck(o);
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 2;
  }
  return 1;
}

}  // namespace hitpro
