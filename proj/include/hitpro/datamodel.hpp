#pragma once

#include <array>
#include <cstring>
#include <filesystem>
#include <fstream>
#include <map>
#include <optional>
#include <set>
#include <span>
#include <string>
#include <vector>

#include "hitpro/common.hpp"
#include "hitpro/json_util.hpp"

namespace hitpro {

enum class Modality : int { VIS = 0, IR = 1 };

inline constexpr std::array<Modality, 2> kModalities{Modality::VIS, Modality::IR};

inline constexpr int index_of(Modality m) { return static_cast<int>(m); }
inline constexpr Modality other(Modality m) { return m == Modality::VIS ? Modality::IR : Modality::VIS; }

inline std::string to_string(Modality m) { return m == Modality::VIS ? "VIS" : "IR"; }

inline Modality modality_from_string(const std::string& s) {
  if (s == "VIS") return Modality::VIS;
  if (s == "IR") return Modality::IR;
  throw FormatError("unknown modality '" + s + "'");
}

namespace synth {
struct LabelWriter;
}
namespace eval {
struct LabelReader;
}
namespace io {
struct ManifestLabels;
}

// Capability token for ground-truth identity access. Only the synthetic
// generator, the evaluator and manifest I/O can mint one, so training code
// cannot read labels without the compiler noticing.
class LabelAccess {
  LabelAccess() = default;
  friend struct synth::LabelWriter;
  friend struct eval::LabelReader;
  friend struct io::ManifestLabels;
};

struct Tracklet {
  std::string id;
  Modality modality = Modality::VIS;
  int camera_id = 0;
  FrameMatrix frames;  // L x D_in

  Eigen::Index length() const { return frames.rows(); }

  std::optional<int> gt_identity(LabelAccess) const { return gt_identity_; }
  void set_gt_identity(LabelAccess, std::optional<int> id) { gt_identity_ = id; }

 private:
  std::optional<int> gt_identity_;
};

// Half-open frame range [start, end) of sub-tracklet k within its parent.
struct SubTracklet {
  int parent = 0;  // index into Dataset::tracklets
  int k = 0;
  int start = 0;
  int end = 0;

  int size() const { return end - start; }
  bool operator==(const SubTracklet&) const = default;
};

struct Dataset {
  int d_in = 0;
  std::array<int, 2> n_cameras{0, 0};
  std::vector<Tracklet> tracklets;

  int cameras(Modality m) const { return n_cameras[index_of(m)]; }

  // Tracklet indices of (modality, camera) in dataset order.
  std::vector<int> camera_members(Modality m, int camera) const {
    std::vector<int> out;
    for (int i = 0; i < static_cast<int>(tracklets.size()); ++i)
      if (tracklets[i].modality == m && tracklets[i].camera_id == camera) out.push_back(i);
    return out;
  }

  std::size_t count(Modality m) const {
    return static_cast<std::size_t>(std::count_if(tracklets.begin(), tracklets.end(),
                                                   [m](const Tracklet& t) { return t.modality == m; }));
  }

  // Checks the structural invariants; throws FormatError on the first violation.
  void validate() const {
    if (d_in < 1 && !tracklets.empty()) throw FormatError("d_in must be >= 1");
    std::set<std::string> ids;
    for (const auto& t : tracklets) {
      if (!ids.insert(t.id).second) throw FormatError("duplicate tracklet_id '" + t.id + "'");
      if (t.frames.rows() < 1) throw FormatError("tracklet '" + t.id + "' has no frames");
      if (t.frames.cols() != d_in) throw FormatError("tracklet '" + t.id + "' feature width != d_in");
      if (t.camera_id < 0 || t.camera_id >= cameras(t.modality))
        throw FormatError("tracklet '" + t.id + "' camera_id out of range");
    }
  }
};

struct PrototypeRef {
  Modality modality = Modality::VIS;
  int camera = 0;
  int index = 0;  // position within the camera's prototype list

  bool operator==(const PrototypeRef&) const = default;
  auto operator<=>(const PrototypeRef&) const = default;
};

struct Prototype {
  int tracklet = 0;  // index into Dataset::tracklets
  Modality modality = Modality::VIS;
  int camera_id = 0;
  Vec vector;  // unit norm
};

// Per-(modality, camera) ordered prototype lists. Order within a camera follows
// Dataset::camera_members, so it is stable for the lifetime of a dataset.
class PrototypeStore {
 public:
  PrototypeStore() = default;
  explicit PrototypeStore(std::array<int, 2> n_cameras) {
    for (Modality m : kModalities) cams_[index_of(m)].resize(n_cameras[index_of(m)]);
  }

  int cameras(Modality m) const { return static_cast<int>(cams_[index_of(m)].size()); }
  std::vector<Prototype>& camera(Modality m, int c) { return cams_[index_of(m)].at(c); }
  const std::vector<Prototype>& camera(Modality m, int c) const { return cams_[index_of(m)].at(c); }

  Prototype& at(const PrototypeRef& r) { return camera(r.modality, r.camera).at(r.index); }
  const Prototype& at(const PrototypeRef& r) const { return camera(r.modality, r.camera).at(r.index); }

  bool contains(const PrototypeRef& r) const {
    return r.camera >= 0 && r.camera < cameras(r.modality) && r.index >= 0 &&
           r.index < static_cast<int>(camera(r.modality, r.camera).size());
  }

  std::size_t size(Modality m) const {
    std::size_t n = 0;
    for (const auto& c : cams_[index_of(m)]) n += c.size();
    return n;
  }

  // Reference of every prototype of modality m, camera-major.
  std::vector<PrototypeRef> refs(Modality m) const {
    std::vector<PrototypeRef> out;
    for (int c = 0; c < cameras(m); ++c)
      for (int i = 0; i < static_cast<int>(camera(m, c).size()); ++i) out.push_back({m, c, i});
    return out;
  }

  // Maps dataset tracklet index -> prototype reference.
  std::map<int, PrototypeRef> tracklet_index() const {
    std::map<int, PrototypeRef> out;
    for (Modality m : kModalities)
      for (const auto& r : refs(m)) out[at(r).tracklet] = r;
    return out;
  }

 private:
  std::array<std::vector<std::vector<Prototype>>, 2> cams_;
};

enum class PositiveKind { INTRA_MODAL, CROSS_MODAL };

struct PositiveEntry {
  PrototypeRef target;
  double sim = 0.0;
  double weight = 0.0;
};

struct WeightedPositiveSet {
  PrototypeRef source;
  PositiveKind kind = PositiveKind::INTRA_MODAL;
  std::vector<PositiveEntry> entries;
};

// All positive sets mined from one source modality in one direction,
// indexed [camera][prototype index] like the store.
struct PositiveFamily {
  Modality source = Modality::VIS;
  PositiveKind kind = PositiveKind::INTRA_MODAL;
  std::vector<std::vector<WeightedPositiveSet>> sets;

  const WeightedPositiveSet& at(const PrototypeRef& r) const { return sets.at(r.camera).at(r.index); }

  double mean_size() const {
    std::size_t n = 0, total = 0;
    for (const auto& cam : sets)
      for (const auto& s : cam) {
        ++n;
        total += s.entries.size();
      }
    return n == 0 ? 0.0 : static_cast<double>(total) / static_cast<double>(n);
  }
};

// Four families per epoch: intra VIS, intra IR, VIS->IR, IR->VIS.
struct PositiveSets {
  std::array<PositiveFamily, 2> intra;
  std::array<PositiveFamily, 2> cross;

  const PositiveFamily& intra_of(Modality m) const { return intra[index_of(m)]; }
  const PositiveFamily& cross_of(Modality m) const { return cross[index_of(m)]; }
};

namespace io {

namespace fs = std::filesystem;

inline void put_le32(std::ostream& os, std::uint32_t v) {
  const char b[4] = {static_cast<char>(v & 0xFF), static_cast<char>((v >> 8) & 0xFF),
                     static_cast<char>((v >> 16) & 0xFF), static_cast<char>((v >> 24) & 0xFF)};
  os.write(b, 4);
}

inline std::uint32_t get_le32(const unsigned char* p) {
  return static_cast<std::uint32_t>(p[0]) | (static_cast<std::uint32_t>(p[1]) << 8) |
         (static_cast<std::uint32_t>(p[2]) << 16) | (static_cast<std::uint32_t>(p[3]) << 24);
}

inline void write_f32(std::ostream& os, float f) { put_le32(os, std::bit_cast<std::uint32_t>(f)); }

inline void write_f64(std::ostream& os, double d) {
  const auto u = std::bit_cast<std::uint64_t>(d);
  put_le32(os, static_cast<std::uint32_t>(u & 0xFFFFFFFFULL));
  put_le32(os, static_cast<std::uint32_t>(u >> 32));
}

inline float read_f32(const unsigned char* p) { return std::bit_cast<float>(get_le32(p)); }

inline double read_f64(const unsigned char* p) {
  const std::uint64_t lo = get_le32(p), hi = get_le32(p + 4);
  return std::bit_cast<double>(lo | (hi << 32));
}

inline std::vector<unsigned char> read_bytes(const fs::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw IoError("cannot open '" + path.string() + "'");
  return std::vector<unsigned char>(std::istreambuf_iterator<char>(in), {});
}

inline Json read_json(const fs::path& path) {
  std::ifstream in(path);
  if (!in) throw IoError("cannot open '" + path.string() + "'");
  try {
    return Json::parse(in);
  } catch (const Json::parse_error& e) {
    throw FormatError("malformed JSON in '" + path.string() + "': " + e.what());
  }
}

inline void write_json(const fs::path& path, const Json& j) {
  std::ofstream out(path);
  if (!out) throw IoError("cannot write '" + path.string() + "'");
  out << j.dump(2) << '\n';
  if (!out) throw IoError("write failed for '" + path.string() + "'");
}

// Row-major little-endian float32 payload; size must be exactly 4*L*D_in.
inline FrameMatrix read_features(const fs::path& path, int n_frames, int d_in) {
  const auto bytes = read_bytes(path);
  const std::size_t expected = 4ull * static_cast<std::size_t>(n_frames) * static_cast<std::size_t>(d_in);
  if (bytes.size() != expected)
    throw FormatError("dimension mismatch in '" + path.string() + "': expected " + std::to_string(n_frames) + "x" +
                      std::to_string(d_in) + " floats (" + std::to_string(expected) + " bytes), found " +
                      std::to_string(bytes.size()) + " bytes");
  FrameMatrix m(n_frames, d_in);
  for (std::size_t i = 0; i < expected / 4; ++i) m.data()[i] = read_f32(bytes.data() + 4 * i);
  return m;
}

inline void write_features(const fs::path& path, const FrameMatrix& m) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw IoError("cannot write '" + path.string() + "'");
  for (Eigen::Index i = 0; i < m.size(); ++i) write_f32(out, m.data()[i]);
  if (!out) throw IoError("write failed for '" + path.string() + "'");
}

struct ManifestLabels {
  static LabelAccess key() { return {}; }
};

}  // namespace io

inline Dataset load_dataset(const std::filesystem::path& manifest_path) {
  const Json doc = io::read_json(manifest_path);
  const auto dir = manifest_path.parent_path();
  Dataset ds;
  try {
    ds.d_in = doc.at("d_in").get<int>();
    ds.n_cameras = {doc.at("n_cameras_vis").get<int>(), doc.at("n_cameras_ir").get<int>()};
    for (const auto& e : doc.at("tracklets")) {
      Tracklet t;
      t.id = e.at("tracklet_id").get<std::string>();
      t.modality = modality_from_string(e.at("modality").get<std::string>());
      t.camera_id = e.at("camera_id").get<int>();
      const int n_frames = e.at("n_frames").get<int>();
      if (n_frames < 1) throw FormatError("tracklet '" + t.id + "' declares n_frames < 1");
      t.frames = io::read_features(dir / e.at("feature_file").get<std::string>(), n_frames, ds.d_in);
      if (e.contains("gt_identity") && !e["gt_identity"].is_null()) {
        const int gt = e["gt_identity"].get<int>();
        if (gt < 0) throw FormatError("tracklet '" + t.id + "' has negative gt_identity");
        t.set_gt_identity(io::ManifestLabels::key(), gt);
      }
      ds.tracklets.push_back(std::move(t));
    }
  } catch (const Json::exception& e) {
    throw FormatError("malformed manifest '" + manifest_path.string() + "': " + e.what());
  }
  ds.validate();
  return ds;
}

// Writes manifest.json plus one <tracklet_id>.f32 payload per tracklet into dir.
inline void save_dataset(const Dataset& ds, const std::filesystem::path& dir) {
  ds.validate();
  std::filesystem::create_directories(dir);
  Json doc;
  doc["d_in"] = ds.d_in;
  doc["n_cameras_vis"] = ds.n_cameras[0];
  doc["n_cameras_ir"] = ds.n_cameras[1];
  doc["tracklets"] = Json::array();
  for (const auto& t : ds.tracklets) {
    const std::string file = t.id + ".f32";
    io::write_features(dir / file, t.frames);
    Json e;
    e["tracklet_id"] = t.id;
    e["modality"] = to_string(t.modality);
    e["camera_id"] = t.camera_id;
    e["n_frames"] = t.frames.rows();
    e["feature_file"] = file;
    if (auto gt = t.gt_identity(io::ManifestLabels::key())) e["gt_identity"] = *gt;
    doc["tracklets"].push_back(std::move(e));
  }
  io::write_json(dir / "manifest.json", doc);
}

}  // namespace hitpro
