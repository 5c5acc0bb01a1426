#pragma once

#include <filesystem>
#include <fstream>
#include <sstream>
#include <string>
#include <vector>

#include "hitpro/datamodel.hpp"
#include "hitpro/encoder.hpp"

namespace hitpro {

// checkpoint.hpt layout:
//   8 bytes   magic "HPTCKPT\n"
//   8 bytes   little-endian header length N
//   N bytes   JSON header (version, epoch, encoder shape, store layout, section table)
//   ...       concatenated little-endian sections, offsets relative to the end of the header
inline constexpr char kCheckpointMagic[9] = "HPTCKPT\n";
inline constexpr int kCheckpointVersion = 1;

struct Checkpoint {
  EncoderParams params;
  PrototypeStore store;
  int epoch = 0;
  Json config;  // free-form run metadata echoed into the header
};

namespace detail {

inline bool float_exact(const Mat& m) {
  for (Eigen::Index i = 0; i < m.size(); ++i) {
    const double v = m.data()[i];
    if (static_cast<double>(static_cast<float>(v)) != v) return false;
  }
  return true;
}

inline Json shape_to_json(const EncoderShape& s) {
  return Json{{"d_in", s.d_in},         {"d", s.d},
              {"d_ff", s.d_ff},         {"d_h", s.d_h},
              {"n_layers", s.n_layers}, {"seq_len", s.seq_len},
              {"normalize_output", s.normalize_output}};
}

inline EncoderShape shape_from_json(const Json& j) {
  EncoderShape s;
  s.d_in = j.at("d_in").get<int>();
  s.d = j.at("d").get<int>();
  s.d_ff = j.at("d_ff").get<int>();
  s.d_h = j.at("d_h").get<int>();
  s.n_layers = j.at("n_layers").get<int>();
  s.seq_len = j.at("seq_len").get<int>();
  s.normalize_output = j.at("normalize_output").get<bool>();
  return s;
}

class SectionWriter {
 public:
  // Parameters go out as float32 when that is lossless, float64 otherwise.
  void add(const std::string& name, const Mat& m, bool allow_f32) {
    const bool f32 = allow_f32 && float_exact(m);
    const auto offset = static_cast<std::uint64_t>(blob_.tellp());
    for (Eigen::Index r = 0; r < m.rows(); ++r)
      for (Eigen::Index c = 0; c < m.cols(); ++c) {
        if (f32)
          io::write_f32(blob_, static_cast<float>(m(r, c)));
        else
          io::write_f64(blob_, m(r, c));
      }
    const auto nbytes = static_cast<std::uint64_t>(blob_.tellp()) - offset;
    table_.push_back({{"name", name},
                      {"dtype", f32 ? "f32" : "f64"},
                      {"shape", {m.rows(), m.cols()}},
                      {"offset", offset},
                      {"nbytes", nbytes}});
  }

  Json table() const { return table_; }
  std::string blob() const { return blob_.str(); }

 private:
  std::ostringstream blob_{std::ios::binary};
  Json table_ = Json::array();
};

}  // namespace detail

inline void save_checkpoint(const EncoderParams& params, const PrototypeStore& store, int epoch,
                            const std::filesystem::path& path, const Json& config = Json::object()) {
  detail::SectionWriter w;
  params.for_each([&](const std::string& name, const Mat& m) { w.add("param." + name, m, true); });

  Json layout = Json::array();
  for (Modality m : kModalities)
    for (int c = 0; c < store.cameras(m); ++c) {
      const auto& cam = store.camera(m, c);
      Json tracklets = Json::array();
      Mat vectors(static_cast<Eigen::Index>(cam.size()), cam.empty() ? 0 : cam[0].vector.size());
      for (std::size_t i = 0; i < cam.size(); ++i) {
        tracklets.push_back(cam[i].tracklet);
        vectors.row(static_cast<Eigen::Index>(i)) = cam[i].vector.transpose();
      }
      const std::string name = "store." + to_string(m) + "." + std::to_string(c);
      w.add(name, vectors, false);
      layout.push_back({{"modality", to_string(m)}, {"camera", c}, {"tracklets", tracklets}, {"section", name}});
    }

  Json header{{"version", kCheckpointVersion},
              {"epoch", epoch},
              {"encoder", detail::shape_to_json(params.shape)},
              {"store_cameras", {store.cameras(Modality::VIS), store.cameras(Modality::IR)}},
              {"store", layout},
              {"sections", w.table()},
              {"config", config}};
  const std::string head = header.dump();
  const std::string blob = w.blob();

  std::ofstream out(path, std::ios::binary);
  if (!out) throw IoError("cannot write checkpoint '" + path.string() + "'");
  out.write(kCheckpointMagic, 8);
  const auto n = static_cast<std::uint64_t>(head.size());
  io::put_le32(out, static_cast<std::uint32_t>(n & 0xFFFFFFFFULL));
  io::put_le32(out, static_cast<std::uint32_t>(n >> 32));
  out.write(head.data(), static_cast<std::streamsize>(head.size()));
  out.write(blob.data(), static_cast<std::streamsize>(blob.size()));
  if (!out) throw IoError("write failed for checkpoint '" + path.string() + "'");
}

inline Checkpoint load_checkpoint(const std::filesystem::path& path) {
  const auto bytes = io::read_bytes(path);
  auto corrupt = [&](const std::string& why) { return FormatError("corrupt checkpoint '" + path.string() + "': " + why); };
  if (bytes.size() < 16 || std::string(bytes.begin(), bytes.begin() + 8) != std::string(kCheckpointMagic, 8))
    throw corrupt("bad magic or truncated preamble");
  const std::uint64_t head_len =
      static_cast<std::uint64_t>(io::get_le32(bytes.data() + 8)) | (static_cast<std::uint64_t>(io::get_le32(bytes.data() + 12)) << 32);
  if (head_len > bytes.size() - 16) throw corrupt("truncated header");
  Json header;
  try {
    header = Json::parse(bytes.begin() + 16, bytes.begin() + 16 + static_cast<std::ptrdiff_t>(head_len));
  } catch (const Json::exception& e) {
    throw corrupt(std::string("unreadable header: ") + e.what());
  }
  const unsigned char* blob = bytes.data() + 16 + head_len;
  const std::uint64_t blob_len = bytes.size() - 16 - head_len;

  Checkpoint ck;
  try {
    const int version = header.at("version").get<int>();
    if (version != kCheckpointVersion)
      throw FormatError("checkpoint version tag mismatch: file has " + std::to_string(version) + ", expected " +
                        std::to_string(kCheckpointVersion));
    ck.epoch = header.at("epoch").get<int>();
    ck.config = header.value("config", Json::object());

    std::map<std::string, Mat> sections;
    for (const auto& s : header.at("sections")) {
      const auto rows = s.at("shape").at(0).get<Eigen::Index>();
      const auto cols = s.at("shape").at(1).get<Eigen::Index>();
      const auto offset = s.at("offset").get<std::uint64_t>();
      const auto nbytes = s.at("nbytes").get<std::uint64_t>();
      const bool f32 = s.at("dtype").get<std::string>() == "f32";
      const std::uint64_t width = f32 ? 4 : 8;
      if (nbytes != width * static_cast<std::uint64_t>(rows * cols) || offset > blob_len || nbytes > blob_len - offset)
        throw corrupt("section '" + s.at("name").get<std::string>() + "' exceeds file");
      Mat m(rows, cols);
      const unsigned char* p = blob + offset;
      for (Eigen::Index r = 0; r < rows; ++r)
        for (Eigen::Index c = 0; c < cols; ++c, p += width)
          m(r, c) = f32 ? static_cast<double>(io::read_f32(p)) : io::read_f64(p);
      sections[s.at("name").get<std::string>()] = std::move(m);
    }

    const EncoderShape shape = detail::shape_from_json(header.at("encoder"));
    ck.params = encoder_init(shape, 0);
    ck.params.for_each([&](const std::string& name, Mat& m) {
      auto it = sections.find("param." + name);
      if (it == sections.end()) throw corrupt("missing section 'param." + name + "'");
      if (it->second.rows() != m.rows() || it->second.cols() != m.cols()) throw corrupt("shape mismatch for '" + name + "'");
      m = it->second;
    });

    const auto& cams = header.at("store_cameras");
    ck.store = PrototypeStore({cams.at(0).get<int>(), cams.at(1).get<int>()});
    for (const auto& c : header.at("store")) {
      const Modality m = modality_from_string(c.at("modality").get<std::string>());
      const int cam = c.at("camera").get<int>();
      const auto it = sections.find(c.at("section").get<std::string>());
      if (it == sections.end()) throw corrupt("missing store section");
      const auto& ids = c.at("tracklets");
      if (static_cast<Eigen::Index>(ids.size()) != it->second.rows()) throw corrupt("store size mismatch");
      auto& list = ck.store.camera(m, cam);
      for (std::size_t i = 0; i < ids.size(); ++i)
        list.push_back({ids[i].get<int>(), m, cam, it->second.row(static_cast<Eigen::Index>(i)).transpose()});
    }
  } catch (const Json::exception& e) {
    throw corrupt(std::string("malformed header: ") + e.what());
  } catch (const std::out_of_range& e) {
    throw corrupt(std::string("inconsistent store layout: ") + e.what());
  }
  return ck;
}

}  // namespace hitpro
