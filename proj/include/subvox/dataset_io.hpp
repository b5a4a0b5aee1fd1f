#pragma once

#include <cstdint>
#include <cstring>
#include <filesystem>
#include <fstream>
#include <stdexcept>
#include <string>
#include <vector>

#include <json.hpp>

#include "subvox/pipeline.hpp"

namespace subvox {

inline constexpr int kDatasetVersion = 1;
inline constexpr const char* kPatchFileName = "patches.f32";
inline constexpr const char* kSidecarFileName = "dataset.json";

namespace detail {

inline void append_f32_le(std::vector<char>& buf, float v) {
  std::uint32_t bits;
  std::memcpy(&bits, &v, sizeof bits);
  buf.push_back(static_cast<char>(bits & 0xff));
  buf.push_back(static_cast<char>((bits >> 8) & 0xff));
  buf.push_back(static_cast<char>((bits >> 16) & 0xff));
  buf.push_back(static_cast<char>((bits >> 24) & 0xff));
}

inline float read_f32_le(const char* p) {
  const std::uint32_t bits = (static_cast<std::uint32_t>(static_cast<unsigned char>(p[0]))) |
                             (static_cast<std::uint32_t>(static_cast<unsigned char>(p[1])) << 8) |
                             (static_cast<std::uint32_t>(static_cast<unsigned char>(p[2])) << 16) |
                             (static_cast<std::uint32_t>(static_cast<unsigned char>(p[3])) << 24);
  float v;
  std::memcpy(&v, &bits, sizeof v);
  return v;
}

}  // namespace detail

// Writes the patch blob (little-endian 32-bit floats, row-major, one patch
// after another) plus the JSON sidecar holding the shape and per-patch
// labels.
inline void save_dataset(const Dataset& ds, const std::filesystem::path& dir) {
  std::error_code ec;
  std::filesystem::create_directories(dir, ec);
  if (ec) throw std::runtime_error("save_dataset: cannot create " + dir.string());

  {
    std::vector<char> buf;
    buf.reserve(ds.patches.size() * 32 * 32 * 4);
    for (const LabeledPatch& p : ds.patches)
      for (double v : p.pixels.values) detail::append_f32_le(buf, static_cast<float>(v));
    std::ofstream f(dir / kPatchFileName, std::ios::binary | std::ios::trunc);
    if (!f) throw std::runtime_error("save_dataset: cannot write " + (dir / kPatchFileName).string());
    f.write(buf.data(), static_cast<std::streamsize>(buf.size()));
    if (!f) throw std::runtime_error("save_dataset: write failed for " + (dir / kPatchFileName).string());
  }

  nlohmann::ordered_json j;
  j["version"] = kDatasetVersion;
  j["kind"] = to_string(ds.kind);
  j["n_models"] = ds.n_models;
  j["m_replicas"] = ds.m_replicas;
  j["spacing_mm"] = ds.spacing_mm;
  j["patch_px"] = 32;
  nlohmann::ordered_json labels = nlohmann::ordered_json::array();
  for (const LabeledPatch& p : ds.patches) {
    nlohmann::ordered_json l;
    l["model_id"] = p.model_id;
    l["replica_id"] = p.replica_id;
    l["lumen_mm"] = p.label_lumen_mm;
    if (p.label_wall_mm) l["wall_mm"] = *p.label_wall_mm;
    labels.push_back(std::move(l));
  }
  j["labels"] = std::move(labels);

  std::ofstream f(dir / kSidecarFileName, std::ios::binary | std::ios::trunc);
  if (!f) throw std::runtime_error("save_dataset: cannot write " + (dir / kSidecarFileName).string());
  f << j.dump(2) << "\n";
  if (!f) throw std::runtime_error("save_dataset: write failed for " + (dir / kSidecarFileName).string());
}

inline Dataset load_dataset(const std::filesystem::path& dir) {
  std::ifstream jf(dir / kSidecarFileName);
  if (!jf) throw std::runtime_error("load_dataset: cannot open " + (dir / kSidecarFileName).string());
  nlohmann::json j;
  jf >> j;
  if (j.at("version").get<int>() != kDatasetVersion)
    throw std::runtime_error("load_dataset: unsupported version in " + dir.string());

  Dataset ds;
  const std::string kind = j.at("kind").get<std::string>();
  ds.kind = kind == "airway" ? StructureKind::airway : StructureKind::vessel;
  ds.n_models = j.at("n_models").get<std::int64_t>();
  ds.m_replicas = j.at("m_replicas").get<int>();
  ds.spacing_mm = j.at("spacing_mm").get<double>();
  const int patch_px = j.value("patch_px", 32);
  const std::size_t patch_values = static_cast<std::size_t>(patch_px) * patch_px;

  const auto& labels = j.at("labels");
  ds.patches.resize(labels.size());

  std::ifstream pf(dir / kPatchFileName, std::ios::binary);
  if (!pf) throw std::runtime_error("load_dataset: cannot open " + (dir / kPatchFileName).string());
  std::vector<char> buf(patch_values * 4);

  for (std::size_t i = 0; i < labels.size(); ++i) {
    const auto& l = labels[i];
    LabeledPatch& p = ds.patches[i];
    p.kind = ds.kind;
    p.model_id = l.at("model_id").get<std::int64_t>();
    p.replica_id = l.at("replica_id").get<int>();
    p.label_lumen_mm = l.at("lumen_mm").get<double>();
    if (l.contains("wall_mm")) p.label_wall_mm = l.at("wall_mm").get<double>();
    pf.read(buf.data(), static_cast<std::streamsize>(buf.size()));
    if (!pf) throw std::runtime_error("load_dataset: truncated " + (dir / kPatchFileName).string());
    p.pixels = ImageGrid(patch_px, patch_px, ds.spacing_mm);
    for (std::size_t k = 0; k < patch_values; ++k)
      p.pixels.values[k] = static_cast<double>(detail::read_f32_le(buf.data() + 4 * k));
  }
  return ds;
}

}  // namespace subvox
