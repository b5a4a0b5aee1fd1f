#pragma once

#include <cstring>
#include <filesystem>
#include <fstream>
#include <stdexcept>
#include <string>

#include <json.hpp>

#include "subvox/dataset_io.hpp"
#include "subvox/net.hpp"

namespace subvox {

inline constexpr char kCheckpointMagic[8] = {'S', 'V', 'X', 'N', 'E', 'T', '0', '1'};
inline constexpr std::uint32_t kCheckpointVersion = 1;

struct CheckpointMeta {
  StructureKind kind = StructureKind::vessel;
  InputNormalization normalization;
  std::uint64_t train_seed = 0;
  int trained_epochs = 0;
  double best_validation_abs_re_pct = 0.0;
};

namespace detail {

inline void append_u32_le(std::vector<char>& buf, std::uint32_t v) {
  for (int i = 0; i < 4; ++i) buf.push_back(static_cast<char>((v >> (8 * i)) & 0xff));
}

inline std::uint32_t read_u32_le(const char* p) {
  std::uint32_t v = 0;
  for (int i = 0; i < 4; ++i)
    v |= static_cast<std::uint32_t>(static_cast<unsigned char>(p[i])) << (8 * i);
  return v;
}

}  // namespace detail

// Layout: magic, version, config JSON (length-prefixed), then the weight
// buffers as little-endian 32-bit floats in network traversal order.
inline void save_checkpoint(const std::filesystem::path& path, Network<float>& net,
                            const CheckpointMeta& meta) {
  nlohmann::ordered_json j;
  j["kind"] = to_string(meta.kind);
  j["input_hw"] = net.cfg.input_hw;
  j["input_channels"] = net.cfg.input_channels;
  nlohmann::ordered_json conv = nlohmann::ordered_json::array();
  for (const ConvSpec& c : net.cfg.conv)
    conv.push_back({{"in", c.in_channels}, {"out", c.out_channels}, {"stride", c.stride}});
  j["conv"] = std::move(conv);
  nlohmann::ordered_json fc = nlohmann::ordered_json::array();
  for (const FcSpec& f : net.cfg.fc) fc.push_back({{"in", f.in_features}, {"out", f.out_features}});
  j["fc"] = std::move(fc);
  j["normalization"] = {{"offset_hu", meta.normalization.offset_hu},
                        {"scale_hu", meta.normalization.scale_hu},
                        {"clamp_lo", meta.normalization.clamp_lo},
                        {"clamp_hi", meta.normalization.clamp_hi}};
  j["train_seed"] = meta.train_seed;
  j["trained_epochs"] = meta.trained_epochs;
  j["best_validation_abs_re_pct"] = meta.best_validation_abs_re_pct;
  const std::string config = j.dump();

  std::vector<char> buf;
  buf.insert(buf.end(), kCheckpointMagic, kCheckpointMagic + 8);
  detail::append_u32_le(buf, kCheckpointVersion);
  detail::append_u32_le(buf, static_cast<std::uint32_t>(config.size()));
  buf.insert(buf.end(), config.begin(), config.end());
  net.for_each_buffer([&](std::vector<float>& b) {
    for (float v : b) detail::append_f32_le(buf, v);
  });

  std::ofstream f(path, std::ios::binary | std::ios::trunc);
  if (!f) throw std::runtime_error("save_checkpoint: cannot write " + path.string());
  f.write(buf.data(), static_cast<std::streamsize>(buf.size()));
  if (!f) throw std::runtime_error("save_checkpoint: write failed for " + path.string());
}

struct LoadedCheckpoint {
  Network<float> net;
  CheckpointMeta meta;
};

inline LoadedCheckpoint load_checkpoint(const std::filesystem::path& path) {
  std::ifstream f(path, std::ios::binary);
  if (!f) throw std::runtime_error("load_checkpoint: cannot open " + path.string());
  std::vector<char> buf((std::istreambuf_iterator<char>(f)), std::istreambuf_iterator<char>());
  if (buf.size() < 16 || std::memcmp(buf.data(), kCheckpointMagic, 8) != 0)
    throw std::runtime_error("load_checkpoint: bad magic in " + path.string());
  if (detail::read_u32_le(buf.data() + 8) != kCheckpointVersion)
    throw std::runtime_error("load_checkpoint: unsupported version in " + path.string());
  const std::uint32_t json_len = detail::read_u32_le(buf.data() + 12);
  if (buf.size() < 16 + json_len)
    throw std::runtime_error("load_checkpoint: truncated " + path.string());
  const nlohmann::json j = nlohmann::json::parse(buf.begin() + 16, buf.begin() + 16 + json_len);

  NetworkConfig cfg;
  cfg.input_hw = j.at("input_hw").get<int>();
  cfg.input_channels = j.at("input_channels").get<int>();
  for (const auto& c : j.at("conv"))
    cfg.conv.push_back({c.at("in").get<int>(), c.at("out").get<int>(), c.at("stride").get<int>()});
  for (const auto& fcj : j.at("fc"))
    cfg.fc.push_back({fcj.at("in").get<int>(), fcj.at("out").get<int>()});

  LoadedCheckpoint out{Network<float>(cfg), {}};
  out.meta.kind = j.at("kind").get<std::string>() == "airway" ? StructureKind::airway
                                                              : StructureKind::vessel;
  const auto& n = j.at("normalization");
  out.meta.normalization.offset_hu = n.at("offset_hu").get<double>();
  out.meta.normalization.scale_hu = n.at("scale_hu").get<double>();
  out.meta.normalization.clamp_lo = n.at("clamp_lo").get<double>();
  out.meta.normalization.clamp_hi = n.at("clamp_hi").get<double>();
  out.meta.train_seed = j.value("train_seed", std::uint64_t{0});
  out.meta.trained_epochs = j.value("trained_epochs", 0);
  out.meta.best_validation_abs_re_pct = j.value("best_validation_abs_re_pct", 0.0);

  std::size_t offset = 16 + json_len;
  const std::size_t expected = out.net.param_count() * 4;
  if (buf.size() - offset != expected)
    throw std::runtime_error("load_checkpoint: weight blob size mismatch in " + path.string());
  out.net.for_each_buffer([&](std::vector<float>& b) {
    for (float& v : b) {
      v = detail::read_f32_le(buf.data() + offset);
      offset += 4;
    }
  });
  return out;
}

}  // namespace subvox
