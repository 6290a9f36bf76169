#pragma once

#include <cstdint>
#include <cstring>
#include <fstream>
#include <optional>
#include <stdexcept>
#include <string>
#include <vector>

#include "sten/model.hpp"
#include "sten/tensor.hpp"

namespace sten {

// Checkpoint file, binary little-endian:
//   magic "STEN" (4 bytes), format version u32 = 1,
//   ArchConfig in fixed field order (u32 fields; dropout and the max-norm
//   limits as f32, with 0 meaning "no limit"),
//   tensor count u32, then per tensor: name length u16 + UTF-8 name,
//   rank u8, dims u32 each, payload f32 row-major.
// Trainability is recovered from the name: running statistics carry a
// "running_" segment and everything else is trainable.
inline constexpr char kCheckpointMagic[4] = {'S', 'T', 'E', 'N'};
inline constexpr uint32_t kCheckpointVersion = 1;

namespace detail {

template <class T>
void write_pod(std::ostream& os, T v) {
  os.write(reinterpret_cast<const char*>(&v), sizeof(v));
}

template <class T>
T read_pod(std::istream& is, const char* what) {
  T v{};
  is.read(reinterpret_cast<char*>(&v), sizeof(v));
  if (!is) throw std::runtime_error(std::string("checkpoint truncated while reading ") + what);
  return v;
}

inline void write_arch_config(std::ostream& os, const ArchConfig& cfg) {
  auto u32 = [&os](int64_t v) { write_pod(os, static_cast<uint32_t>(v)); };
  u32(cfg.n_channels);
  u32(cfg.n_samples);
  u32(cfg.temporal_filters);
  u32(cfg.depth_multiplier);
  u32(cfg.separable_filters);
  u32(cfg.temporal_kernel);
  u32(cfg.separable_kernel);
  u32(cfg.pool1);
  u32(cfg.pool2);
  write_pod(os, cfg.dropout_p);
  u32(cfg.dense_units);
  u32(cfg.n_classes);
  write_pod(os, cfg.maxnorm_depthwise.value_or(0.0f));
  write_pod(os, cfg.maxnorm_dense.value_or(0.0f));
}

inline ArchConfig read_arch_config(std::istream& is) {
  ArchConfig cfg;
  auto u32 = [&is](const char* what) {
    return static_cast<int64_t>(read_pod<uint32_t>(is, what));
  };
  cfg.n_channels = u32("arch config");
  cfg.n_samples = u32("arch config");
  cfg.temporal_filters = u32("arch config");
  cfg.depth_multiplier = u32("arch config");
  cfg.separable_filters = u32("arch config");
  cfg.temporal_kernel = u32("arch config");
  cfg.separable_kernel = u32("arch config");
  cfg.pool1 = u32("arch config");
  cfg.pool2 = u32("arch config");
  cfg.dropout_p = read_pod<float>(is, "arch config");
  cfg.dense_units = u32("arch config");
  cfg.n_classes = u32("arch config");
  const float mn_dw = read_pod<float>(is, "arch config");
  const float mn_de = read_pod<float>(is, "arch config");
  cfg.maxnorm_depthwise = mn_dw > 0.0f ? std::optional<float>(mn_dw) : std::nullopt;
  cfg.maxnorm_dense = mn_de > 0.0f ? std::optional<float>(mn_de) : std::nullopt;
  return cfg;
}

}  // namespace detail

inline void save_checkpoint(const ModelParams& params, const std::string& path) {
  std::ofstream os(path, std::ios::binary | std::ios::trunc);
  if (!os) throw std::runtime_error("cannot open checkpoint path '" + path + "' for writing");
  os.write(kCheckpointMagic, 4);
  detail::write_pod(os, kCheckpointVersion);
  detail::write_arch_config(os, params.config);
  detail::write_pod(os, static_cast<uint32_t>(params.entries.size()));
  for (const ParamEntry& e : params.entries) {
    detail::write_pod(os, static_cast<uint16_t>(e.name.size()));
    os.write(e.name.data(), static_cast<std::streamsize>(e.name.size()));
    detail::write_pod(os, static_cast<uint8_t>(e.value.rank()));
    for (size_t a = 0; a < e.value.rank(); ++a) {
      detail::write_pod(os, static_cast<uint32_t>(e.value.dim(a)));
    }
    os.write(reinterpret_cast<const char*>(e.value.data()),
             static_cast<std::streamsize>(e.value.size() * sizeof(float)));
  }
  if (!os) throw std::runtime_error("failed writing checkpoint '" + path + "'");
}

inline ModelParams load_checkpoint(const std::string& path) {
  std::ifstream is(path, std::ios::binary);
  if (!is) throw std::runtime_error("cannot open checkpoint path '" + path + "' for reading");
  char magic[4] = {};
  is.read(magic, 4);
  if (!is || std::memcmp(magic, kCheckpointMagic, 4) != 0) {
    throw std::runtime_error("bad magic in checkpoint '" + path + "'");
  }
  const uint32_t version = detail::read_pod<uint32_t>(is, "version");
  if (version != kCheckpointVersion) {
    throw std::runtime_error("unsupported checkpoint version " + std::to_string(version) +
                             " (expected " + std::to_string(kCheckpointVersion) + ")");
  }
  ModelParams params;
  params.config = detail::read_arch_config(is);
  const uint32_t count = detail::read_pod<uint32_t>(is, "tensor count");
  params.entries.reserve(count);
  for (uint32_t t = 0; t < count; ++t) {
    const std::string where = "tensor " + std::to_string(t);
    const uint16_t name_len = detail::read_pod<uint16_t>(is, where.c_str());
    std::string name(name_len, '\0');
    is.read(name.data(), name_len);
    if (!is) throw std::runtime_error("checkpoint truncated while reading " + where + " name");
    const uint8_t rank = detail::read_pod<uint8_t>(is, where.c_str());
    Shape shape(rank);
    for (uint8_t a = 0; a < rank; ++a) {
      shape[a] = static_cast<int64_t>(detail::read_pod<uint32_t>(is, where.c_str()));
    }
    Tensor value(shape);
    is.read(reinterpret_cast<char*>(value.data()),
            static_cast<std::streamsize>(value.size() * sizeof(float)));
    if (!is) {
      throw std::runtime_error("checkpoint truncated while reading " + where + " payload");
    }
    const bool trainable = name.find("running_") == std::string::npos;
    params.entries.push_back({std::move(name), std::move(value), trainable});
  }
  return params;
}

}  // namespace sten
