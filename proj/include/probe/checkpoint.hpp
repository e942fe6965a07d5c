#pragma once

#include <cstdint>
#include <cstring>
#include <filesystem>
#include <fstream>
#include <map>
#include <string>
#include <vector>

#include "probe/tensor.hpp"

namespace probe {

// Versioned binary tensor container:
//   "PRBL" | version u32 | config digest u64 | frozen u8 | weight digest u64 |
//   metadata (u64 length + bytes) | tensor count u32 |
//   per tensor: name u32+bytes, rank u32, dims u64..., data f64 little-endian.
struct Checkpoint {
  static constexpr std::uint32_t kVersion = 1;

  std::uint64_t config_digest = 0;
  bool frozen = false;
  std::uint64_t weight_digest = 0;
  std::string metadata;  // JSON wrapper/provenance record, may be empty
  std::map<std::string, Tensor> tensors;
};

namespace ckpt_detail {

inline void put_u32(std::ostream& os, std::uint32_t v) {
  unsigned char b[4];
  for (int i = 0; i < 4; ++i) b[i] = static_cast<unsigned char>(v >> (8 * i));
  os.write(reinterpret_cast<const char*>(b), 4);
}
inline void put_u64(std::ostream& os, std::uint64_t v) {
  unsigned char b[8];
  for (int i = 0; i < 8; ++i) b[i] = static_cast<unsigned char>(v >> (8 * i));
  os.write(reinterpret_cast<const char*>(b), 8);
}
inline void put_f64(std::ostream& os, double d) {
  std::uint64_t v;
  std::memcpy(&v, &d, 8);
  put_u64(os, v);
}
inline std::uint32_t get_u32(std::istream& is) {
  unsigned char b[4];
  is.read(reinterpret_cast<char*>(b), 4);
  std::uint32_t v = 0;
  for (int i = 0; i < 4; ++i) v |= static_cast<std::uint32_t>(b[i]) << (8 * i);
  return v;
}
inline std::uint64_t get_u64(std::istream& is) {
  unsigned char b[8];
  is.read(reinterpret_cast<char*>(b), 8);
  std::uint64_t v = 0;
  for (int i = 0; i < 8; ++i) v |= static_cast<std::uint64_t>(b[i]) << (8 * i);
  return v;
}
inline double get_f64(std::istream& is) {
  std::uint64_t v = get_u64(is);
  double d;
  std::memcpy(&d, &v, 8);
  return d;
}

}  // namespace ckpt_detail

inline void save_checkpoint(const Checkpoint& c, const std::filesystem::path& path) {
  namespace d = ckpt_detail;
  std::filesystem::create_directories(path.parent_path());
  std::ofstream os(path, std::ios::binary | std::ios::trunc);
  if (!os) throw ArtifactError("cannot open " + path.string() + " for writing");
  os.write("PRBL", 4);
  d::put_u32(os, Checkpoint::kVersion);
  d::put_u64(os, c.config_digest);
  os.put(c.frozen ? 1 : 0);
  d::put_u64(os, c.weight_digest);
  d::put_u64(os, c.metadata.size());
  os.write(c.metadata.data(), static_cast<std::streamsize>(c.metadata.size()));
  d::put_u32(os, static_cast<std::uint32_t>(c.tensors.size()));
  for (const auto& [name, t] : c.tensors) {
    d::put_u32(os, static_cast<std::uint32_t>(name.size()));
    os.write(name.data(), static_cast<std::streamsize>(name.size()));
    d::put_u32(os, static_cast<std::uint32_t>(t.shape.size()));
    for (auto dim : t.shape) d::put_u64(os, dim);
    for (double x : t.data) d::put_f64(os, x);
  }
  if (!os) throw ArtifactError("write failed for " + path.string());
}

inline Checkpoint load_checkpoint(const std::filesystem::path& path) {
  namespace d = ckpt_detail;
  std::ifstream is(path, std::ios::binary);
  if (!is) throw ArtifactError("cannot open checkpoint " + path.string());
  char magic[4];
  is.read(magic, 4);
  if (!is || std::memcmp(magic, "PRBL", 4) != 0)
    throw ArtifactError(path.string() + " is not a PRBL container");
  const std::uint32_t version = d::get_u32(is);
  if (version != Checkpoint::kVersion)
    throw ArtifactError("unsupported container version " + std::to_string(version));
  Checkpoint c;
  c.config_digest = d::get_u64(is);
  c.frozen = is.get() != 0;
  c.weight_digest = d::get_u64(is);
  const std::uint64_t meta_len = d::get_u64(is);
  c.metadata.resize(meta_len);
  is.read(c.metadata.data(), static_cast<std::streamsize>(meta_len));
  const std::uint32_t count = d::get_u32(is);
  for (std::uint32_t i = 0; i < count; ++i) {
    const std::uint32_t name_len = d::get_u32(is);
    std::string name(name_len, '\0');
    is.read(name.data(), name_len);
    const std::uint32_t rank = d::get_u32(is);
    Shape shape(rank);
    for (auto& dim : shape) dim = d::get_u64(is);
    Tensor t(shape);
    for (auto& x : t.data) x = d::get_f64(is);
    if (!is) throw ArtifactError("truncated checkpoint " + path.string());
    c.tensors.emplace(std::move(name), std::move(t));
  }
  return c;
}

}  // namespace probe
