#pragma once

#include <cstdint>
#include <cstring>
#include <string>

#include "probe/tensor.hpp"

namespace probe {

// FNV-1a over little-endian bytes; stable across runs and platforms with
// IEEE-754 doubles.
struct Digest {
  std::uint64_t h = 0xCBF29CE484222325ULL;

  void bytes(const void* p, std::size_t n) {
    const unsigned char* c = static_cast<const unsigned char*>(p);
    for (std::size_t i = 0; i < n; ++i) {
      h ^= c[i];
      h *= 0x100000001B3ULL;
    }
  }
  void u64(std::uint64_t v) {
    for (int i = 0; i < 8; ++i) {
      h ^= static_cast<unsigned char>(v >> (8 * i));
      h *= 0x100000001B3ULL;
    }
  }
  void f64(double d) {
    std::uint64_t v;
    std::memcpy(&v, &d, 8);
    u64(v);
  }
  void str(const std::string& s) {
    u64(s.size());
    bytes(s.data(), s.size());
  }
  void tensor(const Tensor& t) {
    u64(t.shape.size());
    for (auto d : t.shape) u64(d);
    for (double d : t.data) f64(d);
  }

  std::string hex() const {
    static const char* digits = "0123456789abcdef";
    std::string out(16, '0');
    for (int i = 0; i < 16; ++i) out[15 - i] = digits[(h >> (4 * i)) & 0xF];
    return out;
  }
};

}  // namespace probe
