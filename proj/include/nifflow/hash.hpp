#ifndef NIFFLOW_HASH_HPP
#define NIFFLOW_HASH_HPP

#include <cstdint>
#include <string>
#include <string_view>

namespace nifflow {

/// 64-bit FNV-1a rendered as 16 lowercase hex digits.
inline std::string fnv1a_hex(std::string_view text) {
  std::uint64_t hash = 1469598103934665603ULL;
  for (unsigned char ch : text) {
    hash ^= ch;
    hash *= 1099511628211ULL;
  }
  static constexpr char digits[] = "0123456789abcdef";
  std::string out(16, '0');
  for (int i = 15; i >= 0; --i, hash >>= 4) out[static_cast<std::size_t>(i)] = digits[hash & 0xf];
  return out;
}

}  // namespace nifflow

#endif  // NIFFLOW_HASH_HPP
