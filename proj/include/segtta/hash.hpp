#ifndef SEGTTA_HASH_HPP
#define SEGTTA_HASH_HPP

#include <cstdint>
#include <cstring>
#include <span>
#include <string_view>
#include <type_traits>

namespace segtta {

// Stable 64-bit hashing. std::hash is implementation-defined, so everything
// that must agree across builds (RNG streams, cache keys) goes through here.

inline constexpr std::uint64_t kFnvOffset = 0xcbf29ce484222325ULL;
inline constexpr std::uint64_t kFnvPrime = 0x100000001b3ULL;

inline std::uint64_t fnv1a(std::span<const std::byte> bytes, std::uint64_t h = kFnvOffset) noexcept {
  for (std::byte b : bytes) {
    h ^= static_cast<std::uint64_t>(b);
    h *= kFnvPrime;
  }
  return h;
}

inline std::uint64_t fnv1a(std::string_view s, std::uint64_t h = kFnvOffset) noexcept {
  return fnv1a(std::as_bytes(std::span(s.data(), s.size())), h);
}

template <typename T>
inline std::uint64_t fnv1a_value(const T& value, std::uint64_t h = kFnvOffset) noexcept {
  static_assert(std::is_trivially_copyable_v<T>);
  return fnv1a(std::as_bytes(std::span(&value, 1)), h);
}

/// splitmix64 finalizer; good avalanche for combining keys into seeds.
inline constexpr std::uint64_t mix64(std::uint64_t z) noexcept {
  z += 0x9e3779b97f4a7c15ULL;
  z = (z ^ (z >> 30)) * 0xbf58476d1ce4e5b9ULL;
  z = (z ^ (z >> 27)) * 0x94d049bb133111ebULL;
  return z ^ (z >> 31);
}

inline constexpr std::uint64_t hash_combine(std::uint64_t a, std::uint64_t b) noexcept {
  return mix64(a ^ mix64(b));
}

}  // namespace segtta

#endif  // SEGTTA_HASH_HPP
