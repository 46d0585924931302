#pragma once

#include <cstdint>
#include <string_view>

namespace exactrag {

/// FNV-1a over the bytes of `text`. Stable across platforms and runs.
constexpr std::uint64_t fnv1a64(std::string_view text,
                                std::uint64_t basis = 0xcbf29ce484222325ULL) noexcept {
  std::uint64_t h = basis;
  for (unsigned char c : text) {
    h ^= c;
    h *= 0x100000001b3ULL;
  }
  return h;
}

/// One step of the splitmix64 generator; also a good 64-bit mixer.
constexpr std::uint64_t splitmix64(std::uint64_t& state) noexcept {
  std::uint64_t z = (state += 0x9e3779b97f4a7c15ULL);
  z = (z ^ (z >> 30)) * 0xbf58476d1ce4e5b9ULL;
  z = (z ^ (z >> 27)) * 0x94d049bb133111ebULL;
  return z ^ (z >> 31);
}

constexpr std::uint64_t mix64(std::uint64_t a, std::uint64_t b) noexcept {
  std::uint64_t s = a ^ (b + 0x9e3779b97f4a7c15ULL + (a << 6) + (a >> 2));
  return splitmix64(s);
}

/// Label key carried on index entries; equality of keys stands in for label identity.
constexpr std::uint64_t label_key(std::string_view label) noexcept { return fnv1a64(label); }

}  // namespace exactrag
