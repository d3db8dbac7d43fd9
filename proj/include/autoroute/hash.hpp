#pragma once

#include <cstdint>
#include <span>
#include <string_view>

#include "autoroute/matrix.hpp"

namespace autoroute {

inline constexpr std::uint64_t kFnvOffset = 14695981039346656037ull;

/// 64-bit FNV-1a, chainable through `h`.
inline std::uint64_t fnv1a(std::span<const unsigned char> bytes, std::uint64_t h = kFnvOffset) {
    for (unsigned char b : bytes) {
        h ^= b;
        h *= 1099511628211ull;
    }
    return h;
}

inline std::uint64_t fnv1a(std::string_view s, std::uint64_t h = kFnvOffset) {
    return fnv1a({reinterpret_cast<const unsigned char*>(s.data()), s.size()}, h);
}

inline std::uint64_t fnv1a(const Matrix& m, std::uint64_t h = kFnvOffset) {
    auto v = m.values();
    return fnv1a({reinterpret_cast<const unsigned char*>(v.data()), v.size_bytes()}, h);
}

/// SplitMix64 finalizer; used to derive independent seeds from (seed, tag).
inline std::uint64_t mix_seed(std::uint64_t x) {
    x += 0x9e3779b97f4a7c15ull;
    x = (x ^ (x >> 30)) * 0xbf58476d1ce4e5b9ull;
    x = (x ^ (x >> 27)) * 0x94d049bb133111ebull;
    return x ^ (x >> 31);
}

inline std::uint64_t derive_seed(std::uint64_t seed, std::string_view tag, std::uint64_t index = 0) {
    return mix_seed(fnv1a(tag, mix_seed(seed)) ^ mix_seed(index + 0x51ed27ull));
}

}  // namespace autoroute
