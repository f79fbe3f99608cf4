#pragma once

#include <cstdint>
#include <random>
#include <string_view>

namespace issm {

using Rng = std::mt19937_64;

// splitmix64 finalizer; used to spread seeds into independent streams.
constexpr std::uint64_t mix64(std::uint64_t x) noexcept {
    x += 0x9e3779b97f4a7c15ULL;
    x = (x ^ (x >> 30)) * 0xbf58476d1ce4e5b9ULL;
    x = (x ^ (x >> 27)) * 0x94d049bb133111ebULL;
    return x ^ (x >> 31);
}

constexpr std::uint64_t fnv1a64(std::string_view s) noexcept {
    std::uint64_t h = 0xcbf29ce484222325ULL;
    for (char c : s) {
        h ^= static_cast<unsigned char>(c);
        h *= 0x100000001b3ULL;
    }
    return h;
}

/// Seed for a named random stream ("dataset", "split", "agent", ...) under a base seed.
constexpr std::uint64_t derive_seed(std::uint64_t base, std::string_view stream) noexcept {
    return mix64(base ^ mix64(fnv1a64(stream)));
}

constexpr std::uint64_t derive_seed(std::uint64_t base, std::string_view stream,
                                    std::uint64_t index) noexcept {
    return mix64(derive_seed(base, stream) + mix64(index));
}

}  // namespace issm
