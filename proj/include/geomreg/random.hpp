#pragma once

#include <cstdint>
#include <random>

namespace geomreg {

using Rng = std::mt19937_64;

// SplitMix64 finalizer. Used to derive independent child seeds from a
// master seed and a counter so parallel tasks never share a stream.
constexpr std::uint64_t mix64(std::uint64_t x) noexcept {
    x += 0x9e3779b97f4a7c15ULL;
    x = (x ^ (x >> 30)) * 0xbf58476d1ce4e5b9ULL;
    x = (x ^ (x >> 27)) * 0x94d049bb133111ebULL;
    return x ^ (x >> 31);
}

constexpr std::uint64_t derive_seed(std::uint64_t master, std::uint64_t index) noexcept {
    return mix64(mix64(master) ^ mix64(index + 0x632be59bd9b4e019ULL));
}

// Named sub-streams for one logical task (data, split, init, ...).
enum class Stream : std::uint64_t {
    data = 1,
    split = 2,
    init = 3,
    shuffle = 4,
    folds = 5,
    noise = 6,
    validation = 7,
};

constexpr std::uint64_t derive_seed(std::uint64_t master, Stream s) noexcept {
    return derive_seed(master, static_cast<std::uint64_t>(s) << 48);
}

inline Rng make_rng(std::uint64_t seed) { return Rng{seed}; }

}  // namespace geomreg
