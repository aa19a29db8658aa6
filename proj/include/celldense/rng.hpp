#pragma once

#include <cstdint>
#include <random>
#include <string_view>

namespace celldense {

// splitmix64 step. Bit-exact everywhere, good enough to decorrelate seeds.
inline constexpr std::uint64_t splitmix64(std::uint64_t& state) {
    std::uint64_t z = (state += 0x9e3779b97f4a7c15ull);
    z = (z ^ (z >> 30)) * 0xbf58476d1ce4e5b9ull;
    z = (z ^ (z >> 27)) * 0x94d049bb133111ebull;
    return z ^ (z >> 31);
}

// One named random stream. Streams with different labels derived from the
// same master seed are independent for simulation purposes, and the same
// (seed, label) pair replays the same sequence on every platform: the
// engine is mt19937_64 (fully specified by the standard) and all
// distributions below are hand-rolled because the std::*_distribution
// classes are allowed to differ between standard libraries.
class RngStream {
public:
    RngStream(std::uint64_t seed, std::string_view label) : engine_(mix(seed, label)) {}

    std::uint64_t next() { return engine_(); }

    // Uniform on [0, 1): top 53 bits of the engine output.
    double uniform() { return static_cast<double>(engine_() >> 11) * 0x1.0p-53; }

    double uniform(double lo, double hi) { return lo + (hi - lo) * uniform(); }

    // Uniform on {0, ..., n-1} by rejection, so every index is exactly
    // equally likely.
    std::size_t uniform_index(std::size_t n);

private:
    static std::uint64_t mix(std::uint64_t seed, std::string_view label);

    std::mt19937_64 engine_;
};

}  // namespace celldense
