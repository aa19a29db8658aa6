#include "celldense/rng.hpp"

#include <limits>

namespace celldense {

std::uint64_t RngStream::mix(std::uint64_t seed, std::string_view label) {
    // FNV-1a over the label folded into the master seed, then one more
    // splitmix round so adjacent seeds do not give adjacent states.
    std::uint64_t h = 0xcbf29ce484222325ull;
    for (unsigned char ch : label) {
        h ^= ch;
        h *= 0x100000001b3ull;
    }
    std::uint64_t state = seed ^ h;
    return splitmix64(state);
}

std::size_t RngStream::uniform_index(std::size_t n) {
    if (n <= 1) return 0;
    const std::uint64_t limit = std::numeric_limits<std::uint64_t>::max() / n * n;
    std::uint64_t draw = engine_();
    while (draw >= limit) draw = engine_();
    return static_cast<std::size_t>(draw % n);
}

}  // namespace celldense
