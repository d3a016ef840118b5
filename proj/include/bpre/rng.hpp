// Deterministic pseudo-random streams.
//
// Every Monte Carlo routine in this library draws from an RngStream derived
// from (root seed, module tag, block index).  Worker threads never share a
// stream, and the block partition depends only on the replica count, so
// estimates are reproducible for a fixed seed regardless of worker count.
#pragma once

#include <cstdint>
#include <random>
#include <string_view>

namespace bpre {

// Replicas are grouped into blocks of this size; each block owns a stream.
inline constexpr std::uint64_t kBlockSize = 16384;

constexpr std::uint64_t splitmix64(std::uint64_t x) {
    x += 0x9e3779b97f4a7c15ULL;
    x = (x ^ (x >> 30)) * 0xbf58476d1ce4e5b9ULL;
    x = (x ^ (x >> 27)) * 0x94d049bb133111ebULL;
    return x ^ (x >> 31);
}

constexpr std::uint64_t fnv1a64(std::string_view s) {
    std::uint64_t h = 0xcbf29ce484222325ULL;
    for (char c : s) {
        h ^= static_cast<unsigned char>(c);
        h *= 0x100000001b3ULL;
    }
    return h;
}

// Child stream id = hash64(root seed, module tag, block index).
constexpr std::uint64_t derive_seed(std::uint64_t root, std::string_view tag,
                                    std::uint64_t block) {
    return splitmix64(splitmix64(root ^ fnv1a64(tag)) ^ block);
}

class RngStream {
public:
    explicit RngStream(std::uint64_t seed) : eng_(seed) {}

    static RngStream derived(std::uint64_t root, std::string_view tag,
                             std::uint64_t block) {
        return RngStream(derive_seed(root, tag, block));
    }

    std::uint64_t bits() { return eng_(); }

    // Uniform on [0,1) with 53 random bits.
    double uniform() { return static_cast<double>(eng_() >> 11) * 0x1.0p-53; }

    // Uniform on (0,1]; safe as a log() argument.
    double uniform_pos() { return 1.0 - uniform(); }

    std::mt19937_64& engine() { return eng_; }

private:
    std::mt19937_64 eng_;
};

} // namespace bpre
