#pragma once

// Deterministic stream derivation.
//
// Every stochastic quantity in a run draws from an engine obtained by walking
// a derivation chain that starts at the master seed:
//
//     RngStream root(master_seed);
//     auto eng = root.derived(tag1).derived(tag2)...derived(tagK).engine();
//
// Each derivation step mixes one 64-bit tag into the state with splitmix64,
// so the resulting engine depends only on (master_seed, tag1, ..., tagK) and
// never on how many draws any sibling stream has consumed. Conventional tag
// order used by the protocol code:
//
//     root -> [replicate index] -> [channel] -> [scan index] -> [roi hash] (-> [extra])
//
// where [channel] is one of the constants in rng::channel below and
// [roi hash] is fnv1a64 of the region id. String-keyed substreams therefore
// do not depend on container iteration order.

#include <cstdint>
#include <random>
#include <string_view>

namespace opetsim {

// 64-bit FNV-1a. Used both for region-id stream tags and for config digests.
inline std::uint64_t fnv1a64(std::string_view text) {
    std::uint64_t h = 1469598103934665603ULL;
    for (unsigned char ch : text) {
        h ^= ch;
        h *= 1099511628211ULL;
    }
    return h;
}

// splitmix64 finalizer (Stafford mix13 variant).
inline std::uint64_t splitmix64(std::uint64_t x) {
    x += 0x9E3779B97F4A7C15ULL;
    x = (x ^ (x >> 30)) * 0xBF58476D1CE4E5B9ULL;
    x = (x ^ (x >> 27)) * 0x94D049BB133111EBULL;
    return x ^ (x >> 31);
}

namespace channel {
// Tags separating the independent uses of randomness inside one replicate.
inline constexpr std::uint64_t collapse = 0xC011A45EULL;
inline constexpr std::uint64_t pixels = 0x9188E15ULL;
inline constexpr std::uint64_t jitter = 0x1177E4ULL;
inline constexpr std::uint64_t power = 0x90BE4ULL;
} // namespace channel

class RngStream {
public:
    explicit RngStream(std::uint64_t seed) : state_(splitmix64(seed ^ 0xA02E75B1D4F3C681ULL)) {}

    // Child stream keyed by one tag; commutes with nothing, ordering matters.
    RngStream derived(std::uint64_t tag) const {
        RngStream child(0);
        child.state_ = splitmix64(state_ ^ splitmix64(tag ^ 0x3C6EF372FE94F82AULL));
        return child;
    }

    RngStream derived(std::string_view name) const { return derived(fnv1a64(name)); }

    std::uint64_t value() const { return state_; }

    std::mt19937_64 engine() const { return std::mt19937_64(state_); }

private:
    std::uint64_t state_;
};

// Uniform double in [0, 1) with 53 random bits.
inline double uniform01(std::mt19937_64& eng) {
    return static_cast<double>(eng() >> 11) * 0x1.0p-53;
}

} // namespace opetsim
