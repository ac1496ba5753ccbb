#pragma once

#include <array>
#include <cstdint>

#include "kalikow/types.hpp"

namespace kalikow {

/// Philox4x32-10 counter-based bijection (Salmon et al. 2011).
/// Stateless: output depends only on (counter, key).
class Philox4x32 {
public:
    using Counter = std::array<std::uint32_t, 4>;
    using Key = std::array<std::uint32_t, 2>;

    static constexpr Counter apply(Counter ctr, Key key) {
        for (int round = 0; round < 10; ++round) {
            if (round > 0) {
                key[0] += kWeyl0;
                key[1] += kWeyl1;
            }
            const std::uint64_t p0 = std::uint64_t{kMul0} * ctr[0];
            const std::uint64_t p1 = std::uint64_t{kMul1} * ctr[2];
            const auto hi0 = static_cast<std::uint32_t>(p0 >> 32);
            const auto lo0 = static_cast<std::uint32_t>(p0);
            const auto hi1 = static_cast<std::uint32_t>(p1 >> 32);
            const auto lo1 = static_cast<std::uint32_t>(p1);
            ctr = {hi1 ^ ctr[1] ^ key[0], lo1, hi0 ^ ctr[3] ^ key[1], lo0};
        }
        return ctr;
    }

private:
    static constexpr std::uint32_t kMul0 = 0xD2511F53u;
    static constexpr std::uint32_t kMul1 = 0xCD9E8D57u;
    static constexpr std::uint32_t kWeyl0 = 0x9E3779B9u;
    static constexpr std::uint32_t kWeyl1 = 0xBB67AE85u;
};

/// Independent uniform fields indexed by sites.
enum class Stream : std::uint32_t {
    genealogy = 1,  // U1: neighborhood draws
    forward = 2,    // U2: spike decisions
    replica = 3,    // per-replica seed derivation
    auxiliary = 4,  // test/diagnostic draws (pilot runs, random configs)
};

/// Maps 64 random bits to a double strictly inside (0, 1).
inline double to_unit_open(std::uint64_t bits) {
    return (static_cast<double>(bits >> 11) + 0.5) * 0x1.0p-53;
}

inline std::uint64_t site_bits(std::uint64_t seed, Stream stream, std::int64_t neuron,
                               std::int64_t time) {
    const auto n = static_cast<std::uint64_t>(neuron);
    const auto t = static_cast<std::uint64_t>(time);
    const Philox4x32::Counter ctr{static_cast<std::uint32_t>(n), static_cast<std::uint32_t>(n >> 32),
                                  static_cast<std::uint32_t>(t), static_cast<std::uint32_t>(t >> 32)};
    const Philox4x32::Key key{static_cast<std::uint32_t>(seed) ^ (static_cast<std::uint32_t>(stream) << 28),
                              static_cast<std::uint32_t>(seed >> 32) ^ static_cast<std::uint32_t>(stream)};
    const auto out = Philox4x32::apply(ctr, key);
    return (std::uint64_t{out[0]} << 32) | out[1];
}

/// U^{stream}_{neuron,time} for the given seed.
inline double site_uniform(std::uint64_t seed, Stream stream, Site site) {
    return to_unit_open(site_bits(seed, stream, site.neuron.value, site.time));
}

/// Seed of replica `index` derived from `base`; replicas are independent
/// and the mapping is order-free.
inline std::uint64_t replica_seed(std::uint64_t base, std::uint64_t index) {
    return site_bits(base, Stream::replica, static_cast<std::int64_t>(index), 0);
}

/// Small sequential generator over a counter-based stream, for places that
/// want a classic draw-next interface (random test configurations, pilots).
class CounterRng {
public:
    explicit CounterRng(std::uint64_t seed, std::int64_t lane = 0) : seed_(seed), lane_(lane) {}

    std::uint64_t next_bits() { return site_bits(seed_, Stream::auxiliary, lane_, counter_++); }
    double uniform() { return to_unit_open(next_bits()); }
    int bernoulli(double p) { return uniform() <= p ? 1 : 0; }

private:
    std::uint64_t seed_;
    std::int64_t lane_;
    std::int64_t counter_ = 0;
};

}  // namespace kalikow
