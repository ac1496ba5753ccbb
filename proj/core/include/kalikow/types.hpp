#pragma once

#include <compare>
#include <cstddef>
#include <cstdint>
#include <functional>
#include <stdexcept>
#include <string>

namespace kalikow {

/// Opaque, totally ordered neuron identifier.
struct NeuronId {
    std::int64_t value = 0;

    constexpr NeuronId() = default;
    constexpr explicit NeuronId(std::int64_t v) : value(v) {}

    friend constexpr auto operator<=>(NeuronId, NeuronId) = default;
    friend constexpr bool operator==(NeuronId, NeuronId) = default;
};

/// A space-time coordinate. Inside a neighborhood `time` is relative and
/// strictly negative; elsewhere it is an absolute time index.
struct Site {
    NeuronId neuron;
    std::int64_t time = 0;

    friend constexpr auto operator<=>(const Site&, const Site&) = default;
    friend constexpr bool operator==(const Site&, const Site&) = default;
};

inline std::uint64_t mix64(std::uint64_t x) {
    x ^= x >> 30;
    x *= 0xbf58476d1ce4e5b9ULL;
    x ^= x >> 27;
    x *= 0x94d049bb133111ebULL;
    x ^= x >> 31;
    return x;
}

struct SiteHash {
    std::size_t operator()(const Site& s) const noexcept {
        return static_cast<std::size_t>(
            mix64(static_cast<std::uint64_t>(s.neuron.value) * 0x9e3779b97f4a7c15ULL ^
                  static_cast<std::uint64_t>(s.time)));
    }
};

// Error hierarchy. Contract violations signal caller bugs; the others are
// recoverable conditions the CLI maps onto exit codes.

struct ContractViolation : std::invalid_argument {
    using std::invalid_argument::invalid_argument;
};

struct ModelError : std::runtime_error {
    using std::runtime_error::runtime_error;
};

struct RunawayGenealogy : std::runtime_error {
    using std::runtime_error::runtime_error;
};

struct HorizonError : std::runtime_error {
    using std::runtime_error::runtime_error;
};

struct UnsupportedModel : std::runtime_error {
    using std::runtime_error::runtime_error;
};

struct ConfigError : std::runtime_error {
    using std::runtime_error::runtime_error;
};

}  // namespace kalikow

template <>
struct std::hash<kalikow::NeuronId> {
    std::size_t operator()(kalikow::NeuronId n) const noexcept {
        return static_cast<std::size_t>(kalikow::mix64(static_cast<std::uint64_t>(n.value)));
    }
};
