#pragma once

#include <cmath>
#include <cstdint>
#include <numbers>

namespace manifold {

/// Stateless counter-based generator: every variate is a pure function of
/// (seed, stream, counter), so values do not depend on evaluation order.
class CounterRng {
public:
    CounterRng(std::uint64_t seed, std::uint64_t stream) noexcept
        : key_(mix(seed ^ mix(stream + 0x632be59bd9b4e019ULL))) {}

    static constexpr std::uint64_t mix(std::uint64_t z) noexcept {
        z += 0x9e3779b97f4a7c15ULL;
        z = (z ^ (z >> 30)) * 0xbf58476d1ce4e5b9ULL;
        z = (z ^ (z >> 27)) * 0x94d049bb133111ebULL;
        return z ^ (z >> 31);
    }

    std::uint64_t bits(std::uint64_t counter) const noexcept {
        return mix(key_ ^ mix(counter));
    }

    /// Uniform on the open interval (0,1).
    double uniform(std::uint64_t counter) const noexcept {
        return (static_cast<double>(bits(counter) >> 11) + 0.5) * 0x1.0p-53;
    }

    /// Standard normal via Box-Muller on two sub-counters of a signed node index.
    double normal(std::int64_t node) const noexcept {
        const auto c = static_cast<std::uint64_t>(node) * 2;
        const double u1 = uniform(c);
        const double u2 = uniform(c + 1);
        return std::sqrt(-2.0 * std::log(u1)) * std::cos(2.0 * std::numbers::pi * u2);
    }

private:
    std::uint64_t key_;
};

}  // namespace manifold
