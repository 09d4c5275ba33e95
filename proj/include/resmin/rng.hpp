#pragma once

// Counter-based random numbers: value k of stream (seed, stream) is a pure
// function of (seed, stream, k), so draws are reproducible and independent of
// evaluation order.

#include <cmath>
#include <cstdint>
#include <numbers>
#include <vector>

namespace resmin {

class CounterRng {
public:
    CounterRng(std::uint64_t seed, std::uint64_t stream = 0) : seed_(seed), stream_(stream) {}

    static std::uint64_t mix(std::uint64_t z) noexcept {
        z += 0x9e3779b97f4a7c15ULL;
        z = (z ^ (z >> 30)) * 0xbf58476d1ce4e5b9ULL;
        z = (z ^ (z >> 27)) * 0x94d049bb133111ebULL;
        return z ^ (z >> 31);
    }

    std::uint64_t bits(std::uint64_t counter) const noexcept {
        return mix(mix(seed_ ^ mix(stream_ + 0x632be59bd9b4e019ULL)) ^ counter);
    }

    /// Uniform on the open interval (0, 1).
    double uniform(std::uint64_t counter) const noexcept {
        return (static_cast<double>(bits(counter) >> 11) + 0.5) * 0x1.0p-53;
    }

    /// Standard normal via Box-Muller; uses counters 2k and 2k+1.
    double normal(std::uint64_t k) const noexcept {
        const double u1 = uniform(2 * k);
        const double u2 = uniform(2 * k + 1);
        return std::sqrt(-2.0 * std::log(u1)) * std::cos(2.0 * std::numbers::pi * u2);
    }

    /// Sequential convenience interface.
    double next_normal() noexcept { return normal(position_++); }
    double next_uniform() noexcept { return uniform(position_++); }

    std::vector<double> normal_vector(std::size_t n) {
        std::vector<double> out(n);
        for (auto& v : out) v = next_normal();
        return out;
    }

private:
    std::uint64_t seed_;
    std::uint64_t stream_;
    std::uint64_t position_ = 0;
};

} // namespace resmin
