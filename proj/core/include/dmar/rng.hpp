#pragma once

#include <cmath>
#include <cstdint>
#include <numbers>
#include <random>

namespace dmar {

/// SplitMix64 finalizer; a bijective 64-bit mixer.
constexpr std::uint64_t mix64(std::uint64_t x) noexcept {
    x += 0x9E3779B97F4A7C15ULL;
    x = (x ^ (x >> 30)) * 0xBF58476D1CE4E5B9ULL;
    x = (x ^ (x >> 27)) * 0x94D049BB133111EBULL;
    return x ^ (x >> 31);
}

/// Maps 64 random bits to a double in (0, 1).
constexpr double bits_to_open_unit(std::uint64_t bits) noexcept {
    return (static_cast<double>(bits >> 11) + 0.5) * 0x1.0p-53;
}

/// Counter-based generator: every draw is a pure function of its key, so
/// results do not depend on evaluation order or thread schedule.
class CounterRng {
public:
    constexpr explicit CounterRng(std::uint64_t seed, std::uint64_t stream = 0) noexcept
        : key_(mix64(mix64(seed) ^ (stream * 0xD1B54A32D192ED03ULL))) {}

    constexpr std::uint64_t bits(std::uint64_t a, std::uint64_t b, std::uint64_t draw = 0) const noexcept {
        std::uint64_t h = mix64(key_ ^ a);
        h = mix64(h ^ (b + 0x632BE59BD9B4E019ULL));
        return mix64(h ^ (draw * 0x9E3779B97F4A7C15ULL + 0x1234567ULL));
    }

    double uniform(std::uint64_t a, std::uint64_t b, std::uint64_t draw = 0) const noexcept {
        return bits_to_open_unit(bits(a, b, draw));
    }

    /// Standard normal via Box-Muller on draws (2k, 2k+1).
    double normal(std::uint64_t a, std::uint64_t b, std::uint64_t k = 0) const noexcept {
        const double u1 = uniform(a, b, 2 * k);
        const double u2 = uniform(a, b, 2 * k + 1);
        return std::sqrt(-2.0 * std::log(u1)) * std::cos(2.0 * std::numbers::pi * u2);
    }

private:
    std::uint64_t key_;
};

/// Sequential seeded generator with portable distributions (the std
/// distributions are implementation-defined, which would break bit-exact
/// regeneration across standard libraries).
class SeqRng {
public:
    explicit SeqRng(std::uint64_t seed) : engine_(mix64(seed)) {}

    std::uint64_t bits() { return engine_(); }
    double uniform() { return bits_to_open_unit(engine_()); }
    double uniform(double lo, double hi) { return lo + (hi - lo) * uniform(); }

    /// Integer in [lo, hi].
    long long integer(long long lo, long long hi) {
        const auto span = static_cast<std::uint64_t>(hi - lo) + 1;
        return lo + static_cast<long long>(engine_() % span);
    }

    double normal() {
        const double u1 = uniform();
        const double u2 = uniform();
        return std::sqrt(-2.0 * std::log(u1)) * std::cos(2.0 * std::numbers::pi * u2);
    }

private:
    std::mt19937_64 engine_;
};

}  // namespace dmar
