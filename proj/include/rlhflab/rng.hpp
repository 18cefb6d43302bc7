#pragma once

#include <cmath>
#include <cstdint>
#include <random>
#include <string_view>

namespace rlhflab {

namespace detail {

inline std::uint64_t splitmix64(std::uint64_t x) {
    x += 0x9e3779b97f4a7c15ULL;
    x = (x ^ (x >> 30)) * 0xbf58476d1ce4e5b9ULL;
    x = (x ^ (x >> 27)) * 0x94d049bb133111ebULL;
    return x ^ (x >> 31);
}

inline std::uint64_t fnv1a64(std::string_view s) {
    std::uint64_t h = 0xcbf29ce484222325ULL;
    for (unsigned char c : s) {
        h ^= c;
        h *= 0x100000001b3ULL;
    }
    return h;
}

inline std::uint64_t mix(std::uint64_t a, std::uint64_t b) {
    return splitmix64(a ^ (b + 0x9e3779b97f4a7c15ULL + (a << 6) + (a >> 2)));
}

}  // namespace detail

// Deterministic random stream. All draws are built directly on the mt19937_64
// word sequence, so results are identical on every standard library.
class RngStream {
public:
    explicit RngStream(std::uint64_t seed)
        : engine_(detail::splitmix64(detail::splitmix64(seed))) {}

    std::uint64_t next_u64() { return engine_(); }

    // Uniform in [0, 1) with 53 random bits.
    double uniform01() {
        return static_cast<double>(engine_() >> 11) * 0x1.0p-53;
    }

    // Unbiased uniform integer in [0, n).
    std::uint64_t uniform_int(std::uint64_t n) {
        const std::uint64_t threshold = (0 - n) % n;  // 2^64 mod n
        for (;;) {
            const std::uint64_t r = engine_();
            if (r >= threshold) return r % n;
        }
    }

    bool bernoulli(double p) { return uniform01() < p; }

    // Standard normal via Box-Muller, one spare cached.
    double gaussian() {
        if (has_spare_) {
            has_spare_ = false;
            return spare_;
        }
        double u1 = uniform01();
        if (u1 <= 0.0) u1 = 0x1.0p-53;
        const double u2 = uniform01();
        const double r = std::sqrt(-2.0 * std::log(u1));
        const double a = 6.283185307179586476925286766559 * u2;
        spare_ = r * std::sin(a);
        has_spare_ = true;
        return r * std::cos(a);
    }

private:
    std::mt19937_64 engine_;
    double spare_ = 0.0;
    bool has_spare_ = false;
};

// Keyed seed splitter. A master seed expands into named sub-streams
// ("corpus", "choice", ...) and indexed children (batch, prompt, sample),
// so independent components draw from independent, replayable streams
// regardless of evaluation order.
class SeedTree {
public:
    explicit SeedTree(std::uint64_t master) : state_(detail::splitmix64(master)) {}

    SeedTree child(std::string_view name) const {
        return SeedTree(detail::mix(state_, detail::fnv1a64(name)), Tag{});
    }

    SeedTree child(std::uint64_t index) const {
        return SeedTree(detail::mix(state_, detail::splitmix64(index + 1)), Tag{});
    }

    RngStream stream() const { return RngStream(state_); }

    std::uint64_t raw() const { return state_; }

private:
    struct Tag {};
    SeedTree(std::uint64_t s, Tag) : state_(s) {}
    std::uint64_t state_;
};

}  // namespace rlhflab
