#pragma once

#include <cmath>
#include <cstdint>
#include <random>
#include <string>

namespace pcnn {

/// splitmix64 finalizer; used to derive well-separated seeds from (seed, tag) pairs.
inline std::uint64_t mix64(std::uint64_t z) {
    z += 0x9e3779b97f4a7c15ULL;
    z = (z ^ (z >> 30)) * 0xbf58476d1ce4e5b9ULL;
    z = (z ^ (z >> 27)) * 0x94d049bb133111ebULL;
    return z ^ (z >> 31);
}

inline std::uint64_t hash_str(const std::string& s) {
    // FNV-1a
    std::uint64_t h = 0xcbf29ce484222325ULL;
    for (unsigned char c : s) {
        h ^= c;
        h *= 0x100000001b3ULL;
    }
    return h;
}

/// Deterministic random stream. All distributions are implemented in-house so
/// that byte-identical sequences are produced on every platform and stdlib.
class Rng {
public:
    explicit Rng(std::uint64_t seed) : engine_(seed) {}

    /// Child stream addressed by name (and optional index). Independent of the
    /// parent's consumption state by construction.
    static Rng stream(std::uint64_t seed, const std::string& name, std::uint64_t index = 0) {
        return Rng(mix64(mix64(seed ^ hash_str(name)) + index));
    }

    std::uint64_t next_u64() { return engine_(); }

    /// Uniform on [0, 1) with 53-bit resolution.
    double uniform() { return double(engine_() >> 11) * 0x1.0p-53; }

    double uniform(double lo, double hi) { return lo + (hi - lo) * uniform(); }

    /// Uniform integer in [0, n).
    std::uint64_t below(std::uint64_t n) {
        // modulo with rejection to avoid bias
        const std::uint64_t limit = UINT64_MAX - UINT64_MAX % n;
        std::uint64_t v = engine_();
        while (v >= limit) v = engine_();
        return v % n;
    }

    int range_int(int lo, int hi) { // inclusive bounds
        return lo + int(below(std::uint64_t(hi - lo + 1)));
    }

    /// Standard normal via Box-Muller (one of the pair; partner cached).
    double normal() {
        if (have_cached_) {
            have_cached_ = false;
            return cached_;
        }
        double u = 0.0;
        while (u == 0.0) u = uniform();
        double r = std::sqrt(-2.0 * std::log(u));
        double theta = 6.283185307179586476925286766559 * uniform();
        cached_ = r * std::sin(theta);
        have_cached_ = true;
        return r * std::cos(theta);
    }

    double normal(double mean, double stddev) { return mean + stddev * normal(); }

    /// Laplace with location 0 and the given scale.
    double laplace(double scale) {
        double u = uniform() - 0.5;
        double s = u < 0 ? -1.0 : 1.0;
        double a = std::abs(u);
        if (a >= 0.5) a = 0.49999999999999994; // guard log(0)
        return -scale * s * std::log(1.0 - 2.0 * a);
    }

private:
    std::mt19937_64 engine_;
    double cached_ = 0.0;
    bool have_cached_ = false;
};

} // namespace pcnn
