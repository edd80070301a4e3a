#pragma once

#include <cmath>
#include <cstdint>
#include <numbers>
#include <string_view>

namespace vlcabs {

// Deterministic seeded RNG (splitmix64 core, Box-Muller normals).
// All randomness in the project flows from one master seed through named
// sub-streams, so repeated runs are bit-identical regardless of platform
// or standard-library version.
class Rng {
public:
    explicit Rng(std::uint64_t seed) : master_(seed), state_(seed) {}

    std::uint64_t next_u64() {
        state_ += 0x9E3779B97F4A7C15ULL;
        std::uint64_t z = state_;
        z = (z ^ (z >> 30)) * 0xBF58476D1CE4E5B9ULL;
        z = (z ^ (z >> 27)) * 0x94D049BB133111EBULL;
        return z ^ (z >> 31);
    }

    // uniform in [0, 1)
    double next_double() {
        return static_cast<double>(next_u64() >> 11) * 0x1.0p-53;
    }

    // uniform in [lo, hi)
    double next_uniform(double lo, double hi) {
        return lo + (hi - lo) * next_double();
    }

    // integer in [0, n)
    std::uint64_t next_below(std::uint64_t n) {
        return n == 0 ? 0 : next_u64() % n;
    }

    // standard normal via Box-Muller (second value cached)
    double next_normal() {
        if (have_cached_) {
            have_cached_ = false;
            return cached_;
        }
        double u1 = next_double();
        double u2 = next_double();
        if (u1 <= 0.0) u1 = 0x1.0p-53;
        const double r = std::sqrt(-2.0 * std::log(u1));
        const double angle = 2.0 * std::numbers::pi * u2;
        cached_ = r * std::sin(angle);
        have_cached_ = true;
        return r * std::cos(angle);
    }

    // Independent stream derived from the master seed, a label, and an
    // index. Derivation ignores how much this instance has been consumed.
    Rng substream(std::string_view name, std::uint64_t index = 0) const {
        std::uint64_t h = 0xCBF29CE484222325ULL;  // FNV-1a
        for (char c : name) {
            h ^= static_cast<std::uint8_t>(c);
            h *= 0x100000001B3ULL;
        }
        std::uint64_t s = master_ ^ h;
        s += 0x9E3779B97F4A7C15ULL * (index + 1);
        Rng child(s);
        child.next_u64();  // decorrelate nearby seeds
        return Rng(child.next_u64());
    }

    std::uint64_t master_seed() const { return master_; }

private:
    std::uint64_t master_ = 0;
    std::uint64_t state_ = 0;
    double cached_ = 0.0;
    bool have_cached_ = false;
};

}  // namespace vlcabs
