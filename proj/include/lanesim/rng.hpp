#pragma once

#include <cmath>
#include <cstdint>
#include <string_view>

namespace lanesim {

// Counter-based SplitMix64 stream. Two words of state, so checkpoints can
// capture and restore it exactly; every component gets its own named stream
// derived from the master seed, keeping ablations from perturbing each other's
// randomness.
class Rng {
  public:
    Rng() = default;
    explicit Rng(std::uint64_t key, std::uint64_t counter = 0)
        : key_(key), counter_(counter) {}

    // Independent stream for (master_seed, name).
    static Rng stream(std::uint64_t master_seed, std::string_view name) {
        std::uint64_t h = 1469598103934665603ull; // FNV-1a offset basis
        for (char c : name) {
            h ^= static_cast<unsigned char>(c);
            h *= 1099511628211ull;
        }
        return Rng(mix(mix(master_seed + 0x9e3779b97f4a7c15ull) ^ h));
    }

    std::uint64_t next_u64() {
        counter_ += 1;
        return mix(key_ + counter_ * 0x9e3779b97f4a7c15ull);
    }

    // Uniform in [0, 1).
    double uniform() { return static_cast<double>(next_u64() >> 11) * 0x1.0p-53; }

    double uniform(double lo, double hi) { return lo + (hi - lo) * uniform(); }

    // Uniform integer in [0, n); n > 0.
    int uniform_int(int n) {
        return static_cast<int>(
            (static_cast<unsigned __int128>(next_u64()) * static_cast<std::uint64_t>(n)) >> 64);
    }

    // Standard normal via Box-Muller; always consumes exactly two uniforms.
    double normal() {
        double u1 = 1.0 - uniform(); // (0, 1]
        double u2 = uniform();
        return std::sqrt(-2.0 * std::log(u1)) * std::cos(6.283185307179586476925286766559 * u2);
    }

    std::uint64_t key() const { return key_; }
    std::uint64_t counter() const { return counter_; }

  private:
    static std::uint64_t mix(std::uint64_t z) {
        z ^= z >> 30;
        z *= 0xbf58476d1ce4e5b9ull;
        z ^= z >> 27;
        z *= 0x94d049bb133111ebull;
        z ^= z >> 31;
        return z;
    }

    std::uint64_t key_ = 0;
    std::uint64_t counter_ = 0;
};

} // namespace lanesim
