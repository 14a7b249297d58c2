#pragma once

#include <array>
#include <cmath>
#include <cstdint>
#include <numbers>

#include "bsdelab/errors.hpp"

namespace bsdelab {

/// Philox-4x32-10 counter-based generator block function.
/// A block is a pure function of (key, counter), which gives every path its
/// own stream: draws do not depend on evaluation order or thread layout.
struct Philox4x32 {
    static constexpr std::uint32_t kMul0 = 0xD2511F53u;
    static constexpr std::uint32_t kMul1 = 0xCD9E8D57u;
    static constexpr std::uint32_t kWeyl0 = 0x9E3779B9u;
    static constexpr std::uint32_t kWeyl1 = 0xBB67AE85u;

    static std::array<std::uint32_t, 4> block(std::uint64_t key, std::uint64_t ctr_hi,
                                              std::uint64_t ctr_lo) {
        std::uint32_t k0 = static_cast<std::uint32_t>(key);
        std::uint32_t k1 = static_cast<std::uint32_t>(key >> 32);
        std::array<std::uint32_t, 4> c{static_cast<std::uint32_t>(ctr_lo),
                                       static_cast<std::uint32_t>(ctr_lo >> 32),
                                       static_cast<std::uint32_t>(ctr_hi),
                                       static_cast<std::uint32_t>(ctr_hi >> 32)};
        for (int round = 0; round < 10; ++round) {
            const std::uint64_t p0 = static_cast<std::uint64_t>(kMul0) * c[0];
            const std::uint64_t p1 = static_cast<std::uint64_t>(kMul1) * c[2];
            c = {static_cast<std::uint32_t>(p1 >> 32) ^ c[1] ^ k0,
                 static_cast<std::uint32_t>(p1),
                 static_cast<std::uint32_t>(p0 >> 32) ^ c[3] ^ k1,
                 static_cast<std::uint32_t>(p0)};
            k0 += kWeyl0;
            k1 += kWeyl1;
        }
        return c;
    }
};

/// Mixes (seed, index, tag) into a 64-bit value; used to derive per-node seeds.
inline std::uint64_t mix_seed(std::uint64_t seed, std::uint64_t index, std::uint64_t tag = 0) {
    std::uint64_t z = seed + 0x9E3779B97F4A7C15ull * (index + 1) + 0xBF58476D1CE4E5B9ull * (tag + 1);
    z = (z ^ (z >> 30)) * 0xBF58476D1CE4E5B9ull;
    z = (z ^ (z >> 27)) * 0x94D049BB133111EBull;
    return z ^ (z >> 31);
}

/// Per-path random stream keyed by (seed, path index).
/// The same (seed, path) always replays the identical sequence.
class PathRng {
public:
    PathRng(std::uint64_t seed, std::uint64_t path) : seed_(seed), path_(path) {}

    /// Uniform on [0, 1).
    double uniform() {
        const std::uint64_t bits = next_u64();
        return static_cast<double>(bits >> 11) * 0x1.0p-53;
    }

    /// Uniform on (0, 1]; safe under log().
    double uniform_open() { return 1.0 - uniform(); }

    /// Standard normal via Box-Muller; generates pairs, caches the second.
    double normal() {
        if (have_cached_) {
            have_cached_ = false;
            return cached_;
        }
        const double u1 = uniform_open();
        const double u2 = uniform();
        const double r = std::sqrt(-2.0 * std::log(u1));
        const double a = 2.0 * std::numbers::pi * u2;
        cached_ = r * std::sin(a);
        have_cached_ = true;
        return r * std::cos(a);
    }

    double exponential() { return -std::log(uniform_open()); }

    /// Poisson count by Knuth's product method; intended for small means.
    unsigned poisson(double mean) {
        if (mean < 0.0) throw domain_error("PathRng::poisson: negative mean");
        if (mean == 0.0) return 0;
        const double limit = std::exp(-mean);
        unsigned k = 0;
        double prod = 1.0;
        do {
            ++k;
            prod *= uniform_open();
        } while (prod > limit);
        return k - 1;
    }

    /// Symmetric alpha-stable variate, Chambers-Mallows-Stuck construction.
    /// Unit scale: characteristic function exp(-|xi|^alpha). At alpha = 2 the
    /// formula degenerates to 2*sqrt(W)*sin(Theta), a N(0,2) draw.
    double stable_symmetric(double alpha) {
        if (alpha <= 0.0 || alpha > 2.0)
            throw domain_error("PathRng::stable_symmetric: alpha outside (0,2]");
        const double theta = std::numbers::pi * (uniform() - 0.5);
        const double w = exponential();
        if (alpha == 1.0) return std::tan(theta);
        const double s = std::sin(alpha * theta) / std::pow(std::cos(theta), 1.0 / alpha);
        const double tail = std::pow(std::cos((1.0 - alpha) * theta) / w, (1.0 - alpha) / alpha);
        return s * tail;
    }

private:
    std::uint64_t next_u64() {
        if (word_ >= 4) {
            block_ = Philox4x32::block(seed_, path_, counter_++);
            word_ = 0;
        }
        const std::uint64_t lo = block_[word_];
        const std::uint64_t hi = block_[word_ + 1];
        word_ += 2;
        return (hi << 32) | lo;
    }

    std::uint64_t seed_;
    std::uint64_t path_;
    std::uint64_t counter_ = 0;
    std::array<std::uint32_t, 4> block_{};
    int word_ = 4;
    bool have_cached_ = false;
    double cached_ = 0.0;
};

}  // namespace bsdelab
