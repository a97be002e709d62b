#pragma once

#include <cmath>
#include <cstdint>
#include <random>

namespace pcreg {

/// Seedable random generator with a fixed, documented algorithm.
///
/// The raw stream is std::mt19937_64, whose output sequence is pinned by the
/// standard, so integer draws reproduce bit-identically everywhere. The
/// floating-point helpers below are implemented here (not via the standard
/// distributions, which are implementation-defined) so that double streams
/// reproduce too:
///   uniform01:  (u64 >> 11) * 2^-53, in [0, 1)
///   normal:     Box-Muller on two uniform01 draws, second value cached
///   below(n):   rejection sampling on the top range, bias-free
/// Derived streams mix (seed, stream index) through splitmix64 so parallel
/// consumers stay independent and scheduling-invariant.
class Rng {
public:
    explicit Rng(std::uint64_t seed) : gen_(seed), seed_(seed) {}

    std::uint64_t seed() const { return seed_; }

    std::uint64_t next_u64() { return gen_(); }

    /// Uniform in [0, 1).
    double uniform01() {
        return static_cast<double>(gen_() >> 11) * 0x1.0p-53;
    }

    /// Uniform in [lo, hi).
    double uniform(double lo, double hi) {
        return lo + (hi - lo) * uniform01();
    }

    /// Standard normal draw.
    double normal() {
        if (has_spare_) {
            has_spare_ = false;
            return spare_;
        }
        // Box-Muller; 1 - u keeps the log argument in (0, 1].
        const double u1 = 1.0 - uniform01();
        const double u2 = uniform01();
        const double r = std::sqrt(-2.0 * std::log(u1));
        const double a = 2.0 * kPi * u2;
        spare_ = r * std::sin(a);
        has_spare_ = true;
        return r * std::cos(a);
    }

    /// Uniform integer in [0, n). n must be positive.
    std::uint64_t below(std::uint64_t n) {
        const std::uint64_t limit = ~std::uint64_t{0} - (~std::uint64_t{0} % n);
        std::uint64_t x;
        do {
            x = gen_();
        } while (x >= limit);
        return x % n;
    }

    /// Independent stream keyed by (seed, stream index).
    Rng derive(std::uint64_t stream) const {
        return Rng(splitmix64(seed_ ^ splitmix64(stream + 0x9e3779b97f4a7c15ull)));
    }

    static std::uint64_t splitmix64(std::uint64_t x) {
        x += 0x9e3779b97f4a7c15ull;
        x = (x ^ (x >> 30)) * 0xbf58476d1ce4e5b9ull;
        x = (x ^ (x >> 27)) * 0x94d049bb133111ebull;
        return x ^ (x >> 31);
    }

private:
    static constexpr double kPi = 3.14159265358979323846;

    std::mt19937_64 gen_;
    std::uint64_t seed_;
    double spare_ = 0.0;
    bool has_spare_ = false;
};

} // namespace pcreg
