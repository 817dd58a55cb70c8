#pragma once

#include <cstdint>
#include <random>
#include <string_view>

namespace pdeopt {

// Deterministic random streams. The engine is std::mt19937_64 (exactly
// specified by the standard), and all mappings from raw 64-bit draws to
// doubles are implemented here rather than through std::*_distribution,
// whose output is implementation-defined. Identical seeds therefore give
// identical streams on every platform.
//
// Independent sub-streams are derived by hashing a purpose string into the
// parent seed: child_seed = splitmix64(seed ^ fnv1a(purpose)).
class Rng {
public:
    explicit Rng(std::uint64_t seed) : seed_(seed), eng_(seed) {}

    std::uint64_t seed() const { return seed_; }
    static constexpr const char* algorithm() { return "mt19937_64/boxmuller"; }

    // Child stream for an independent purpose.
    Rng derive(std::string_view purpose) const;

    std::uint64_t next_u64() { return eng_(); }

    // Uniform on [0,1), 53-bit resolution.
    double uniform() { return static_cast<double>(eng_() >> 11) * 0x1.0p-53; }

    double uniform(double lo, double hi) { return lo + (hi - lo) * uniform(); }

    // Uniform integer in [0, n).
    std::uint64_t below(std::uint64_t n) { return eng_() % n; }

    // Standard normal via Box-Muller; one value per call (no cached spare,
    // so the stream position is easy to reason about).
    double normal();

private:
    std::uint64_t seed_;
    std::mt19937_64 eng_;
};

std::uint64_t fnv1a(std::string_view s);
std::uint64_t splitmix64(std::uint64_t x);

}  // namespace pdeopt
