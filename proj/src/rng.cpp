#include "pdeopt/rng.hpp"

#include <cmath>
#include <numbers>

namespace pdeopt {

std::uint64_t fnv1a(std::string_view s) {
    std::uint64_t h = 0xcbf29ce484222325ull;
    for (unsigned char c : s) {
        h ^= c;
        h *= 0x100000001b3ull;
    }
    return h;
}

std::uint64_t splitmix64(std::uint64_t x) {
    x += 0x9e3779b97f4a7c15ull;
    x = (x ^ (x >> 30)) * 0xbf58476d1ce4e5b9ull;
    x = (x ^ (x >> 27)) * 0x94d049bb133111ebull;
    return x ^ (x >> 31);
}

Rng Rng::derive(std::string_view purpose) const {
    return Rng(splitmix64(seed_ ^ fnv1a(purpose)));
}

double Rng::normal() {
    // Box-Muller; u clamped away from 0 so log stays finite.
    double u = uniform();
    if (u < 0x1.0p-53) u = 0x1.0p-53;
    const double v = uniform();
    return std::sqrt(-2.0 * std::log(u)) * std::cos(2.0 * std::numbers::pi * v);
}

}  // namespace pdeopt
