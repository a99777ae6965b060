#include "sublab/core.hpp"

#include <cmath>
#include <numbers>

namespace sublab {

std::uint64_t Rng::mix(std::uint64_t z) {
    z = (z ^ (z >> 30)) * 0xbf58476d1ce4e5b9ULL;
    z = (z ^ (z >> 27)) * 0x94d049bb133111ebULL;
    return z ^ (z >> 31);
}

std::uint64_t Rng::next_u64() {
    ++counter_;
    return mix(key_ + counter_ * 0x9e3779b97f4a7c15ULL);
}

double Rng::uniform() {
    // 53 random bits, shifted off zero
    return (static_cast<double>(next_u64() >> 11) + 0.5) * 0x1.0p-53;
}

double Rng::normal() {
    const double u1 = uniform();
    const double u2 = uniform();
    return std::sqrt(-2.0 * std::log(u1)) * std::cos(2.0 * std::numbers::pi * u2);
}

std::uint64_t Rng::derive(std::uint64_t base, std::initializer_list<std::uint64_t> tags) {
    std::uint64_t h = mix(base + 0x9e3779b97f4a7c15ULL);
    for (auto t : tags) h = mix(h ^ mix(t + 0x632be59bd9b4e019ULL));
    return h;
}

}  // namespace sublab
