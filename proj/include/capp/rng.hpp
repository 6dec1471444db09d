#pragma once

// Deterministic randomness helpers. std::mt19937_64 is fully specified by the
// standard, but the std distributions are not, so every draw that must be
// reproducible across platforms goes through the functions below.

#include <cmath>
#include <cstdint>
#include <random>
#include <stdexcept>
#include <vector>

namespace capp::rng {

inline std::uint64_t splitmix64(std::uint64_t x) {
    x += 0x9e3779b97f4a7c15ULL;
    x = (x ^ (x >> 30)) * 0xbf58476d1ce4e5b9ULL;
    x = (x ^ (x >> 27)) * 0x94d049bb133111ebULL;
    return x ^ (x >> 31);
}

inline std::uint64_t mix_seed(std::uint64_t a, std::uint64_t b) {
    return splitmix64(a ^ (b + 0x9e3779b97f4a7c15ULL + (a << 12) + (a >> 4)));
}

// Stage tags keep the streams derived from one experiment seed independent.
enum class SeedTag : std::uint64_t {
    split = 1,
    model_init = 2,
    train = 3,
    oracle_fit = 4,
    select = 5,
    random_arm = 6,
    retrain = 7,
};

// Folds any number of tags into a base seed; used to derive independent
// streams (per cell, per stage, per proportion) from one experiment seed.
template <typename... Tags>
std::uint64_t derive_seed(std::uint64_t base, Tags... tags) {
    std::uint64_t s = splitmix64(base);
    ((s = mix_seed(s, static_cast<std::uint64_t>(tags))), ...);
    return s;
}

using Engine = std::mt19937_64;

inline Engine make_engine(std::uint64_t seed) { return Engine(seed); }

// Uniform integer in [0, n). Modulo bias is below 2^-50 for every n used here.
inline std::size_t uniform_index(Engine& eng, std::size_t n) {
    if (n == 0) throw std::invalid_argument("uniform_index: n must be positive");
    return static_cast<std::size_t>(eng() % n);
}

// Uniform double in [0, 1) with 53 random bits.
inline double uniform_real(Engine& eng) {
    return static_cast<double>(eng() >> 11) * 0x1.0p-53;
}

// Standard normal via Box-Muller; one value per call, no cached spare.
inline double normal(Engine& eng) {
    double u1 = uniform_real(eng);
    double u2 = uniform_real(eng);
    if (u1 < 1e-300) u1 = 1e-300;
    return std::sqrt(-2.0 * std::log(u1)) * std::cos(2.0 * 3.141592653589793238462643383279502884 * u2);
}

// In-place Fisher-Yates.
template <typename T>
void shuffle(std::vector<T>& v, Engine& eng) {
    for (std::size_t i = v.size(); i > 1; --i) {
        std::size_t j = uniform_index(eng, i);
        std::swap(v[i - 1], v[j]);
    }
}

// Seeded permutation of 0..n-1.
inline std::vector<std::size_t> permutation(std::size_t n, Engine& eng) {
    std::vector<std::size_t> p(n);
    for (std::size_t i = 0; i < n; ++i) p[i] = i;
    shuffle(p, eng);
    return p;
}

// k distinct indices drawn from [0, n), in draw order (partial Fisher-Yates).
inline std::vector<std::size_t> sample_without_replacement(std::size_t n, std::size_t k, Engine& eng) {
    if (k > n) throw std::invalid_argument("sample_without_replacement: k > n");
    std::vector<std::size_t> pool(n);
    for (std::size_t i = 0; i < n; ++i) pool[i] = i;
    std::vector<std::size_t> out;
    out.reserve(k);
    for (std::size_t i = 0; i < k; ++i) {
        std::size_t j = i + uniform_index(eng, n - i);
        std::swap(pool[i], pool[j]);
        out.push_back(pool[i]);
    }
    return out;
}

} // namespace capp::rng
