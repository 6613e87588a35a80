#include "uwdiff/rng.hpp"

#include <cmath>
#include <numbers>

#include "uwdiff/error.hpp"

namespace uwdiff {

namespace {

constexpr uint64_t kGolden = 0x9E3779B97F4A7C15ull;

// SplitMix64 finalizer (Steele, Lea, Flood 2014).
uint64_t mix64(uint64_t z) {
    z = (z ^ (z >> 30)) * 0xBF58476D1CE4E5B9ull;
    z = (z ^ (z >> 27)) * 0x94D049BB133111EBull;
    return z ^ (z >> 31);
}

}  // namespace

SeededRng::SeededRng(uint64_t seed) : seed_(seed), state_(seed) {}

uint64_t SeededRng::next_u64() {
    state_ += kGolden;
    return mix64(state_);
}

double SeededRng::next_double() {
    return static_cast<double>(next_u64() >> 11) * 0x1.0p-53;
}

double SeededRng::uniform(double lo, double hi) {
    return lo + (hi - lo) * next_double();
}

int64_t SeededRng::uniform_int(int64_t lo, int64_t hi) {
    if (hi < lo) throw ConfigError("uniform_int: empty range");
    const uint64_t span = static_cast<uint64_t>(hi - lo) + 1;
    // Modulo bias is < 2^-53 for the ranges used here; kept for platform
    // determinism.
    return lo + static_cast<int64_t>(span == 0 ? next_u64() : next_u64() % span);
}

double SeededRng::normal() {
    // Box-Muller, cosine branch only. u1 is shifted away from zero.
    const double u1 = (static_cast<double>(next_u64() >> 11) + 1.0) * 0x1.0p-53;
    const double u2 = next_double();
    return std::sqrt(-2.0 * std::log(u1)) * std::cos(2.0 * std::numbers::pi * u2);
}

bool SeededRng::bernoulli(double p) {
    return next_double() < p;
}

std::vector<size_t> SeededRng::permutation(size_t n) {
    std::vector<size_t> idx(n);
    for (size_t i = 0; i < n; ++i) idx[i] = i;
    for (size_t i = n; i > 1; --i) {
        const size_t j = static_cast<size_t>(uniform_int(0, static_cast<int64_t>(i) - 1));
        std::swap(idx[i - 1], idx[j]);
    }
    return idx;
}

std::vector<size_t> SeededRng::sample_without_replacement(size_t n, size_t k) {
    if (k > n) throw ConfigError("sample_without_replacement: k > n");
    auto perm = permutation(n);
    perm.resize(k);
    return perm;
}

SeededRng SeededRng::substream(uint64_t index) const {
    return SeededRng(mix64(mix64(seed_ + kGolden * (index + 1))));
}

uint64_t derive_seed(uint64_t root, uint64_t purpose, uint64_t index) {
    return mix64(mix64(root + kGolden * (purpose + 1)) + kGolden * (index + 1));
}

}  // namespace uwdiff
