#pragma once

#include <cstdint>
#include <vector>

namespace uwdiff {

// Counter-based deterministic generator built on the SplitMix64 finalizer.
// Draw sequences depend only on integer arithmetic, so identical seeds give
// identical sequences on every platform. Substreams are derived from the
// root seed (not the current state), so per-image/per-step streams are
// order-independent.
class SeededRng {
public:
    explicit SeededRng(uint64_t seed);

    uint64_t next_u64();

    // Uniform in [0,1), 53-bit resolution.
    double next_double();

    double uniform(double lo, double hi);

    // Inclusive on both ends.
    int64_t uniform_int(int64_t lo, int64_t hi);

    // Standard normal via Box-Muller (two uniforms per draw, no caching, so
    // the state is a single counter).
    double normal();

    bool bernoulli(double p);

    // Fisher-Yates permutation of 0..n-1.
    std::vector<size_t> permutation(size_t n);

    // Draw k distinct indices from 0..n-1 (order unspecified but deterministic).
    std::vector<size_t> sample_without_replacement(size_t n, size_t k);

    // Independent stream derived from (root seed, index).
    SeededRng substream(uint64_t index) const;

    uint64_t seed() const { return seed_; }
    uint64_t state() const { return state_; }
    void set_state(uint64_t s) { state_ = s; }

private:
    uint64_t seed_;
    uint64_t state_;
};

// Stateless seed derivation used for per-purpose streams, e.g.
// derive_seed(root, kStreamBatch, step). Purpose tags below keep the
// training, refresh and corruption streams disjoint.
uint64_t derive_seed(uint64_t root, uint64_t purpose, uint64_t index);

inline constexpr uint64_t kStreamCorrupt = 1;
inline constexpr uint64_t kStreamBatch = 2;
inline constexpr uint64_t kStreamRefresh = 3;
inline constexpr uint64_t kStreamInit = 4;
inline constexpr uint64_t kStreamSample = 5;
inline constexpr uint64_t kStreamToygen = 6;

}  // namespace uwdiff
