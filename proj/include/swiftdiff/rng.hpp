#pragma once

#include <cstdint>
#include <random>
#include <vector>

namespace swiftdiff {

class Tensor;

// Deterministic random stream. mt19937_64 output is pinned by the standard;
// uniform/normal conversions are implemented here (std distributions are
// implementation-defined and would break cross-build reproducibility).
class Rng {
public:
    explicit Rng(uint64_t seed);

    uint64_t next_u64();

    // [0, 1), 53-bit resolution.
    double uniform();
    double uniform(double lo, double hi);

    // Unbiased integer in [0, n).
    int64_t uniform_int(int64_t n);

    // Standard normal via Box-Muller (cached second draw).
    double normal();

    Tensor normal_tensor(const std::vector<int64_t>& shape);

    // Independent child stream; deterministic in (parent seed, stream id).
    Rng spawn(uint64_t stream) const;

    uint64_t seed() const { return seed_; }

private:
    uint64_t seed_;
    std::mt19937_64 gen_;
    bool have_cached_ = false;
    double cached_ = 0.0;
};

// SplitMix64 finalizer; used for seed derivation and stable content hashes.
uint64_t mix64(uint64_t x);

// FNV-1a over raw bytes.
uint64_t fnv1a(const void* data, size_t n, uint64_t h = 1469598103934665603ull);

}  // namespace swiftdiff
