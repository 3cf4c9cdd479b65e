#pragma once

#include <cstdint>
#include <vector>

#include "swiftdiff/motion.hpp"

namespace swiftdiff {

// Desk-scale stand-in for a motion-capture corpus: band-limited base motions
// grouped into observation families, each continued by one of n_modes
// distinct low-frequency patterns that blend in smoothly after the
// observation boundary.
struct SyntheticCorpusSpec {
    int64_t joints = 4;
    int64_t observed = 8;
    int64_t future = 16;
    int64_t n_train = 256;
    int64_t n_test = 64;
    int64_t n_modes = 3;
    int64_t n_families = 16;
    int64_t band_limit = 5;     // active DCT rows of the base motion
    double amplitude = 0.5;     // meters, time-domain scale of the base motion
    double mode_amplitude = 0.4;
    double noise_floor = 0.01;  // per-element jitter, clamped at 4 sigma
    uint64_t seed = 0;

    int64_t total_len() const { return observed + future; }
    void validate() const;
};

struct SyntheticCorpus {
    SyntheticCorpusSpec spec;
    std::vector<MotionSequence> train;
    std::vector<MotionSequence> test;
    std::vector<int64_t> train_modes;
    std::vector<int64_t> test_modes;
    std::vector<int64_t> train_families;
    std::vector<int64_t> test_families;
    // Upper bound on any consecutive-frame step, from the drawn coefficients.
    double step_bound = 0.0;
};

SyntheticCorpus gen_corpus(const SyntheticCorpusSpec& spec);

std::vector<Tensor> observations_of(const std::vector<MotionSequence>& items);

}  // namespace swiftdiff
