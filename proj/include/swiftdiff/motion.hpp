#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include "swiftdiff/tensor.hpp"

namespace swiftdiff {

struct SkeletonSpec {
    int64_t joints = 1;
    std::vector<std::string> names;
    double frame_dt = 0.02;  // seconds per frame
};

// (H+F) frames × 3J joint coordinates in meters, observation first.
struct MotionSequence {
    Tensor frames;  // (H+F, 3J)
    int64_t observed = 0;  // H
    int64_t future = 0;    // F

    int64_t total_len() const { return observed + future; }
    Tensor observed_frames() const;
    Tensor future_frames() const;
};

MotionSequence make_motion(Tensor frames, int64_t observed, int64_t future);

// First L rows of the orthonormal DCT-II coefficients of an N-frame sequence.
struct FrequencyCoeffs {
    Tensor coeffs;  // (L, 3J)
    int64_t retained = 0;    // L
    int64_t source_len = 0;  // N = H+F
};

// Frame mask: first H entries 1, remaining F entries 0.
struct InpaintMask {
    std::vector<double> m;
    int64_t observed = 0;

    static InpaintMask make(int64_t observed, int64_t total);
    int64_t size() const { return static_cast<int64_t>(m.size()); }
};

// First L rows of the orthonormal DCT-II basis:
// row 0 entries 1/√N; row k entry n = √(2/N)·cos(π(2n+1)k/(2N)).
Tensor dct_basis(int64_t n, int64_t l);

FrequencyCoeffs to_frequency(const MotionSequence& x, int64_t l);
FrequencyCoeffs to_frequency_frames(const Tensor& frames, int64_t l);
MotionSequence from_frequency(const FrequencyCoeffs& y, int64_t observed);
Tensor from_frequency_frames(const FrequencyCoeffs& y);

// Replicates the last observed frame out to total_len.
MotionSequence pad_observation(const Tensor& observed_frames, int64_t total_len);

// Condition c = DCT(Padding(x^O)) truncated to L rows.
FrequencyCoeffs observation_condition(const Tensor& observed_frames, int64_t total_len,
                                      int64_t l);

// x_k = M ⊙ IDCT(y^O) + (1−M) ⊙ IDCT(y^D), re-transformed; the frame mask
// broadcasts over joint columns.
FrequencyCoeffs apply_inpaint(const FrequencyCoeffs& y_denoised,
                              const FrequencyCoeffs& y_observed, const InpaintMask& mask);

// Same splice but returning the time-domain frames (used at the final
// denoising step, where the coefficients are no longer needed).
Tensor inpaint_frames(const FrequencyCoeffs& y_denoised, const FrequencyCoeffs& y_observed,
                      const InpaintMask& mask);

}  // namespace swiftdiff
