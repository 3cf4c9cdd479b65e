#include "swiftdiff/motion.hpp"

#include <cmath>

#include "swiftdiff/errors.hpp"
#include "swiftdiff/kernels.hpp"

namespace swiftdiff {

Tensor MotionSequence::observed_frames() const {
    return kernels::slice(frames, 0, 0, observed);
}

Tensor MotionSequence::future_frames() const {
    return kernels::slice(frames, 0, observed, future);
}

MotionSequence make_motion(Tensor frames, int64_t observed, int64_t future) {
    if (observed < 1 || future < 1) {
        throw ShapeError("motion: H and F must both be >= 1");
    }
    if (frames.rows() != observed + future) {
        throw ShapeError("motion: frames " + frames.shape_str() + " do not match H+F = " +
                         std::to_string(observed + future));
    }
    kernels::ensure_finite(frames, "motion");
    return MotionSequence{std::move(frames), observed, future};
}

InpaintMask InpaintMask::make(int64_t observed, int64_t total) {
    if (observed < 0 || observed > total) {
        throw ShapeError("inpaint mask: H out of range");
    }
    InpaintMask mk;
    mk.observed = observed;
    mk.m.assign(static_cast<size_t>(total), 0.0);
    for (int64_t i = 0; i < observed; ++i) mk.m[static_cast<size_t>(i)] = 1.0;
    return mk;
}

Tensor dct_basis(int64_t n, int64_t l) {
    if (n < 1 || l < 1 || l > n) {
        throw ShapeError("dct_basis: require 1 <= L <= N, got L=" + std::to_string(l) +
                         " N=" + std::to_string(n));
    }
    Tensor b({l, n});
    double inv_sqrt_n = 1.0 / std::sqrt(static_cast<double>(n));
    double amp = std::sqrt(2.0 / static_cast<double>(n));
    for (int64_t col = 0; col < n; ++col) b.at(0, col) = inv_sqrt_n;
    for (int64_t k = 1; k < l; ++k) {
        for (int64_t col = 0; col < n; ++col) {
            b.at(k, col) = amp * std::cos(M_PI * static_cast<double>(2 * col + 1) *
                                          static_cast<double>(k) /
                                          (2.0 * static_cast<double>(n)));
        }
    }
    return b;
}

FrequencyCoeffs to_frequency_frames(const Tensor& frames, int64_t l) {
    Tensor basis = dct_basis(frames.rows(), l);
    return FrequencyCoeffs{kernels::matmul(basis, frames), l, frames.rows()};
}

FrequencyCoeffs to_frequency(const MotionSequence& x, int64_t l) {
    return to_frequency_frames(x.frames, l);
}

Tensor from_frequency_frames(const FrequencyCoeffs& y) {
    Tensor basis = dct_basis(y.source_len, y.retained);
    return kernels::matmul(kernels::transpose(basis), y.coeffs);
}

MotionSequence from_frequency(const FrequencyCoeffs& y, int64_t observed) {
    Tensor frames = from_frequency_frames(y);
    return make_motion(std::move(frames), observed, y.source_len - observed);
}

MotionSequence pad_observation(const Tensor& observed_frames, int64_t total_len) {
    if (observed_frames.rows() < 1) {
        throw ShapeError("pad_observation: empty observation");
    }
    int64_t h = observed_frames.rows();
    if (total_len <= h) {
        throw ShapeError("pad_observation: total_len " + std::to_string(total_len) +
                         " must exceed observed length " + std::to_string(h));
    }
    Tensor frames({total_len, observed_frames.cols()});
    for (int64_t i = 0; i < total_len; ++i) {
        int64_t src = i < h ? i : h - 1;
        for (int64_t j = 0; j < observed_frames.cols(); ++j) {
            frames.at(i, j) = observed_frames.at(src, j);
        }
    }
    return make_motion(std::move(frames), h, total_len - h);
}

FrequencyCoeffs observation_condition(const Tensor& observed_frames, int64_t total_len,
                                      int64_t l) {
    return to_frequency(pad_observation(observed_frames, total_len), l);
}

namespace {

void check_inpaint_shapes(const FrequencyCoeffs& a, const FrequencyCoeffs& b,
                          const InpaintMask& mask) {
    if (a.retained != b.retained || a.source_len != b.source_len ||
        !a.coeffs.same_shape(b.coeffs)) {
        throw ShapeError("apply_inpaint: coefficient shapes differ: " + a.coeffs.shape_str() +
                         " (L=" + std::to_string(a.retained) + ", N=" +
                         std::to_string(a.source_len) + ") vs " + b.coeffs.shape_str());
    }
    if (mask.size() != a.source_len) {
        throw ShapeError("apply_inpaint: mask length " + std::to_string(mask.size()) +
                         " != sequence length " + std::to_string(a.source_len));
    }
}

}  // namespace

Tensor inpaint_frames(const FrequencyCoeffs& y_denoised, const FrequencyCoeffs& y_observed,
                      const InpaintMask& mask) {
    check_inpaint_shapes(y_denoised, y_observed, mask);
    Tensor xd = from_frequency_frames(y_denoised);
    Tensor xo = from_frequency_frames(y_observed);
    Tensor x(xd.shape());
    for (int64_t i = 0; i < x.rows(); ++i) {
        double m = mask.m[static_cast<size_t>(i)];
        for (int64_t j = 0; j < x.cols(); ++j) {
            x.at(i, j) = m * xo.at(i, j) + (1.0 - m) * xd.at(i, j);
        }
    }
    return x;
}

FrequencyCoeffs apply_inpaint(const FrequencyCoeffs& y_denoised,
                              const FrequencyCoeffs& y_observed, const InpaintMask& mask) {
    Tensor x = inpaint_frames(y_denoised, y_observed, mask);
    return to_frequency_frames(x, y_denoised.retained);
}

}  // namespace swiftdiff
