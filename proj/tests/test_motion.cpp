#include <cmath>

#include "doctest.h"
#include "swiftdiff/errors.hpp"
#include "swiftdiff/kernels.hpp"
#include "swiftdiff/motion.hpp"
#include "swiftdiff/rng.hpp"
#include "swiftdiff/synthetic.hpp"
#include "test_util.hpp"

using namespace swiftdiff;
using testutil::random_tensor;

TEST_CASE("dct basis DC row") {
    Tensor b = dct_basis(4, 1);
    for (int64_t n = 0; n < 4; ++n) CHECK(b.at(0, n) == doctest::Approx(0.5).epsilon(1e-15));
}

TEST_CASE("dct basis hand evaluation, N=2") {
    Tensor b = dct_basis(2, 2);
    Tensor x = Tensor::col({1, 0});
    Tensor y = kernels::matmul(b, x);
    CHECK(y.at(0) == doctest::Approx(0.70711).epsilon(1e-5));
    CHECK(y.at(1) == doctest::Approx(0.70711).epsilon(1e-5));
}

TEST_CASE("dct basis orthonormality") {
    for (int64_t n : {2, 3, 4, 7, 16, 24, 64}) {
        Tensor b = dct_basis(n, n);
        Tensor prod = kernels::matmul(b, kernels::transpose(b));
        for (int64_t i = 0; i < n; ++i) {
            for (int64_t j = 0; j < n; ++j) {
                CHECK(std::abs(prod.at(i, j) - (i == j ? 1.0 : 0.0)) < 1e-12);
            }
        }
    }
}

TEST_CASE("truncated basis rows are orthonormal for all (N, L)") {
    for (int64_t n : {4, 9, 16, 25}) {
        for (int64_t l = 1; l <= n; l += 3) {
            Tensor b = dct_basis(n, l);
            Tensor prod = kernels::matmul(b, kernels::transpose(b));
            for (int64_t i = 0; i < l; ++i) {
                for (int64_t j = 0; j < l; ++j) {
                    CHECK(std::abs(prod.at(i, j) - (i == j ? 1.0 : 0.0)) < 1e-10);
                }
            }
        }
    }
}

TEST_CASE("dct basis bounds") {
    CHECK_THROWS_AS(dct_basis(4, 5), ShapeError);
    CHECK_THROWS_AS(dct_basis(4, 0), ShapeError);
}

TEST_CASE("constant sequence concentrates in the DC row") {
    double c = 1.7;
    MotionSequence m = make_motion(Tensor::full({4, 3}, c), 2, 2);
    FrequencyCoeffs y = to_frequency(m, 4);
    for (int64_t col = 0; col < 3; ++col) {
        CHECK(y.coeffs.at(0, col) == doctest::Approx(2.0 * c).epsilon(1e-12));
        for (int64_t k = 1; k < 4; ++k) CHECK(std::abs(y.coeffs.at(k, col)) < 1e-12);
    }
}

TEST_CASE("orthonormal roundtrip at L=N") {
    Rng rng(5);
    Tensor frames = random_tensor(rng, {12, 6});
    MotionSequence m = make_motion(frames, 4, 8);
    MotionSequence back = from_frequency(to_frequency(m, 12), 4);
    for (int64_t i = 0; i < frames.numel(); ++i) {
        CHECK(std::abs(back.frames.at(i) - frames.at(i)) < 1e-10);
    }
}

TEST_CASE("band-limited sequences roundtrip exactly under truncation") {
    Rng rng(6);
    int64_t n = 10, l = 8;
    Tensor coeffs = random_tensor(rng, {l, 4});
    Tensor basis = dct_basis(n, l);
    Tensor frames = kernels::matmul(kernels::transpose(basis), coeffs);
    MotionSequence m = make_motion(frames, 4, 6);
    MotionSequence back = from_frequency(to_frequency(m, l), 4);
    for (int64_t i = 0; i < frames.numel(); ++i) {
        CHECK(std::abs(back.frames.at(i) - frames.at(i)) < 1e-10);
    }
}

TEST_CASE("pad_observation replicates the last frame") {
    Tensor q = Tensor::from_rows({{1.0, 2.0, 3.0}});
    MotionSequence padded = pad_observation(q, 4);
    CHECK(padded.observed == 1);
    CHECK(padded.future == 3);
    for (int64_t t = 0; t < 4; ++t) {
        for (int64_t j = 0; j < 3; ++j) {
            CHECK(padded.frames.at(t, j) == doctest::Approx(q.at(0, j)));
        }
    }
    CHECK_THROWS_AS(pad_observation(Tensor({0, 3}), 4), ShapeError);
}

TEST_CASE("static observation gives a DC-only condition") {
    Tensor obs = Tensor::full({3, 6}, 0.4);
    FrequencyCoeffs c = observation_condition(obs, 8, 8);
    for (int64_t col = 0; col < 6; ++col) {
        for (int64_t k = 1; k < 8; ++k) CHECK(std::abs(c.coeffs.at(k, col)) < 1e-12);
    }
}

TEST_CASE("condition at L=N reproduces the observation rows") {
    Rng rng(8);
    Tensor obs = random_tensor(rng, {5, 6});
    int64_t n = 12;
    FrequencyCoeffs c = observation_condition(obs, n, n);
    Tensor frames = from_frequency_frames(c);
    for (int64_t t = 0; t < 5; ++t) {
        for (int64_t j = 0; j < 6; ++j) {
            CHECK(frames.at(t, j) == doctest::Approx(obs.at(t, j)).epsilon(1e-10));
        }
    }
}

TEST_CASE("inpaint mask layout") {
    InpaintMask m = InpaintMask::make(2, 5);
    CHECK(m.m == std::vector<double>{1, 1, 0, 0, 0});
    CHECK_THROWS_AS(InpaintMask::make(6, 5), ShapeError);
}

TEST_CASE("apply_inpaint degenerate masks") {
    Rng rng(9);
    int64_t n = 6, l = 4, ch = 6;
    FrequencyCoeffs yd{random_tensor(rng, {l, ch}), l, n};
    FrequencyCoeffs yo{random_tensor(rng, {l, ch}), l, n};

    FrequencyCoeffs all_obs = apply_inpaint(yd, yo, InpaintMask::make(n, n));
    FrequencyCoeffs oracle_o = to_frequency_frames(from_frequency_frames(yo), l);
    for (int64_t i = 0; i < all_obs.coeffs.numel(); ++i) {
        CHECK(all_obs.coeffs.at(i) == doctest::Approx(oracle_o.coeffs.at(i)).epsilon(1e-12));
    }

    FrequencyCoeffs all_den = apply_inpaint(yd, yo, InpaintMask::make(0, n));
    FrequencyCoeffs oracle_d = to_frequency_frames(from_frequency_frames(yd), l);
    for (int64_t i = 0; i < all_den.coeffs.numel(); ++i) {
        CHECK(all_den.coeffs.at(i) == doctest::Approx(oracle_d.coeffs.at(i)).epsilon(1e-12));
    }
}

TEST_CASE("apply_inpaint matches the brute-force splice oracle") {
    Rng rng(10);
    int64_t h = 2, f = 2, n = 4, l = 4, ch = 6;
    FrequencyCoeffs yd{random_tensor(rng, {l, ch}), l, n};
    FrequencyCoeffs yo{random_tensor(rng, {l, ch}), l, n};
    InpaintMask mask = InpaintMask::make(h, n);

    // oracle: materialize both signals, splice rows, re-transform
    Tensor xd = from_frequency_frames(yd);
    Tensor xo = from_frequency_frames(yo);
    Tensor spliced({n, ch});
    for (int64_t t = 0; t < n; ++t) {
        for (int64_t j = 0; j < ch; ++j) {
            spliced.at(t, j) = t < h ? xo.at(t, j) : xd.at(t, j);
        }
    }
    Tensor expected = kernels::matmul(dct_basis(n, l), spliced);

    FrequencyCoeffs got = apply_inpaint(yd, yo, mask);
    for (int64_t i = 0; i < expected.numel(); ++i) {
        CHECK(got.coeffs.at(i) == doctest::Approx(expected.at(i)).epsilon(1e-12));
    }
}

TEST_CASE("apply_inpaint is idempotent at L=N") {
    Rng rng(11);
    int64_t n = 8, l = 8, ch = 3;
    FrequencyCoeffs yd{random_tensor(rng, {l, ch}), l, n};
    FrequencyCoeffs yo{random_tensor(rng, {l, ch}), l, n};
    InpaintMask mask = InpaintMask::make(3, n);
    FrequencyCoeffs once = apply_inpaint(yd, yo, mask);
    FrequencyCoeffs twice = apply_inpaint(once, yo, mask);
    for (int64_t i = 0; i < once.coeffs.numel(); ++i) {
        CHECK(std::abs(once.coeffs.at(i) - twice.coeffs.at(i)) < 1e-10);
    }
}

TEST_CASE("apply_inpaint rejects mismatched masks") {
    Rng rng(12);
    FrequencyCoeffs y{random_tensor(rng, {4, 3}), 4, 8};
    CHECK_THROWS_AS(apply_inpaint(y, y, InpaintMask::make(2, 5)), ShapeError);
}

TEST_CASE("smooth synthetic motions concentrate energy below L=N/2") {
    SyntheticCorpusSpec spec;
    spec.joints = 3;
    spec.observed = 8;
    spec.future = 16;
    spec.n_train = 24;
    spec.n_test = 4;
    spec.seed = 77;
    SyntheticCorpus corpus = gen_corpus(spec);
    int64_t n = spec.total_len();
    int64_t l = n / 2;
    for (const MotionSequence& m : corpus.train) {
        FrequencyCoeffs full = to_frequency(m, n);
        double total = 0.0, high = 0.0;
        for (int64_t k = 0; k < n; ++k) {
            for (int64_t c = 0; c < full.coeffs.cols(); ++c) {
                double v = full.coeffs.at(k, c) * full.coeffs.at(k, c);
                total += v;
                if (k >= l) high += v;
            }
        }
        CHECK(high < 0.05 * total);
    }
}
