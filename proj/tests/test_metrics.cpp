#include <chrono>
#include <cmath>
#include <thread>

#include "doctest.h"
#include "swiftdiff/errors.hpp"
#include "swiftdiff/metrics.hpp"
#include "swiftdiff/rng.hpp"
#include "swiftdiff/synthetic.hpp"
#include "test_util.hpp"

using namespace swiftdiff;
using testutil::random_tensor;

TEST_CASE("apd: identical samples and a single pair") {
    std::vector<Tensor> same(4, Tensor::full({3, 6}, 0.5));
    CHECK(apd(same) == 0.0);

    Tensor a = Tensor::zeros({2, 2});
    Tensor b = Tensor::zeros({2, 2});
    b.at(0) = 3.0;  // flat L2 distance 3
    CHECK(apd({a, b}) == doctest::Approx(3.0).epsilon(1e-15));
}

TEST_CASE("apd matches the naive pairwise oracle") {
    Rng rng(1);
    std::vector<Tensor> samples;
    for (int i = 0; i < 5; ++i) samples.push_back(random_tensor(rng, {4, 6}));
    double total = 0.0;
    int pairs = 0;
    for (int i = 0; i < 5; ++i) {
        for (int j = 0; j < 5; ++j) {
            if (i >= j) continue;
            double d2 = 0.0;
            for (int64_t e = 0; e < samples[0].numel(); ++e) {
                double d = samples[static_cast<size_t>(i)].at(e) -
                           samples[static_cast<size_t>(j)].at(e);
                d2 += d * d;
            }
            total += std::sqrt(d2);
            ++pairs;
        }
    }
    CHECK(apd(samples) == doctest::Approx(total / pairs).epsilon(1e-12));
}

TEST_CASE("ade and fde: zero error and constant offsets") {
    Rng rng(2);
    Tensor gt = random_tensor(rng, {5, 6});
    CHECK(ade(gt, gt) == 0.0);
    CHECK(fde(gt, gt) == 0.0);

    double d = 0.3;
    Tensor off = gt;
    for (int64_t i = 0; i < off.numel(); ++i) off.at(i) += d;
    double expect = d * std::sqrt(6.0);  // offset on every joint coordinate
    CHECK(ade(off, gt) == doctest::Approx(expect).epsilon(1e-12));
    CHECK(fde(off, gt) == doctest::Approx(expect).epsilon(1e-12));
}

TEST_CASE("ade/fde match brute-force per-frame loops") {
    Rng rng(3);
    Tensor s = random_tensor(rng, {7, 9});
    Tensor gt = random_tensor(rng, {7, 9});
    double a = 0.0;
    for (int64_t t = 0; t < 7; ++t) {
        double d2 = 0.0;
        for (int64_t c = 0; c < 9; ++c) {
            double d = s.at(t, c) - gt.at(t, c);
            d2 += d * d;
        }
        a += std::sqrt(d2);
    }
    a /= 7.0;
    CHECK(ade(s, gt) == doctest::Approx(a).epsilon(1e-12));

    double f2 = 0.0;
    for (int64_t c = 0; c < 9; ++c) {
        double d = s.at(6, c) - gt.at(6, c);
        f2 += d * d;
    }
    CHECK(fde(s, gt) == doctest::Approx(std::sqrt(f2)).epsilon(1e-12));
}

TEST_CASE("aggregate_bmw uses the lower median") {
    Bmw r = aggregate_bmw({3, 1, 2});
    CHECK(r.best == 1.0);
    CHECK(r.median == 2.0);
    CHECK(r.worst == 3.0);

    Bmw one = aggregate_bmw({0.7});
    CHECK(one.best == 0.7);
    CHECK(one.median == 0.7);
    CHECK(one.worst == 0.7);

    Bmw four = aggregate_bmw({1, 2, 3, 4});
    CHECK(four.median == 2.0);  // index (4-1)/2 = 1 of the sorted errors
}

TEST_CASE("mm_metrics reduces to plain metrics when the set is {gt}") {
    Rng rng(4);
    PredictionSet pred;
    pred.gt = random_tensor(rng, {5, 6});
    pred.obs = random_tensor(rng, {3, 6});
    for (int i = 0; i < 4; ++i) pred.samples.push_back(random_tensor(rng, {5, 6}));

    MmMetrics mm = mm_metrics(pred, {pred.gt});
    std::vector<double> ade_err, fde_err;
    for (const Tensor& s : pred.samples) {
        ade_err.push_back(ade(s, pred.gt));
        fde_err.push_back(fde(s, pred.gt));
    }
    Bmw a = aggregate_bmw(ade_err), f = aggregate_bmw(fde_err);
    CHECK(mm.mmade.best == doctest::Approx(a.best));
    CHECK(mm.mmade.median == doctest::Approx(a.median));
    CHECK(mm.mmade.worst == doctest::Approx(a.worst));
    CHECK(mm.mmfde.best == doctest::Approx(f.best));

    // duplicating the ground truth changes nothing (min is idempotent)
    MmMetrics dup = mm_metrics(pred, {pred.gt, pred.gt});
    CHECK(dup.mmade.best == doctest::Approx(mm.mmade.best));
    CHECK(dup.mmfde.worst == doctest::Approx(mm.mmfde.worst));
}

TEST_CASE("mm_metrics matches the nested-loop oracle") {
    Rng rng(5);
    PredictionSet pred;
    pred.gt = random_tensor(rng, {4, 6});
    pred.obs = random_tensor(rng, {2, 6});
    for (int i = 0; i < 4; ++i) pred.samples.push_back(random_tensor(rng, {4, 6}));
    std::vector<Tensor> futures;
    for (int i = 0; i < 3; ++i) futures.push_back(random_tensor(rng, {4, 6}));

    std::vector<double> ade_err, fde_err;
    for (const Tensor& s : pred.samples) {
        double ba = 1e300, bf = 1e300;
        for (const Tensor& fut : futures) {
            ba = std::min(ba, ade(s, fut));
            bf = std::min(bf, fde(s, fut));
        }
        ade_err.push_back(ba);
        fde_err.push_back(bf);
    }
    Bmw ea = aggregate_bmw(ade_err), ef = aggregate_bmw(fde_err);
    MmMetrics mm = mm_metrics(pred, futures);
    CHECK(mm.mmade.best == doctest::Approx(ea.best).epsilon(1e-12));
    CHECK(mm.mmade.median == doctest::Approx(ea.median).epsilon(1e-12));
    CHECK(mm.mmade.worst == doctest::Approx(ea.worst).epsilon(1e-12));
    CHECK(mm.mmfde.best == doctest::Approx(ef.best).epsilon(1e-12));
    CHECK(mm.mmfde.median == doctest::Approx(ef.median).epsilon(1e-12));
    CHECK(mm.mmfde.worst == doctest::Approx(ef.worst).epsilon(1e-12));
}

TEST_CASE("multimodal ground-truth sets by threshold") {
    SyntheticCorpusSpec spec;
    spec.joints = 2;
    spec.observed = 4;
    spec.future = 8;
    spec.n_train = 20;
    spec.n_test = 20;
    spec.n_families = 5;
    spec.band_limit = 4;
    spec.seed = 6;
    SyntheticCorpus corpus = gen_corpus(spec);

    auto tiny = build_multimodal_gt(corpus.test, 1e-9);
    for (size_t i = 0; i < tiny.size(); ++i) {
        CHECK(tiny[i] == std::vector<size_t>{i});
    }

    auto all = build_multimodal_gt(corpus.test, 1e9);
    for (const auto& s : all) CHECK(s.size() == corpus.test.size());

    // τ = 0.5 against an independently-written pairwise thresholding
    double tau = 0.5;
    auto sets = build_multimodal_gt(corpus.test, tau);
    for (size_t i = 0; i < corpus.test.size(); ++i) {
        std::vector<size_t> expect;
        Tensor oi = corpus.test[i].observed_frames();
        for (size_t j = 0; j < corpus.test.size(); ++j) {
            Tensor oj = corpus.test[j].observed_frames();
            double d2 = 0.0;
            for (int64_t c = 0; c < oi.cols(); ++c) {
                double d = oi.at(oi.rows() - 1, c) - oj.at(oj.rows() - 1, c);
                d2 += d * d;
            }
            if (std::sqrt(d2) <= tau) expect.push_back(j);
        }
        CHECK(sets[i] == expect);
        bool has_self = false;
        for (size_t j : sets[i]) has_self = has_self || j == i;
        CHECK(has_self);
    }
    CHECK_THROWS_AS(build_multimodal_gt(corpus.test, 0.0), ConfigError);
}

TEST_CASE("metrics are permutation-invariant and properly ordered") {
    Rng rng(7);
    for (int rep = 0; rep < 20; ++rep) {
        PredictionSet pred;
        pred.gt = random_tensor(rng, {4, 6});
        pred.obs = random_tensor(rng, {2, 6});
        int s = 3 + static_cast<int>(rng.uniform_int(4));
        for (int i = 0; i < s; ++i) pred.samples.push_back(random_tensor(rng, {4, 6}));
        std::vector<Tensor> futures{pred.gt};
        for (int i = 0; i < 2; ++i) futures.push_back(random_tensor(rng, {4, 6}));

        std::vector<double> errs;
        for (const Tensor& sm : pred.samples) errs.push_back(ade(sm, pred.gt));
        Bmw b = aggregate_bmw(errs);
        CHECK(b.best <= b.median);
        CHECK(b.median <= b.worst);

        MmMetrics mm = mm_metrics(pred, futures);
        CHECK(mm.mmade.best <= b.best + 1e-12);  // min over a superset containing gt

        PredictionSet shuffled = pred;
        std::reverse(shuffled.samples.begin(), shuffled.samples.end());
        std::vector<double> errs2;
        for (const Tensor& sm : shuffled.samples) errs2.push_back(ade(sm, pred.gt));
        Bmw b2 = aggregate_bmw(errs2);
        CHECK(b.best == doctest::Approx(b2.best));
        CHECK(b.median == doctest::Approx(b2.median));
        CHECK(b.worst == doctest::Approx(b2.worst));
        CHECK(apd(pred.samples) == doctest::Approx(apd(shuffled.samples)).epsilon(1e-12));
    }
}

TEST_CASE("benchmark harness calibrates against a sleeping stub") {
    BenchResult r = benchmark_inference(
        [] { std::this_thread::sleep_for(std::chrono::milliseconds(10)); }, 10);
    CHECK(r.mean_seconds >= 0.009);
    CHECK(r.mean_seconds <= 0.013);
    CHECK(r.min_seconds <= r.mean_seconds);
    CHECK(r.std_seconds < 0.2 * r.mean_seconds);
    CHECK(r.repeats == 10);
}

TEST_CASE("benchmark warns when the work is too small for the timer") {
    volatile int sink = 0;
    BenchResult r = benchmark_inference([&] { sink = sink + 1; }, 5);
    CHECK(r.timer_warning);
}

TEST_CASE("evaluate_model: gt-equal stub sampler yields zero errors") {
    SyntheticCorpusSpec spec;
    spec.joints = 2;
    spec.observed = 4;
    spec.future = 8;
    spec.n_train = 4;
    spec.n_test = 6;
    spec.seed = 8;
    SyntheticCorpus corpus = gen_corpus(spec);

    // stub: return the matching ground truth for every request
    PredictSamplesFn stub = [&](const Tensor& obs, int64_t s, uint64_t) {
        for (const MotionSequence& item : corpus.test) {
            if (item.observed_frames().bit_equal(obs)) {
                return std::vector<Tensor>(static_cast<size_t>(s), item.future_frames());
            }
        }
        throw std::runtime_error("unknown observation");
    };
    MetricsReport rep = evaluate_model(corpus.test, stub, 1, 0.5, 0);
    CHECK(rep.ade.best == 0.0);
    CHECK(rep.ade.worst == 0.0);
    CHECK(rep.fde.best == 0.0);
    CHECK(rep.mmade.best == 0.0);
    CHECK(rep.apd == 0.0);  // S = 1 defined as zero
}
