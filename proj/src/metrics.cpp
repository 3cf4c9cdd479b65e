#include "swiftdiff/metrics.hpp"

#include <algorithm>
#include <chrono>
#include <cmath>
#include <iostream>

#include "swiftdiff/errors.hpp"
#include "swiftdiff/rng.hpp"

namespace swiftdiff {

double apd(const std::vector<Tensor>& samples) {
    size_t s = samples.size();
    if (s == 0) throw ConfigError("apd: no samples");
    if (s == 1) {
        std::cerr << "[metrics] warning: APD of a single sample is defined as 0\n";
        return 0.0;
    }
    double total = 0.0;
    for (size_t i = 0; i < s; ++i) {
        for (size_t j = i + 1; j < s; ++j) {
            if (!samples[i].same_shape(samples[j])) {
                throw ShapeError("apd: sample shapes differ");
            }
            double d2 = 0.0;
            for (int64_t e = 0; e < samples[i].numel(); ++e) {
                double d = samples[i].at(e) - samples[j].at(e);
                d2 += d * d;
            }
            total += std::sqrt(d2);
        }
    }
    double pairs = static_cast<double>(s) * static_cast<double>(s - 1) / 2.0;
    return total / pairs;
}

double ade(const Tensor& sample, const Tensor& gt) {
    if (!sample.same_shape(gt)) {
        throw ShapeError("ade: shapes " + sample.shape_str() + " vs " + gt.shape_str());
    }
    double total = 0.0;
    for (int64_t t = 0; t < sample.rows(); ++t) {
        double d2 = 0.0;
        for (int64_t j = 0; j < sample.cols(); ++j) {
            double d = sample.at(t, j) - gt.at(t, j);
            d2 += d * d;
        }
        total += std::sqrt(d2);
    }
    return total / static_cast<double>(sample.rows());
}

double fde(const Tensor& sample, const Tensor& gt) {
    if (!sample.same_shape(gt)) {
        throw ShapeError("fde: shapes " + sample.shape_str() + " vs " + gt.shape_str());
    }
    int64_t t = sample.rows() - 1;
    double d2 = 0.0;
    for (int64_t j = 0; j < sample.cols(); ++j) {
        double d = sample.at(t, j) - gt.at(t, j);
        d2 += d * d;
    }
    return std::sqrt(d2);
}

Bmw aggregate_bmw(std::vector<double> errors) {
    if (errors.empty()) throw ConfigError("aggregate_bmw: no errors");
    std::sort(errors.begin(), errors.end());
    Bmw r;
    r.best = errors.front();
    r.worst = errors.back();
    r.median = errors[(errors.size() - 1) / 2];
    return r;
}

std::vector<std::vector<size_t>> build_multimodal_gt(
    const std::vector<MotionSequence>& corpus, double tau) {
    if (tau <= 0.0) throw ConfigError("build_multimodal_gt: tau must be > 0");
    std::vector<std::vector<size_t>> sets(corpus.size());
    for (size_t i = 0; i < corpus.size(); ++i) {
        Tensor oi = corpus[i].observed_frames();
        int64_t last = oi.rows() - 1;
        for (size_t j = 0; j < corpus.size(); ++j) {
            Tensor oj = corpus[j].observed_frames();
            double d2 = 0.0;
            for (int64_t c = 0; c < oi.cols(); ++c) {
                double d = oi.at(last, c) - oj.at(oj.rows() - 1, c);
                d2 += d * d;
            }
            if (std::sqrt(d2) <= tau) sets[i].push_back(j);
        }
    }
    return sets;
}

MmMetrics mm_metrics(const PredictionSet& pred, const std::vector<Tensor>& mm_futures) {
    if (mm_futures.empty()) throw ConfigError("mm_metrics: empty multimodal set");
    std::vector<double> ade_err, fde_err;
    ade_err.reserve(pred.samples.size());
    fde_err.reserve(pred.samples.size());
    for (const Tensor& s : pred.samples) {
        double best_a = std::numeric_limits<double>::infinity();
        double best_f = std::numeric_limits<double>::infinity();
        for (const Tensor& fut : mm_futures) {
            best_a = std::min(best_a, ade(s, fut));
            best_f = std::min(best_f, fde(s, fut));
        }
        ade_err.push_back(best_a);
        fde_err.push_back(best_f);
    }
    return MmMetrics{aggregate_bmw(ade_err), aggregate_bmw(fde_err)};
}

BenchResult benchmark_inference(const std::function<void()>& runner, int64_t n_repeats) {
    if (n_repeats < 1) throw ConfigError("benchmark_inference: n_repeats must be >= 1");
    using clock = std::chrono::steady_clock;

    runner();  // warmup, excluded

    std::vector<double> times;
    times.reserve(static_cast<size_t>(n_repeats));
    for (int64_t i = 0; i < n_repeats; ++i) {
        auto t0 = clock::now();
        runner();
        auto t1 = clock::now();
        times.push_back(std::chrono::duration<double>(t1 - t0).count());
    }

    BenchResult r;
    r.repeats = n_repeats;
    r.min_seconds = times[0];
    for (double t : times) {
        r.mean_seconds += t;
        r.min_seconds = std::min(r.min_seconds, t);
    }
    r.mean_seconds /= static_cast<double>(n_repeats);
    double var = 0.0;
    for (double t : times) var += (t - r.mean_seconds) * (t - r.mean_seconds);
    r.std_seconds = std::sqrt(var / static_cast<double>(n_repeats));

    // Empirical timer resolution: smallest observable nonzero now() delta.
    double resolution = 0.0;
    for (int i = 0; i < 64; ++i) {
        auto a = clock::now();
        auto b = clock::now();
        while (b == a) b = clock::now();
        double d = std::chrono::duration<double>(b - a).count();
        resolution = resolution == 0.0 ? d : std::min(resolution, d);
    }
    if (resolution > 0.01 * r.mean_seconds) {
        r.timer_warning = true;
        std::cerr << "[bench] warning: timer resolution " << resolution
                  << "s exceeds 1% of measured mean " << r.mean_seconds << "s\n";
    }
    return r;
}

MetricsReport evaluate_model(const std::vector<MotionSequence>& test_set,
                             const PredictSamplesFn& predict, int64_t n_samples, double tau,
                             uint64_t seed) {
    if (test_set.empty()) throw ConfigError("evaluate_model: empty test set");
    std::vector<std::vector<size_t>> mm_sets = build_multimodal_gt(test_set, tau);

    MetricsReport rep;
    rep.n_items = static_cast<int64_t>(test_set.size());
    rep.n_samples = n_samples;
    rep.tau = tau;

    for (size_t i = 0; i < test_set.size(); ++i) {
        const MotionSequence& item = test_set[i];
        PredictionSet pred;
        pred.obs = item.observed_frames();
        pred.gt = item.future_frames();
        pred.samples = predict(pred.obs, n_samples, mix64(seed ^ (0x9d5bull + i)));

        rep.apd += apd(pred.samples);
        std::vector<double> ade_err, fde_err;
        for (const Tensor& s : pred.samples) {
            ade_err.push_back(ade(s, pred.gt));
            fde_err.push_back(fde(s, pred.gt));
        }
        Bmw a = aggregate_bmw(ade_err);
        Bmw f = aggregate_bmw(fde_err);

        std::vector<Tensor> mm_futures;
        for (size_t j : mm_sets[i]) mm_futures.push_back(test_set[j].future_frames());
        MmMetrics mm = mm_metrics(pred, mm_futures);

        rep.ade.best += a.best;
        rep.ade.median += a.median;
        rep.ade.worst += a.worst;
        rep.fde.best += f.best;
        rep.fde.median += f.median;
        rep.fde.worst += f.worst;
        rep.mmade.best += mm.mmade.best;
        rep.mmade.median += mm.mmade.median;
        rep.mmade.worst += mm.mmade.worst;
        rep.mmfde.best += mm.mmfde.best;
        rep.mmfde.median += mm.mmfde.median;
        rep.mmfde.worst += mm.mmfde.worst;
    }

    double inv = 1.0 / static_cast<double>(test_set.size());
    rep.apd *= inv;
    for (Bmw* b : {&rep.ade, &rep.fde, &rep.mmade, &rep.mmfde}) {
        b->best *= inv;
        b->median *= inv;
        b->worst *= inv;
    }
    return rep;
}

}  // namespace swiftdiff
