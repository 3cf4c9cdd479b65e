#pragma once

#include <cstdint>
#include <functional>
#include <vector>

#include "swiftdiff/motion.hpp"
#include "swiftdiff/tensor.hpp"

namespace swiftdiff {

// S sampled futures for one observation, the unit all metrics consume.
struct PredictionSet {
    std::vector<Tensor> samples;  // each (F, 3J)
    Tensor gt;                    // (F, 3J)
    Tensor obs;                   // (H, 3J)
};

// Mean L2 distance over all unordered sample pairs (flattened sequences).
// S = 1 is defined as 0 (a warning is printed).
double apd(const std::vector<Tensor>& samples);

// Per-frame L2 over the 3J vector, averaged over frames / final frame only.
double ade(const Tensor& sample, const Tensor& gt);
double fde(const Tensor& sample, const Tensor& gt);

struct Bmw {
    double best = 0.0;
    double median = 0.0;
    double worst = 0.0;
};

// best = min, worst = max, median = lower median (index ⌊(S−1)/2⌋ of sorted).
Bmw aggregate_bmw(std::vector<double> errors);

// For each observation: futures of all corpus items whose final observed
// frame lies within L2 distance tau. Each item's set includes itself.
std::vector<std::vector<size_t>> build_multimodal_gt(
    const std::vector<MotionSequence>& corpus, double tau);

struct MmMetrics {
    Bmw mmade;
    Bmw mmfde;
};

// Per sample: min error over the multimodal future set, then B/M/W.
MmMetrics mm_metrics(const PredictionSet& pred, const std::vector<Tensor>& mm_futures);

struct BenchResult {
    double mean_seconds = 0.0;
    double min_seconds = 0.0;
    double std_seconds = 0.0;
    int64_t repeats = 0;
    bool timer_warning = false;  // resolution coarser than 1% of the mean
};

// One warmup call (untimed), then n_repeats timed calls on the monotonic clock.
BenchResult benchmark_inference(const std::function<void()>& runner, int64_t n_repeats = 10);

// Dataset-level metric table (means over test items of per-item aggregates).
struct MetricsReport {
    int64_t n_items = 0;
    int64_t n_samples = 0;  // S
    double tau = 0.0;
    double apd = 0.0;
    Bmw ade;
    Bmw fde;
    Bmw mmade;
    Bmw mmfde;
};

// Produces S futures (each F×3J) for an observation; seed controls sampling.
using PredictSamplesFn =
    std::function<std::vector<Tensor>(const Tensor& obs, int64_t n_samples, uint64_t seed)>;

MetricsReport evaluate_model(const std::vector<MotionSequence>& test_set,
                             const PredictSamplesFn& predict, int64_t n_samples, double tau,
                             uint64_t seed);

}  // namespace swiftdiff
