#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include "swiftdiff/models.hpp"
#include "swiftdiff/motion.hpp"
#include "swiftdiff/optim.hpp"
#include "swiftdiff/rng.hpp"

namespace swiftdiff {

// Cumulative signal coefficients ᾱ_k, strictly decreasing in (0,1).
struct NoiseSchedule {
    int64_t k_train = 0;
    std::vector<double> alpha_bar;

    double alpha_bar_at(int64_t k) const;
};

NoiseSchedule make_schedule(int64_t k_train = 1000, const std::string& kind = "cosine");

// Denoising step indices into the training schedule, evenly spaced, descending.
struct SamplerPlan {
    std::vector<int64_t> steps;
    double eta = 0.0;  // DDIM; deterministic

    int64_t n_steps() const { return static_cast<int64_t>(steps.size()); }
    static SamplerPlan evenly_spaced(int64_t k_train, int64_t n_steps);
};

// y_k = √ᾱ_k·y0 + √(1−ᾱ_k)·ε
FrequencyCoeffs q_sample(const FrequencyCoeffs& y0, int64_t k, const Tensor& eps,
                         const NoiseSchedule& sched);

// Noise-prediction MSE on a batch (uniform k, fresh ε per item) plus one AdamW
// update. Returns the per-element mean loss.
double teacher_train_step(TeacherModel& model, const std::vector<MotionSequence>& batch,
                          const NoiseSchedule& sched, OptimizerState& opt, Rng& rng);

struct SampledBatch {
    std::vector<Tensor> frames;  // per sample: (H+F, 3J), observation spliced in
    std::vector<Tensor> coeffs;  // per sample: final clean y0, (L, 3J)
};

// Noise predictor over a stacked batch: (y (B*L,3J), c (B*L,3J), k, B) -> ε̂.
using DenoiseFn =
    std::function<Tensor(const Tensor& y, const Tensor& cond, int64_t k, int64_t batch)>;

// Batched DDIM (η=0) with per-step observation inpainting. One entry per
// sample in obs/init_y/noise_seeds; the per-step re-noising of the condition
// uses the sample's own seed so each output depends only on its own inputs.
// init_y may be empty (drawn from noise_seeds streams).
SampledBatch sample_denoiser_multi(const DenoiseFn& denoiser, int64_t coeff_rows,
                                   const NoiseSchedule& sched, const SamplerPlan& plan,
                                   const std::vector<Tensor>& obs, int64_t future_len,
                                   const std::vector<Tensor>& init_y,
                                   const std::vector<uint64_t>& noise_seeds);

SampledBatch sample_teacher_multi(const TeacherModel& model, const NoiseSchedule& sched,
                                  const SamplerPlan& plan,
                                  const std::vector<Tensor>& obs, int64_t future_len,
                                  const std::vector<Tensor>& init_y,
                                  const std::vector<uint64_t>& noise_seeds);

// Single prediction; the full sequence (observation + generated future).
MotionSequence sample_teacher(const TeacherModel& model, const NoiseSchedule& sched,
                              const SamplerPlan& plan, const Tensor& obs,
                              int64_t future_len, Rng& rng);

}  // namespace swiftdiff
