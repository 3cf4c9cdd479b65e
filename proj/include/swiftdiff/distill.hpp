#pragma once

#include <cstdint>
#include <functional>
#include <string>
#include <vector>

#include "swiftdiff/diffusion.hpp"
#include "swiftdiff/models.hpp"

namespace swiftdiff {

// Stage-1 product: a teacher-architecture network evaluated in a single
// denoising step with its step token pinned to k* (the pure-noise level).
struct OneStepModel {
    TeacherModel net;
    int64_t k_star;
};

// Batch-constant data for the one-step map: condition coefficients, DCT
// basis, and the noise-free observed part of the splice.
struct OneStepContext {
    int64_t batch = 0;
    int64_t coeff_rows = 0;   // L
    int64_t channels = 0;     // 3J
    int64_t total_len = 0;    // N
    int64_t observed = 0;     // H
    Tensor cond;              // (B*L, 3J)
    Tensor basis;             // (L, N)
    Tensor basis_t;           // (N, L)
    Tensor mask_row;          // (1, N)
    Tensor inv_mask_row;      // (1, N)
    Tensor obs_part;          // M ⊙ IDCT(c), transposed layout (B*3J, N)
};

OneStepContext make_one_step_context(const std::vector<Tensor>& obs, int64_t future_len,
                                     int64_t coeff_rows);

// ŷ0 = (ε − √(1−ᾱ*)·ε̂)/√ᾱ*, followed by one noise-free inpaint with the
// condition. Returns the clean coefficients DCT(x), transposed layout kept
// internal. Template so the same map trains on tape and runs eagerly.
template <class E>
typename E::V one_step_postprocess(E& eng, const typename E::V& eps_in,
                                   const typename E::V& eps_hat, double alpha_bar_star,
                                   const OneStepContext& ctx) {
    double sa = std::sqrt(alpha_bar_star);
    double sn = std::sqrt(1.0 - alpha_bar_star);
    auto y0 = eng.scale(eng.sub(eps_in, eng.scale(eps_hat, sn)), 1.0 / sa);
    auto yt = eng.batched_transpose(y0, ctx.batch);                       // (B*3J, L)
    auto xt = eng.matmul(yt, eng.use_input(ctx.basis));                   // (B*3J, N)
    auto spliced = eng.add(eng.use_input(ctx.obs_part),
                           eng.mul(xt, eng.use_input(ctx.inv_mask_row)));
    auto y0t = eng.matmul(spliced, eng.use_input(ctx.basis_t));           // (B*3J, L)
    return eng.batched_transpose(y0t, ctx.batch);                         // (B*L, 3J)
}

// F_student for stage 1 (teacher architecture, pinned step token).
template <class E>
typename E::V one_step_map(E& eng, const TeacherModel& net, int64_t k_star,
                           double alpha_bar_star, const typename E::V& eps_in,
                           const OneStepContext& ctx) {
    std::vector<int64_t> ks(static_cast<size_t>(ctx.batch), k_star);
    auto eps_hat = net.forward(eng, eps_in, eng.use_input(ctx.cond), ks, ctx.batch);
    return one_step_postprocess(eng, eps_in, eps_hat, alpha_bar_star, ctx);
}

// F_student for stage 2 (step-free MLP).
template <class E>
typename E::V student_map(E& eng, const StudentModel& net, double alpha_bar_star,
                          const typename E::V& eps_in, const OneStepContext& ctx) {
    auto eps_hat = net.forward(eng, eps_in, eng.use_input(ctx.cond), ctx.batch);
    return one_step_postprocess(eng, eps_in, eps_hat, alpha_bar_star, ctx);
}

// Eager wrappers producing per-sample frames and clean coefficients.
SampledBatch one_step_sample(const OneStepModel& model, const NoiseSchedule& sched,
                             const std::vector<Tensor>& obs, int64_t future_len,
                             const std::vector<Tensor>& eps);
SampledBatch student_sample(const StudentModel& model, const NoiseSchedule& sched,
                            const std::vector<Tensor>& obs, int64_t future_len,
                            const std::vector<Tensor>& eps);

// F_teacher for stage 1: the full multi-step sampler seeded by ε as the
// initial noisy coefficients. Deterministic in (obs, eps, noise_seed).
FrequencyCoeffs teacher_fn_multistep(const TeacherModel& model, const NoiseSchedule& sched,
                                     const SamplerPlan& plan, const Tensor& obs,
                                     int64_t future_len, const Tensor& eps,
                                     uint64_t noise_seed);

// Eq. (3): mean over batch and elements of the squared difference.
double distill_loss(const Tensor& teacher_out, const Tensor& student_out);

struct DistillRunConfig {
    int64_t epochs = 1;
    int64_t samples_per_epoch = 50000;
    int64_t batch = 256;
    double base_lr = 3e-4;
    int64_t teacher_plan_steps = 20;  // stage 1 only
    int stage = 1;
    uint64_t seed = 0;
    double val_fraction = 0.10;
    double weight_decay = 0.0;
    std::string log_path;  // JSONL epoch records when non-empty
};

struct DistillResult {
    double initial_val_loss = 0.0;
    double final_val_loss = 0.0;
    double best_val_loss = 0.0;
    int64_t best_epoch = -1;
    std::vector<double> epoch_train_loss;
    std::vector<double> epoch_val_loss;
};

// Stage 1: copy-initialized one-step model distilled against the multi-step
// teacher. Teacher parameters are hash-checked frozen.
OneStepModel run_stage1(const TeacherModel& teacher, const NoiseSchedule& sched,
                        const std::vector<Tensor>& train_obs, int64_t future_len,
                        const DistillRunConfig& cfg, DistillResult* stats);

// Stage 2: randomly initialized MLP student distilled against the stage-1
// one-step model.
StudentModel run_stage2(const OneStepModel& teacher, const StudentConfig& student_cfg,
                        const NoiseSchedule& sched, const std::vector<Tensor>& train_obs,
                        int64_t future_len, const DistillRunConfig& cfg,
                        DistillResult* stats);

}  // namespace swiftdiff
