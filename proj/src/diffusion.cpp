#include "swiftdiff/diffusion.hpp"

#include <cmath>

#include "swiftdiff/errors.hpp"
#include "swiftdiff/kernels.hpp"

namespace swiftdiff {

double NoiseSchedule::alpha_bar_at(int64_t k) const {
    if (k < 0 || k >= k_train) {
        throw ConfigError("schedule: step " + std::to_string(k) + " out of range [0, " +
                          std::to_string(k_train) + ")");
    }
    return alpha_bar[static_cast<size_t>(k)];
}

NoiseSchedule make_schedule(int64_t k_train, const std::string& kind) {
    if (k_train < 1) throw ConfigError("make_schedule: k_train must be >= 1");
    if (kind != "cosine") throw ConfigError("make_schedule: unknown schedule kind '" + kind + "'");

    // ᾱ built from clipped betas so every entry stays strictly inside (0,1).
    auto f = [&](double k) {
        double s = 0.008;
        double v = std::cos(((k / static_cast<double>(k_train) + s) / (1.0 + s)) * M_PI / 2.0);
        return v * v;
    };
    NoiseSchedule sched;
    sched.k_train = k_train;
    sched.alpha_bar.resize(static_cast<size_t>(k_train));
    double cum = 1.0;
    for (int64_t k = 0; k < k_train; ++k) {
        double beta = 1.0 - f(static_cast<double>(k + 1)) / f(static_cast<double>(k));
        beta = std::min(beta, 0.999);
        cum *= 1.0 - beta;
        sched.alpha_bar[static_cast<size_t>(k)] = cum;
    }
    return sched;
}

SamplerPlan SamplerPlan::evenly_spaced(int64_t k_train, int64_t n_steps) {
    if (n_steps < 1 || n_steps > k_train) {
        throw ConfigError("sampler plan: n_steps must lie in [1, k_train]");
    }
    SamplerPlan plan;
    plan.steps.resize(static_cast<size_t>(n_steps));
    for (int64_t i = 0; i < n_steps; ++i) {
        int64_t idx;
        if (n_steps == 1) {
            idx = k_train - 1;
        } else {
            // descending from K−1 to 0 inclusive
            idx = (k_train - 1) - i * (k_train - 1) / (n_steps - 1);
        }
        plan.steps[static_cast<size_t>(i)] = idx;
    }
    for (size_t i = 1; i < plan.steps.size(); ++i) {
        if (plan.steps[i] >= plan.steps[i - 1]) {
            throw ConfigError("sampler plan: step indices must strictly decrease");
        }
    }
    return plan;
}

FrequencyCoeffs q_sample(const FrequencyCoeffs& y0, int64_t k, const Tensor& eps,
                         const NoiseSchedule& sched) {
    if (!eps.same_shape(y0.coeffs)) {
        throw ShapeError("q_sample: noise " + eps.shape_str() + " vs coeffs " +
                         y0.coeffs.shape_str());
    }
    double ab = sched.alpha_bar_at(k);
    double sa = std::sqrt(ab), sn = std::sqrt(1.0 - ab);
    Tensor out(y0.coeffs.shape());
    for (int64_t i = 0; i < out.numel(); ++i) {
        out.at(i) = sa * y0.coeffs.at(i) + sn * eps.at(i);
    }
    return FrequencyCoeffs{std::move(out), y0.retained, y0.source_len};
}

double teacher_train_step(TeacherModel& model, const std::vector<MotionSequence>& batch,
                          const NoiseSchedule& sched, OptimizerState& opt, Rng& rng) {
    if (batch.empty()) throw ConfigError("teacher_train_step: empty batch");
    const int64_t l = model.config().coeff_rows;
    const int64_t ch = model.config().channels();
    const int64_t b = static_cast<int64_t>(batch.size());

    std::vector<Tensor> ys, cs, es;
    std::vector<int64_t> ks;
    ys.reserve(batch.size());
    cs.reserve(batch.size());
    es.reserve(batch.size());
    for (const MotionSequence& m : batch) {
        if (m.frames.cols() != ch) {
            throw ShapeError("teacher_train_step: sequence channels " +
                             std::to_string(m.frames.cols()) + " != model 3J " +
                             std::to_string(ch));
        }
        int64_t k = rng.uniform_int(sched.k_train);
        Tensor eps = rng.normal_tensor({l, ch});
        FrequencyCoeffs y0 = to_frequency(m, l);
        FrequencyCoeffs yk = q_sample(y0, k, eps, sched);
        FrequencyCoeffs c = observation_condition(m.observed_frames(), m.total_len(), l);
        ks.push_back(k);
        ys.push_back(std::move(yk.coeffs));
        cs.push_back(std::move(c.coeffs));
        es.push_back(std::move(eps));
    }

    Tape tape;
    TapeEngine eng(tape);
    double loss;
    try {
        Value y_in = tape.input(kernels::vstack(ys));
        Value c_in = tape.input(kernels::vstack(cs));
        Value eps_hat = model.forward(eng, y_in, c_in, ks, b);
        Value diff = ad::sub(tape.input(kernels::vstack(es)), eps_hat);
        Value loss_v = ad::mean_all(ad::mul(diff, diff));
        loss = loss_v.tensor().at(0);
        tape.backward(loss_v);
    } catch (const NumericError& e) {
        std::string ctx = "teacher_train_step: non-finite loss (steps k = [";
        for (size_t i = 0; i < ks.size(); ++i) {
            if (i) ctx += ", ";
            ctx += std::to_string(ks[i]);
        }
        throw NumericError(ctx + "]): " + e.what());
    }

    std::vector<Tensor*> params = model.params().pointers();
    std::vector<Tensor> grads;
    grads.reserve(params.size());
    for (Tensor* p : params) grads.push_back(eng.grad_of(*p));
    adamw_step(params, grads, opt);
    return loss;
}

SampledBatch sample_denoiser_multi(const DenoiseFn& denoiser, int64_t coeff_rows,
                                   const NoiseSchedule& sched, const SamplerPlan& plan,
                                   const std::vector<Tensor>& obs, int64_t future_len,
                                   const std::vector<Tensor>& init_y,
                                   const std::vector<uint64_t>& noise_seeds) {
    const int64_t b = static_cast<int64_t>(obs.size());
    if (b == 0) throw ConfigError("sample_teacher: no observations");
    if (noise_seeds.size() != obs.size()) {
        throw ConfigError("sample_teacher: need one noise seed per sample");
    }
    if (!init_y.empty() && init_y.size() != obs.size()) {
        throw ConfigError("sample_teacher: init_y count mismatch");
    }
    for (int64_t k : plan.steps) (void)sched.alpha_bar_at(k);  // plan validity

    const int64_t l = coeff_rows;
    const int64_t ch = obs[0].cols();
    const int64_t h = obs[0].rows();
    const int64_t n = h + future_len;
    if (l > n) throw ShapeError("sample_teacher: L exceeds sequence length");

    Tensor basis = dct_basis(n, l);             // (L, N)
    Tensor basis_t = kernels::transpose(basis);  // (N, L)
    InpaintMask mask = InpaintMask::make(h, n);
    Tensor mask_row({1, n});
    Tensor inv_mask_row({1, n});
    for (int64_t i = 0; i < n; ++i) {
        mask_row.at(0, i) = mask.m[static_cast<size_t>(i)];
        inv_mask_row.at(0, i) = 1.0 - mask.m[static_cast<size_t>(i)];
    }

    std::vector<Tensor> cs, y_init;
    cs.reserve(obs.size());
    y_init.reserve(obs.size());
    for (int64_t i = 0; i < b; ++i) {
        if (obs[static_cast<size_t>(i)].rows() != h) {
            throw ShapeError("sample_teacher: observations have differing lengths");
        }
        cs.push_back(observation_condition(obs[static_cast<size_t>(i)], n, l).coeffs);
        if (init_y.empty()) {
            // stream 0 is the initial noise; streams si+1 are per-step Eq. (1) noise
            Rng r = Rng(noise_seeds[static_cast<size_t>(i)]).spawn(0);
            y_init.push_back(r.normal_tensor({l, ch}));
        } else {
            y_init.push_back(init_y[static_cast<size_t>(i)]);
        }
    }
    Tensor c_all = kernels::vstack(cs);  // (B*L, 3J)
    Tensor y = kernels::vstack(y_init);
    // M ⊙ IDCT(c), transposed layout (B*3J, N); fixed across steps
    Tensor c_time_t = kernels::matmul(kernels::batched_transpose(c_all, b), basis);
    Tensor obs_part = kernels::mul(c_time_t, mask_row);

    const double range_guard = 1e6;
    const int64_t n_steps = plan.n_steps();
    for (int64_t si = 0; si < n_steps; ++si) {
        int64_t k = plan.steps[static_cast<size_t>(si)];
        int64_t k_next = si + 1 < n_steps ? plan.steps[static_cast<size_t>(si + 1)] : -1;
        double ab = sched.alpha_bar_at(k);
        double ab_next = k_next >= 0 ? sched.alpha_bar_at(k_next) : 1.0;

        Tensor eps_hat = denoiser(y, c_all, k, b);

        double sa = std::sqrt(ab), sn = std::sqrt(1.0 - ab);
        double san = std::sqrt(ab_next), snn = std::sqrt(1.0 - ab_next);
        Tensor y_d(y.shape());
        for (int64_t i = 0; i < y.numel(); ++i) {
            double y0_hat = (y.at(i) - sn * eps_hat.at(i)) / sa;
            y_d.at(i) = san * y0_hat + snn * eps_hat.at(i);
            if (std::abs(y_d.at(i)) > range_guard) {
                throw NumericError("sample_teacher: diverged at step k=" + std::to_string(k));
            }
        }

        Tensor xd_t = kernels::matmul(kernels::batched_transpose(y_d, b), basis);
        if (k_next >= 0) {
            // Eq. (1) splice at the target noise level with fresh observation noise
            Tensor eps_obs({b * l, ch});
            for (int64_t i = 0; i < b; ++i) {
                Rng r = Rng(noise_seeds[static_cast<size_t>(i)]).spawn(
                    static_cast<uint64_t>(si) + 1);
                for (int64_t j = 0; j < l * ch; ++j) eps_obs.at(i * l * ch + j) = r.normal();
            }
            Tensor y_o(y.shape());
            for (int64_t i = 0; i < y.numel(); ++i) {
                y_o.at(i) = san * c_all.at(i) + snn * eps_obs.at(i);
            }
            Tensor xo_t = kernels::matmul(kernels::batched_transpose(y_o, b), basis);
            Tensor x_t = kernels::add(kernels::mul(xo_t, mask_row),
                                      kernels::mul(xd_t, inv_mask_row));
            y = kernels::batched_transpose(kernels::matmul(x_t, basis_t), b);
        } else {
            // final step: ᾱ = 1, so the observed rows come from c exactly
            Tensor x_t = kernels::add(obs_part, kernels::mul(xd_t, inv_mask_row));
            SampledBatch out;
            out.frames.reserve(obs.size());
            out.coeffs.reserve(obs.size());
            Tensor y0_t = kernels::matmul(x_t, basis_t);
            for (int64_t i = 0; i < b; ++i) {
                Tensor xi = kernels::transpose(kernels::slice(x_t, 0, i * ch, ch));
                Tensor yi = kernels::transpose(kernels::slice(y0_t, 0, i * ch, ch));
                out.frames.push_back(std::move(xi));
                out.coeffs.push_back(std::move(yi));
            }
            return out;
        }
    }
    throw ConfigError("sample_teacher: empty plan");
}

SampledBatch sample_teacher_multi(const TeacherModel& model, const NoiseSchedule& sched,
                                  const SamplerPlan& plan, const std::vector<Tensor>& obs,
                                  int64_t future_len, const std::vector<Tensor>& init_y,
                                  const std::vector<uint64_t>& noise_seeds) {
    DenoiseFn denoiser = [&model](const Tensor& y, const Tensor& cond, int64_t k,
                                  int64_t batch) {
        EagerEngine eng;
        return model.forward(eng, y, cond,
                             std::vector<int64_t>(static_cast<size_t>(batch), k), batch);
    };
    return sample_denoiser_multi(denoiser, model.config().coeff_rows, sched, plan, obs,
                                 future_len, init_y, noise_seeds);
}

MotionSequence sample_teacher(const TeacherModel& model, const NoiseSchedule& sched,
                              const SamplerPlan& plan, const Tensor& obs,
                              int64_t future_len, Rng& rng) {
    SampledBatch out = sample_teacher_multi(model, sched, plan, {obs}, future_len, {},
                                            {rng.next_u64()});
    return make_motion(std::move(out.frames[0]), obs.rows(), future_len);
}

}  // namespace swiftdiff
