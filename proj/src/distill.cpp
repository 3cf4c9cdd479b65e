#include "swiftdiff/distill.hpp"

#include <chrono>
#include <cmath>
#include <fstream>

#include "swiftdiff/errors.hpp"
#include "swiftdiff/kernels.hpp"
#include "swiftdiff/optim.hpp"

namespace swiftdiff {

OneStepContext make_one_step_context(const std::vector<Tensor>& obs, int64_t future_len,
                                     int64_t coeff_rows) {
    if (obs.empty()) throw ConfigError("one_step_context: no observations");
    OneStepContext ctx;
    ctx.batch = static_cast<int64_t>(obs.size());
    ctx.coeff_rows = coeff_rows;
    ctx.channels = obs[0].cols();
    ctx.observed = obs[0].rows();
    ctx.total_len = ctx.observed + future_len;

    std::vector<Tensor> cs;
    cs.reserve(obs.size());
    for (const Tensor& o : obs) {
        if (o.rows() != ctx.observed || o.cols() != ctx.channels) {
            throw ShapeError("one_step_context: inconsistent observation shapes");
        }
        cs.push_back(observation_condition(o, ctx.total_len, coeff_rows).coeffs);
    }
    ctx.cond = kernels::vstack(cs);
    ctx.basis = dct_basis(ctx.total_len, coeff_rows);
    ctx.basis_t = kernels::transpose(ctx.basis);

    InpaintMask mask = InpaintMask::make(ctx.observed, ctx.total_len);
    ctx.mask_row = Tensor({1, ctx.total_len});
    ctx.inv_mask_row = Tensor({1, ctx.total_len});
    for (int64_t i = 0; i < ctx.total_len; ++i) {
        ctx.mask_row.at(0, i) = mask.m[static_cast<size_t>(i)];
        ctx.inv_mask_row.at(0, i) = 1.0 - mask.m[static_cast<size_t>(i)];
    }
    Tensor c_time_t =
        kernels::matmul(kernels::batched_transpose(ctx.cond, ctx.batch), ctx.basis);
    ctx.obs_part = kernels::mul(c_time_t, ctx.mask_row);
    return ctx;
}

namespace {

// Splits the stacked (B*3J, N) time-domain frames into per-sample outputs.
SampledBatch unstack_spliced(const Tensor& x_t, const Tensor& basis_t, int64_t batch,
                             int64_t channels) {
    SampledBatch out;
    Tensor y0_t = kernels::matmul(x_t, basis_t);
    out.frames.reserve(static_cast<size_t>(batch));
    out.coeffs.reserve(static_cast<size_t>(batch));
    for (int64_t i = 0; i < batch; ++i) {
        out.frames.push_back(
            kernels::transpose(kernels::slice(x_t, 0, i * channels, channels)));
        out.coeffs.push_back(
            kernels::transpose(kernels::slice(y0_t, 0, i * channels, channels)));
    }
    return out;
}

SampledBatch eager_one_step(
    const std::function<Tensor(EagerEngine&, const Tensor&, const OneStepContext&)>& net_fwd,
    const NoiseSchedule& sched, const OneStepContext& ctx, const std::vector<Tensor>& eps) {
    if (static_cast<int64_t>(eps.size()) != ctx.batch) {
        throw ConfigError("one_step_sample: need one noise tensor per observation");
    }
    Tensor eps_all = kernels::vstack(eps);
    double ab_star = sched.alpha_bar.back();

    EagerEngine eng;
    Tensor eps_hat = net_fwd(eng, eps_all, ctx);
    double sa = std::sqrt(ab_star), sn = std::sqrt(1.0 - ab_star);
    Tensor y0(eps_all.shape());
    for (int64_t i = 0; i < y0.numel(); ++i) {
        y0.at(i) = (eps_all.at(i) - sn * eps_hat.at(i)) / sa;
    }
    Tensor xd_t = kernels::matmul(kernels::batched_transpose(y0, ctx.batch), ctx.basis);
    Tensor x_t = kernels::add(ctx.obs_part, kernels::mul(xd_t, ctx.inv_mask_row));
    return unstack_spliced(x_t, ctx.basis_t, ctx.batch, ctx.channels);
}

}  // namespace

SampledBatch one_step_sample(const OneStepModel& model, const NoiseSchedule& sched,
                             const std::vector<Tensor>& obs, int64_t future_len,
                             const std::vector<Tensor>& eps) {
    OneStepContext ctx = make_one_step_context(obs, future_len, model.net.config().coeff_rows);
    auto fwd = [&](EagerEngine& eng, const Tensor& eps_all, const OneStepContext& c) {
        std::vector<int64_t> ks(static_cast<size_t>(c.batch), model.k_star);
        return model.net.forward(eng, eps_all, c.cond, ks, c.batch);
    };
    return eager_one_step(fwd, sched, ctx, eps);
}

SampledBatch student_sample(const StudentModel& model, const NoiseSchedule& sched,
                            const std::vector<Tensor>& obs, int64_t future_len,
                            const std::vector<Tensor>& eps) {
    OneStepContext ctx = make_one_step_context(obs, future_len, model.config().coeff_rows);
    auto fwd = [&](EagerEngine& eng, const Tensor& eps_all, const OneStepContext& c) {
        return model.forward(eng, eps_all, c.cond, c.batch);
    };
    return eager_one_step(fwd, sched, ctx, eps);
}

FrequencyCoeffs teacher_fn_multistep(const TeacherModel& model, const NoiseSchedule& sched,
                                     const SamplerPlan& plan, const Tensor& obs,
                                     int64_t future_len, const Tensor& eps,
                                     uint64_t noise_seed) {
    SampledBatch out =
        sample_teacher_multi(model, sched, plan, {obs}, future_len, {eps}, {noise_seed});
    int64_t n = obs.rows() + future_len;
    return FrequencyCoeffs{std::move(out.coeffs[0]), model.config().coeff_rows, n};
}

double distill_loss(const Tensor& teacher_out, const Tensor& student_out) {
    if (!teacher_out.same_shape(student_out)) {
        throw ShapeError("distill_loss: shapes " + teacher_out.shape_str() + " vs " +
                         student_out.shape_str());
    }
    double s = 0.0;
    for (int64_t i = 0; i < teacher_out.numel(); ++i) {
        double d = teacher_out.at(i) - student_out.at(i);
        s += d * d;
    }
    double loss = s / static_cast<double>(teacher_out.numel());
    if (!std::isfinite(loss)) throw NumericError("distill_loss: non-finite loss");
    return loss;
}

namespace {

struct LoopHooks {
    // Stacked (B*L, 3J) teacher targets for a batch of pairs.
    std::function<Tensor(const std::vector<Tensor>& obs, const std::vector<Tensor>& eps,
                         const std::vector<uint64_t>& seeds)>
        teacher_targets;
    // One optimization step; returns the batch loss.
    std::function<double(const std::vector<Tensor>& obs, const std::vector<Tensor>& eps,
                         const Tensor& targets, double lr)>
        train_step;
    // No-grad loss of the current student on a fixed pair set.
    std::function<double(const std::vector<Tensor>& obs, const std::vector<Tensor>& eps,
                         const Tensor& targets)>
        eval_loss;
    std::function<std::vector<double>()> snapshot;
    std::function<void(const std::vector<double>&)> restore;
};

// Per-pair noise seed: a pure function of the pair content and the run seed,
// so teacher outputs do not depend on batch composition.
uint64_t pair_noise_seed(uint64_t run_seed, const Tensor& obs, const Tensor& eps) {
    uint64_t h = fnv1a(obs.raw().data(), obs.raw().size() * sizeof(double),
                       mix64(run_seed ^ 0x7ea0c0ffee));
    return fnv1a(eps.raw().data(), eps.raw().size() * sizeof(double), h);
}

DistillResult run_distill_loop(const DistillRunConfig& cfg,
                               const std::vector<Tensor>& train_obs, int64_t coeff_rows,
                               int64_t channels, const LoopHooks& hooks) {
    if (cfg.epochs < 1 || cfg.batch < 1) {
        throw ConfigError("distill: epochs and batch must be >= 1");
    }
    if (train_obs.empty()) throw ConfigError("distill: empty training set");

    Rng rng(cfg.seed);
    Rng val_rng = rng.spawn(1);
    Rng train_rng = rng.spawn(2);

    // Fixed validation pairs (10% of one epoch's pair budget), targets cached.
    int64_t n_val = std::max<int64_t>(
        1, static_cast<int64_t>(std::llround(cfg.val_fraction *
                                             static_cast<double>(cfg.samples_per_epoch))));
    std::vector<Tensor> val_obs, val_eps;
    std::vector<uint64_t> val_seeds;
    for (int64_t i = 0; i < n_val; ++i) {
        const Tensor& o =
            train_obs[static_cast<size_t>(val_rng.uniform_int(
                static_cast<int64_t>(train_obs.size())))];
        Tensor e = val_rng.normal_tensor({coeff_rows, channels});
        val_seeds.push_back(pair_noise_seed(cfg.seed, o, e));
        val_obs.push_back(o);
        val_eps.push_back(std::move(e));
    }
    Tensor val_targets = hooks.teacher_targets(val_obs, val_eps, val_seeds);

    DistillResult res;
    res.initial_val_loss = hooks.eval_loss(val_obs, val_eps, val_targets);
    res.best_val_loss = res.initial_val_loss;
    res.best_epoch = -1;
    std::vector<double> best_params = hooks.snapshot();

    std::ofstream log;
    if (!cfg.log_path.empty()) {
        log.open(cfg.log_path);
        if (!log) throw DataError(DataError::Code::io, "cannot open log " + cfg.log_path);
    }

    int64_t batches = (cfg.samples_per_epoch + cfg.batch - 1) / cfg.batch;
    int divergent_epochs = 0;
    for (int64_t epoch = 0; epoch < cfg.epochs; ++epoch) {
        auto t0 = std::chrono::steady_clock::now();
        double lr = cosine_lr(epoch, cfg.epochs, cfg.base_lr);
        double epoch_loss = 0.0;
        for (int64_t bi = 0; bi < batches; ++bi) {
            std::vector<Tensor> obs_b, eps_b;
            std::vector<uint64_t> seeds_b;
            obs_b.reserve(static_cast<size_t>(cfg.batch));
            for (int64_t i = 0; i < cfg.batch; ++i) {
                const Tensor& o =
                    train_obs[static_cast<size_t>(train_rng.uniform_int(
                        static_cast<int64_t>(train_obs.size())))];
                Tensor e = train_rng.normal_tensor({coeff_rows, channels});
                seeds_b.push_back(pair_noise_seed(cfg.seed, o, e));
                obs_b.push_back(o);
                eps_b.push_back(std::move(e));
            }
            Tensor targets = hooks.teacher_targets(obs_b, eps_b, seeds_b);
            epoch_loss += hooks.train_step(obs_b, eps_b, targets, lr);
        }
        epoch_loss /= static_cast<double>(batches);
        double val_loss = hooks.eval_loss(val_obs, val_eps, val_targets);
        res.epoch_train_loss.push_back(epoch_loss);
        res.epoch_val_loss.push_back(val_loss);

        if (val_loss < res.best_val_loss) {
            res.best_val_loss = val_loss;
            res.best_epoch = epoch;
            best_params = hooks.snapshot();
        }

        if (log.is_open()) {
            auto ms = std::chrono::duration_cast<std::chrono::milliseconds>(
                          std::chrono::steady_clock::now() - t0)
                          .count();
            log << "{\"epoch\":" << epoch << ",\"train_loss\":" << epoch_loss
                << ",\"val_loss\":" << val_loss << ",\"lr\":" << lr << ",\"wall_ms\":" << ms
                << "}\n";
        }

        if (val_loss > 10.0 * res.initial_val_loss) {
            if (++divergent_epochs >= 3) {
                throw NumericError(
                    "distill: divergence, val loss " + std::to_string(val_loss) +
                    " > 10x initial " + std::to_string(res.initial_val_loss) +
                    " for 3 consecutive epochs (epoch " + std::to_string(epoch) + ")");
            }
        } else {
            divergent_epochs = 0;
        }
    }

    hooks.restore(best_params);
    res.final_val_loss = hooks.eval_loss(val_obs, val_eps, val_targets);
    return res;
}

}  // namespace

OneStepModel run_stage1(const TeacherModel& teacher, const NoiseSchedule& sched,
                        const std::vector<Tensor>& train_obs, int64_t future_len,
                        const DistillRunConfig& cfg, DistillResult* stats) {
    uint64_t teacher_hash = teacher.params().content_hash();
    SamplerPlan plan = SamplerPlan::evenly_spaced(sched.k_train, cfg.teacher_plan_steps);

    OneStepModel student{teacher, sched.k_train - 1};  // exact parameter copy
    const int64_t l = teacher.config().coeff_rows;
    const int64_t ch = teacher.config().channels();
    double ab_star = sched.alpha_bar.back();

    OptimizerState opt = OptimizerState::init(student.net.params().pointers(),
                                              AdamWHyper{cfg.base_lr, 0.9, 0.999, 1e-8,
                                                         cfg.weight_decay});

    LoopHooks hooks;
    hooks.teacher_targets = [&](const std::vector<Tensor>& obs,
                                const std::vector<Tensor>& eps,
                                const std::vector<uint64_t>& seeds) {
        SampledBatch out =
            sample_teacher_multi(teacher, sched, plan, obs, future_len, eps, seeds);
        return kernels::vstack(out.coeffs);
    };
    hooks.train_step = [&](const std::vector<Tensor>& obs, const std::vector<Tensor>& eps,
                           const Tensor& targets, double lr) {
        OneStepContext ctx = make_one_step_context(obs, future_len, l);
        Tape tape;
        TapeEngine eng(tape);
        Value eps_in = tape.input(kernels::vstack(eps));
        Value out = one_step_map(eng, student.net, student.k_star, ab_star, eps_in, ctx);
        Value diff = ad::sub(tape.input(targets), out);
        Value loss_v = ad::mean_all(ad::mul(diff, diff));
        tape.backward(loss_v);
        std::vector<Tensor*> params = student.net.params().pointers();
        std::vector<Tensor> grads;
        grads.reserve(params.size());
        for (Tensor* p : params) grads.push_back(eng.grad_of(*p));
        opt.hyper.lr = lr;
        adamw_step(params, grads, opt);
        return loss_v.tensor().at(0);
    };
    hooks.eval_loss = [&](const std::vector<Tensor>& obs, const std::vector<Tensor>& eps,
                          const Tensor& targets) {
        SampledBatch out = one_step_sample(student, sched, obs, future_len, eps);
        return distill_loss(targets, kernels::vstack(out.coeffs));
    };
    hooks.snapshot = [&] { return student.net.params().flatten(); };
    hooks.restore = [&](const std::vector<double>& flat) {
        student.net.params().load_flat(flat);
    };

    DistillResult res = run_distill_loop(cfg, train_obs, l, ch, hooks);
    if (stats) *stats = res;

    if (teacher.params().content_hash() != teacher_hash) {
        throw NumericError("stage1: teacher parameters mutated during distillation");
    }
    return student;
}

StudentModel run_stage2(const OneStepModel& teacher, const StudentConfig& student_cfg,
                        const NoiseSchedule& sched, const std::vector<Tensor>& train_obs,
                        int64_t future_len, const DistillRunConfig& cfg,
                        DistillResult* stats) {
    if (student_cfg.coeff_rows != teacher.net.config().coeff_rows ||
        student_cfg.joints != teacher.net.config().joints) {
        throw ConfigError("stage2: student L/J must match the teacher");
    }
    uint64_t teacher_hash = teacher.net.params().content_hash();

    Rng init_rng = Rng(cfg.seed).spawn(0x57d);
    StudentModel student(student_cfg, init_rng);
    const int64_t l = student_cfg.coeff_rows;
    const int64_t ch = student_cfg.channels();
    double ab_star = sched.alpha_bar.back();

    OptimizerState opt = OptimizerState::init(student.params().pointers(),
                                              AdamWHyper{cfg.base_lr, 0.9, 0.999, 1e-8,
                                                         cfg.weight_decay});

    LoopHooks hooks;
    hooks.teacher_targets = [&](const std::vector<Tensor>& obs,
                                const std::vector<Tensor>& eps,
                                const std::vector<uint64_t>&) {
        SampledBatch out = one_step_sample(teacher, sched, obs, future_len, eps);
        return kernels::vstack(out.coeffs);
    };
    hooks.train_step = [&](const std::vector<Tensor>& obs, const std::vector<Tensor>& eps,
                           const Tensor& targets, double lr) {
        OneStepContext ctx = make_one_step_context(obs, future_len, l);
        Tape tape;
        TapeEngine eng(tape);
        Value eps_in = tape.input(kernels::vstack(eps));
        Value out = student_map(eng, student, ab_star, eps_in, ctx);
        Value diff = ad::sub(tape.input(targets), out);
        Value loss_v = ad::mean_all(ad::mul(diff, diff));
        tape.backward(loss_v);
        std::vector<Tensor*> params = student.params().pointers();
        std::vector<Tensor> grads;
        grads.reserve(params.size());
        for (Tensor* p : params) grads.push_back(eng.grad_of(*p));
        opt.hyper.lr = lr;
        adamw_step(params, grads, opt);
        return loss_v.tensor().at(0);
    };
    hooks.eval_loss = [&](const std::vector<Tensor>& obs, const std::vector<Tensor>& eps,
                          const Tensor& targets) {
        SampledBatch out = student_sample(student, sched, obs, future_len, eps);
        return distill_loss(targets, kernels::vstack(out.coeffs));
    };
    hooks.snapshot = [&] { return student.params().flatten(); };
    hooks.restore = [&](const std::vector<double>& flat) { student.params().load_flat(flat); };

    DistillResult res = run_distill_loop(cfg, train_obs, l, ch, hooks);
    if (stats) *stats = res;

    if (teacher.net.params().content_hash() != teacher_hash) {
        throw NumericError("stage2: teacher parameters mutated during distillation");
    }
    return student;
}

}  // namespace swiftdiff
