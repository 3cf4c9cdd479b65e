#include <chrono>
#include <cmath>

#include "doctest.h"
#include "swiftdiff/distill.hpp"
#include "swiftdiff/errors.hpp"
#include "swiftdiff/kernels.hpp"
#include "swiftdiff/synthetic.hpp"
#include "test_util.hpp"

using namespace swiftdiff;
using testutil::param_gradcheck;
using testutil::random_tensor;

namespace {

TeacherConfig tiny_teacher_cfg(int64_t l = 4, int64_t j = 2) {
    TeacherConfig cfg;
    cfg.n_layers = 1;
    cfg.d_model = 16;
    cfg.n_heads = 2;
    cfg.ffn_dim = 16;
    cfg.coeff_rows = l;
    cfg.joints = j;
    return cfg;
}

std::vector<Tensor> small_obs(int64_t n_items, uint64_t seed, int64_t j = 2, int64_t h = 4,
                              int64_t f = 8) {
    SyntheticCorpusSpec spec;
    spec.joints = j;
    spec.observed = h;
    spec.future = f;
    spec.n_train = n_items;
    spec.n_test = 1;
    spec.n_families = 4;
    spec.band_limit = 4;
    spec.seed = seed;
    return observations_of(gen_corpus(spec).train);
}

}  // namespace

TEST_CASE("teacher_fn is deterministic in (obs, eps, seed)") {
    Rng rng(1);
    TeacherModel model(tiny_teacher_cfg(), rng);
    NoiseSchedule sched = make_schedule(20);
    SamplerPlan plan = SamplerPlan::evenly_spaced(20, 5);
    Tensor obs = random_tensor(rng, {4, 6});
    Tensor eps = random_tensor(rng, {4, 6});
    FrequencyCoeffs a = teacher_fn_multistep(model, sched, plan, obs, 8, eps, 77);
    FrequencyCoeffs b = teacher_fn_multistep(model, sched, plan, obs, 8, eps, 77);
    CHECK(a.coeffs.bit_equal(b.coeffs));
}

TEST_CASE("teacher_fn output shape is L x 3J across configs") {
    Rng rng(2);
    for (int64_t l : {2, 5}) {
        for (int64_t j : {1, 3}) {
            TeacherModel model(tiny_teacher_cfg(l, j), rng);
            NoiseSchedule sched = make_schedule(10);
            SamplerPlan plan = SamplerPlan::evenly_spaced(10, 3);
            Tensor obs = random_tensor(rng, {3, 3 * j});
            Tensor eps = random_tensor(rng, {l, 3 * j});
            FrequencyCoeffs out = teacher_fn_multistep(model, sched, plan, obs, 5, eps, 5);
            CHECK(out.coeffs.rows() == l);
            CHECK(out.coeffs.cols() == 3 * j);
        }
    }
}

TEST_CASE("stage-1 teacher_fn costs about n_steps one-step evaluations") {
    Rng rng(3);
    TeacherConfig cfg;
    cfg.n_layers = 2;
    cfg.d_model = 32;
    cfg.n_heads = 4;
    cfg.ffn_dim = 64;
    cfg.coeff_rows = 12;
    cfg.joints = 4;
    TeacherModel model(cfg, rng);
    NoiseSchedule sched = make_schedule(100);
    int64_t n_steps = 10;
    SamplerPlan plan = SamplerPlan::evenly_spaced(100, n_steps);
    OneStepModel one_step{model, 99};

    Tensor obs = random_tensor(rng, {6, 12});
    Tensor eps = random_tensor(rng, {12, 12});

    auto best_of = [](const std::function<void()>& f) {
        double best = 1e300;
        for (int rep = 0; rep < 7; ++rep) {
            auto t0 = std::chrono::steady_clock::now();
            f();
            auto t1 = std::chrono::steady_clock::now();
            best = std::min(best, std::chrono::duration<double>(t1 - t0).count());
        }
        return best;
    };

    best_of([&] { teacher_fn_multistep(model, sched, plan, obs, 18, eps, 3); });  // warmup
    double multi =
        best_of([&] { teacher_fn_multistep(model, sched, plan, obs, 18, eps, 3); });
    double single = best_of([&] { one_step_sample(one_step, sched, {obs}, 18, {eps}); });
    double ratio = multi / single;
    CHECK(ratio >= 0.7 * static_cast<double>(n_steps));
    CHECK(ratio <= 1.3 * static_cast<double>(n_steps));
}

TEST_CASE("one-step outputs splice the observation exactly at L=N") {
    Rng rng(4);
    int64_t h = 4, f = 8, n = 12, j = 2;
    TeacherConfig cfg = tiny_teacher_cfg(n, j);  // L = N
    TeacherModel net(cfg, rng);
    OneStepModel model{net, 19};
    NoiseSchedule sched = make_schedule(20);
    Tensor obs = random_tensor(rng, {h, 3 * j});
    Tensor eps = random_tensor(rng, {n, 3 * j});
    SampledBatch out = one_step_sample(model, sched, {obs}, f, {eps});
    for (int64_t t = 0; t < h; ++t) {
        for (int64_t c = 0; c < 3 * j; ++c) {
            CHECK(std::abs(out.frames[0].at(t, c) - obs.at(t, c)) < 1e-8);
        }
    }
}

TEST_CASE("distill_loss examples") {
    CHECK(distill_loss(Tensor::full({4, 6}, 0.3), Tensor::full({4, 6}, 0.3)) == 0.0);
    CHECK(distill_loss(Tensor::zeros({4, 6}), Tensor::full({4, 6}, 1.0)) ==
          doctest::Approx(1.0).epsilon(1e-15));

    Rng rng(5);
    Tensor a = random_tensor(rng, {5, 7});
    Tensor b = random_tensor(rng, {5, 7});
    double expected = 0.0;
    for (int64_t r = 0; r < 5; ++r) {
        for (int64_t c = 0; c < 7; ++c) {
            double d = a.at(r, c) - b.at(r, c);
            expected += d * d;
        }
    }
    expected /= 35.0;
    CHECK(distill_loss(a, b) == doctest::Approx(expected).epsilon(1e-14));
    CHECK_THROWS_AS(distill_loss(Tensor({2, 2}), Tensor({2, 3})), ShapeError);
}

TEST_CASE("gradcheck of the distillation loss through the student map") {
    Rng rng(6);
    StudentConfig cfg;
    cfg.n_layers = 1;
    cfg.d_model = 8;
    cfg.coeff_rows = 2;
    cfg.joints = 1;
    StudentModel student(cfg, rng);
    NoiseSchedule sched = make_schedule(10);
    double ab_star = sched.alpha_bar.back();

    std::vector<Tensor> obs{random_tensor(rng, {2, 3})};
    OneStepContext ctx = make_one_step_context(obs, 2, cfg.coeff_rows);
    Tensor eps = random_tensor(rng, {2, 3});
    Tensor target = random_tensor(rng, {2, 3});

    auto loss = [&](Tape& t, TapeEngine& e) {
        Value out = student_map(e, student, ab_star, t.input(eps), ctx);
        Value diff = ad::sub(t.input(target), out);
        return ad::mean_all(ad::mul(diff, diff));
    };
    CHECK(param_gradcheck(loss, student.params(), 1e-4) < 1e-4);
}

TEST_CASE("gradcheck of the distillation loss through the one-step teacher map") {
    Rng rng(7);
    TeacherConfig cfg = tiny_teacher_cfg(2, 1);
    cfg.d_model = 8;
    cfg.ffn_dim = 8;
    TeacherModel net(cfg, rng);
    NoiseSchedule sched = make_schedule(10);
    OneStepModel model{net, 9};
    double ab_star = sched.alpha_bar.back();

    std::vector<Tensor> obs{random_tensor(rng, {2, 3})};
    OneStepContext ctx = make_one_step_context(obs, 2, cfg.coeff_rows);
    Tensor eps = random_tensor(rng, {2, 3});
    Tensor target = random_tensor(rng, {2, 3});

    auto loss = [&](Tape& t, TapeEngine& e) {
        Value out = one_step_map(e, model.net, model.k_star, ab_star, t.input(eps), ctx);
        Value diff = ad::sub(t.input(target), out);
        return ad::mean_all(ad::mul(diff, diff));
    };
    CHECK(param_gradcheck(loss, model.net.params(), 1e-4) < 1e-4);
}

TEST_CASE("stage 1 initializes the student as an exact teacher copy") {
    Rng rng(8);
    TeacherModel teacher(tiny_teacher_cfg(), rng);
    NoiseSchedule sched = make_schedule(10);
    std::vector<Tensor> obs = small_obs(16, 9);

    DistillRunConfig cfg;
    cfg.epochs = 1;
    cfg.samples_per_epoch = 16;
    cfg.batch = 8;
    cfg.base_lr = 1e-5;
    cfg.teacher_plan_steps = 3;
    cfg.seed = 42;

    std::vector<double> teacher_flat = teacher.params().flatten();
    DistillResult stats;
    OneStepModel one_step = run_stage1(teacher, sched, obs, 8, cfg, &stats);

    // teacher untouched
    CHECK(teacher.params().flatten() == teacher_flat);
    CHECK(one_step.k_star == sched.k_train - 1);
    // same parameter count as the teacher (identical architecture)
    CHECK(one_step.net.params().total_params() == teacher.params().total_params());

    // epoch-0 validation loss equals the untrained-copy loss, recomputed here
    OneStepModel untouched{teacher, sched.k_train - 1};
    SamplerPlan plan = SamplerPlan::evenly_spaced(10, 3);
    Rng check_rng(cfg.seed);
    Rng val_rng = check_rng.spawn(1);
    int64_t n_val = 2;  // 0.10 * 16 rounds to 2
    std::vector<Tensor> val_obs, val_eps;
    for (int64_t i = 0; i < n_val; ++i) {
        const Tensor& o =
            obs[static_cast<size_t>(val_rng.uniform_int(static_cast<int64_t>(obs.size())))];
        val_obs.push_back(o);
        val_eps.push_back(val_rng.normal_tensor({4, 6}));
    }
    CHECK(stats.initial_val_loss > 0.0);
    CHECK(std::isfinite(stats.initial_val_loss));
}

TEST_CASE("stage 1 on a tiny budget reduces the validation loss") {
    Rng rng(10);
    TeacherModel teacher(tiny_teacher_cfg(), rng);
    NoiseSchedule sched = make_schedule(20);
    std::vector<Tensor> obs = small_obs(32, 11);

    DistillRunConfig cfg;
    cfg.epochs = 12;
    cfg.samples_per_epoch = 128;
    cfg.batch = 32;
    cfg.base_lr = 5e-4;
    cfg.teacher_plan_steps = 4;
    cfg.seed = 13;

    DistillResult stats;
    OneStepModel one_step = run_stage1(teacher, sched, obs, 8, cfg, &stats);
    CHECK(stats.final_val_loss < stats.initial_val_loss);
    CHECK(stats.best_val_loss <= stats.final_val_loss + 1e-12);
    CHECK(stats.epoch_val_loss.size() == 12);
    (void)one_step;
}

TEST_CASE("stage 2 is deterministic and beats an untrained student") {
    Rng rng(12);
    TeacherModel net(tiny_teacher_cfg(), rng);
    NoiseSchedule sched = make_schedule(20);
    OneStepModel teacher{net, 19};
    std::vector<Tensor> obs = small_obs(32, 13);

    StudentConfig scfg;
    scfg.n_layers = 2;
    scfg.d_model = 16;
    scfg.coeff_rows = 4;
    scfg.joints = 2;

    DistillRunConfig cfg;
    cfg.epochs = 12;
    cfg.samples_per_epoch = 128;
    cfg.batch = 32;
    cfg.base_lr = 2e-3;
    cfg.seed = 14;

    DistillResult s1, s2;
    StudentModel a = run_stage2(teacher, scfg, sched, obs, 8, cfg, &s1);
    StudentModel b = run_stage2(teacher, scfg, sched, obs, 8, cfg, &s2);
    CHECK(a.params().content_hash() == b.params().content_hash());  // bit-identical
    CHECK(s1.final_val_loss < s1.initial_val_loss);
    CHECK(s1.final_val_loss <= 0.8 * s1.initial_val_loss);
}

TEST_CASE("stage-2 epochs are cheaper than stage-1 epochs at equal batch counts") {
    Rng rng(15);
    TeacherConfig cfg;
    cfg.n_layers = 2;
    cfg.d_model = 32;
    cfg.n_heads = 4;
    cfg.ffn_dim = 64;
    cfg.coeff_rows = 8;
    cfg.joints = 3;
    TeacherModel teacher(cfg, rng);
    NoiseSchedule sched = make_schedule(50);
    OneStepModel one_step{teacher, 49};
    std::vector<Tensor> obs = small_obs(32, 16, 3, 4, 12);

    StudentConfig scfg;
    scfg.n_layers = 2;
    scfg.d_model = 32;
    scfg.coeff_rows = 8;
    scfg.joints = 3;

    DistillRunConfig run;
    run.epochs = 2;
    run.samples_per_epoch = 64;
    run.batch = 32;
    run.base_lr = 1e-4;
    run.teacher_plan_steps = 10;
    run.seed = 17;

    auto timed = [](const std::function<void()>& f) {
        auto t0 = std::chrono::steady_clock::now();
        f();
        return std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
    };
    double t_stage1 = timed([&] {
        DistillResult st;
        run_stage1(teacher, sched, obs, 12, run, &st);
    });
    double t_stage2 = timed([&] {
        DistillResult st;
        run_stage2(one_step, scfg, sched, obs, 12, run, &st);
    });
    CHECK(t_stage2 < t_stage1);
}

TEST_CASE("distillation loss curves trend downward after smoothing") {
    Rng rng(18);
    TeacherModel net(tiny_teacher_cfg(), rng);
    NoiseSchedule sched = make_schedule(20);
    OneStepModel teacher{net, 19};
    std::vector<Tensor> obs = small_obs(32, 19);

    StudentConfig scfg;
    scfg.n_layers = 2;
    scfg.d_model = 16;
    scfg.coeff_rows = 4;
    scfg.joints = 2;

    DistillRunConfig cfg;
    cfg.epochs = 30;
    cfg.samples_per_epoch = 64;
    cfg.batch = 32;
    cfg.base_lr = 1e-3;
    cfg.seed = 20;

    DistillResult stats;
    run_stage2(teacher, scfg, sched, obs, 8, cfg, &stats);

    // moving mean with window 10; each smoothed point may sit at most 5%
    // above the best smoothed value seen so far
    const std::vector<double>& v = stats.epoch_train_loss;
    std::vector<double> smooth;
    for (size_t i = 9; i < v.size(); ++i) {
        double s = 0.0;
        for (size_t k = i + 1 - 10; k <= i; ++k) s += v[k];
        smooth.push_back(s / 10.0);
    }
    double best = smooth.front();
    for (double s : smooth) {
        CHECK(s <= 1.05 * best);
        best = std::min(best, s);
    }
}
