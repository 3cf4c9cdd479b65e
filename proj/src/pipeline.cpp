#include "swiftdiff/pipeline.hpp"

#include <cmath>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <mutex>
#include <sstream>

#include "swiftdiff/errors.hpp"
#include "swiftdiff/kernels.hpp"

namespace swiftdiff {

namespace {
using ordered_json = nlohmann::ordered_json;

std::string hash_hex(uint64_t h) {
    std::ostringstream os;
    os << "0x" << std::hex << h;
    return os.str();
}
}  // namespace

TeacherModel train_teacher_driver(const ExperimentConfig& cfg,
                                  const std::vector<MotionSequence>& train,
                                  TeacherTrainStats* stats) {
    if (train.empty()) throw ConfigError("train_teacher: empty training set");
    NoiseSchedule sched = make_schedule(cfg.k_train, cfg.schedule_kind);
    Rng init_rng = Rng(cfg.teacher_train.seed).spawn(0x7e4c);
    TeacherModel model(cfg.teacher, init_rng);
    std::cerr << "[teacher] " << model.params().total_params() << " parameters\n";

    OptimizerState opt = OptimizerState::init(model.params().pointers(),
                                              AdamWHyper{cfg.teacher_train.base_lr});
    Rng rng = Rng(cfg.teacher_train.seed).spawn(0x7e4d);

    int64_t batches = (cfg.teacher_train.samples_per_epoch + cfg.teacher_train.batch - 1) /
                      cfg.teacher_train.batch;
    TeacherTrainStats st;
    for (int64_t epoch = 0; epoch < cfg.teacher_train.epochs; ++epoch) {
        opt.hyper.lr = cosine_lr(epoch, cfg.teacher_train.epochs, cfg.teacher_train.base_lr);
        for (int64_t bi = 0; bi < batches; ++bi) {
            std::vector<MotionSequence> batch;
            batch.reserve(static_cast<size_t>(cfg.teacher_train.batch));
            for (int64_t i = 0; i < cfg.teacher_train.batch; ++i) {
                batch.push_back(
                    train[static_cast<size_t>(rng.uniform_int(
                        static_cast<int64_t>(train.size())))]);
            }
            st.step_losses.push_back(teacher_train_step(model, batch, sched, opt, rng));
        }
    }

    size_t n = st.step_losses.size();
    size_t w = std::min<size_t>(10, n);
    for (size_t i = 0; i < w; ++i) {
        st.early_mean += st.step_losses[std::min(n - 1, i)];
        st.final_mean += st.step_losses[n - 1 - i];
    }
    st.early_mean /= static_cast<double>(w);
    st.final_mean /= static_cast<double>(w);
    if (stats) *stats = st;
    return model;
}

PredictSamplesFn sampler_for(const LoadedModel& model, int64_t future_len,
                             int64_t plan_steps_override) {
    if (model.kind == "teacher") {
        const TeacherModel* net = model.teacher.get();
        NoiseSchedule sched = model.sched;
        int64_t steps = plan_steps_override > 0 ? plan_steps_override
                        : model.plan_steps > 0  ? model.plan_steps
                                                : 20;
        SamplerPlan plan = SamplerPlan::evenly_spaced(sched.k_train, steps);
        return [net, sched, plan, future_len](const Tensor& obs, int64_t s, uint64_t seed) {
            std::vector<Tensor> obs_rep(static_cast<size_t>(s), obs);
            std::vector<uint64_t> seeds;
            for (int64_t i = 0; i < s; ++i) {
                seeds.push_back(mix64(seed ^ (0x5a17ull + static_cast<uint64_t>(i))));
            }
            SampledBatch out =
                sample_teacher_multi(*net, sched, plan, obs_rep, future_len, {}, seeds);
            std::vector<Tensor> futures;
            for (Tensor& f : out.frames) {
                futures.push_back(kernels::slice(f, 0, obs.rows(), future_len));
            }
            return futures;
        };
    }

    // one-step kinds: fresh ε per sample
    auto draw_eps = [](int64_t s, int64_t l, int64_t ch, uint64_t seed) {
        std::vector<Tensor> eps;
        for (int64_t i = 0; i < s; ++i) {
            Rng r(mix64(seed ^ (0xe9 + static_cast<uint64_t>(i))));
            eps.push_back(r.normal_tensor({l, ch}));
        }
        return eps;
    };

    if (model.kind == "one_step") {
        const OneStepModel* net = model.one_step.get();
        NoiseSchedule sched = model.sched;
        return [net, sched, future_len, draw_eps](const Tensor& obs, int64_t s,
                                                  uint64_t seed) {
            std::vector<Tensor> obs_rep(static_cast<size_t>(s), obs);
            std::vector<Tensor> eps = draw_eps(s, net->net.config().coeff_rows,
                                               net->net.config().channels(), seed);
            SampledBatch out = one_step_sample(*net, sched, obs_rep, future_len, eps);
            std::vector<Tensor> futures;
            for (Tensor& f : out.frames) {
                futures.push_back(kernels::slice(f, 0, obs.rows(), future_len));
            }
            return futures;
        };
    }
    if (model.kind == "student") {
        const StudentModel* net = model.student.get();
        NoiseSchedule sched = model.sched;
        return [net, sched, future_len, draw_eps](const Tensor& obs, int64_t s,
                                                  uint64_t seed) {
            std::vector<Tensor> obs_rep(static_cast<size_t>(s), obs);
            std::vector<Tensor> eps =
                draw_eps(s, net->config().coeff_rows, net->config().channels(), seed);
            SampledBatch out = student_sample(*net, sched, obs_rep, future_len, eps);
            std::vector<Tensor> futures;
            for (Tensor& f : out.frames) {
                futures.push_back(kernels::slice(f, 0, obs.rows(), future_len));
            }
            return futures;
        };
    }
    throw ConfigError("sampler_for: unknown model kind " + model.kind);
}

std::function<void()> single_prediction_runner(const LoadedModel& model, const Tensor& obs,
                                               int64_t future_len,
                                               int64_t plan_steps_override) {
    PredictSamplesFn sampler = sampler_for(model, future_len, plan_steps_override);
    Tensor obs_copy = obs;
    return [sampler, obs_copy, future_len] {
        std::vector<Tensor> out = sampler(obs_copy, 1, 0x6e11c);
        if (out.empty() || out[0].rows() != future_len) {
            throw NumericError("benchmark runner produced no prediction");
        }
    };
}

TrialEvalFn make_stage2_trial_eval(const ExperimentConfig& cfg, const OneStepModel& teacher,
                                   const NoiseSchedule& sched,
                                   const std::vector<MotionSequence>& train,
                                   const std::vector<MotionSequence>& test) {
    const int64_t l = teacher.net.config().coeff_rows;
    const int64_t ch = teacher.net.config().channels();
    const int64_t future_len = test.at(0).future;

    // Fixed validation pairs with one ε stream shared across all trials.
    auto val = std::make_shared<std::vector<std::pair<Tensor, Tensor>>>();
    {
        Rng vr = Rng(cfg.bayesopt.seed).spawn(0x7a1);
        int64_t m = std::min<int64_t>(cfg.bayesopt.val_pairs,
                                      static_cast<int64_t>(test.size()) * 4);
        for (int64_t i = 0; i < m; ++i) {
            const MotionSequence& item =
                test[static_cast<size_t>(vr.uniform_int(static_cast<int64_t>(test.size())))];
            val->emplace_back(item.observed_frames(), vr.normal_tensor({l, ch}));
        }
    }
    auto teacher_outs = std::make_shared<std::vector<Tensor>>();
    {
        std::vector<Tensor> obs, eps;
        for (auto& [o, e] : *val) {
            obs.push_back(o);
            eps.push_back(e);
        }
        *teacher_outs = one_step_sample(teacher, sched, obs, future_len, eps).coeffs;
    }

    // Teacher-side quantities for case 2, computed once.
    auto teacher_metrics = std::make_shared<MetricsReport>();
    auto teacher_time = std::make_shared<double>(0.0);
    auto timing_mutex = std::make_shared<std::mutex>();
    if (cfg.bayesopt.case_id == 2) {
        LoadedModel lm;
        lm.kind = "one_step";
        lm.sched = sched;
        Rng dummy(0);
        lm.one_step = std::make_unique<OneStepModel>(
            OneStepModel{TeacherModel(teacher.net.config(), dummy), teacher.k_star});
        lm.one_step->net.params().copy_from(teacher.net.params());
        *teacher_metrics = evaluate_model(test, sampler_for(lm, future_len),
                                          cfg.eval.samples, cfg.eval.tau, cfg.eval.seed);
        BenchResult b = benchmark_inference(
            single_prediction_runner(lm, test[0].observed_frames(), future_len),
            cfg.bench.repeats);
        *teacher_time = b.mean_seconds;
    }

    std::vector<Tensor> train_obs = observations_of(train);

    return [=, &teacher](int64_t trial, const std::vector<double>& raw, uint64_t seed) {
        StudentConfig scfg = cfg.student;
        double lr = raw.at(0);
        scfg.n_layers = static_cast<int64_t>(std::llround(raw.at(1)));
        scfg.d_model = static_cast<int64_t>(std::llround(raw.at(2)));

        DistillRunConfig run = cfg.stage2;
        run.base_lr = lr;
        run.epochs = cfg.bayesopt.epochs_per_trial;
        run.seed = seed;
        run.log_path.clear();

        DistillResult stats;
        StudentModel student =
            run_stage2(teacher, scfg, sched, train_obs, future_len, run, &stats);

        std::vector<Tensor> obs, eps;
        for (auto& [o, e] : *val) {
            obs.push_back(o);
            eps.push_back(e);
        }
        std::vector<Tensor> student_outs =
            student_sample(student, sched, obs, future_len, eps).coeffs;

        TrialOutcome out;
        if (cfg.bayesopt.case_id == 1) {
            out.g = objective_case1(*teacher_outs, student_outs);
            return out;
        }

        LoadedModel lm;
        lm.kind = "student";
        lm.sched = sched;
        Rng dummy(0);
        lm.student = std::make_unique<StudentModel>(scfg, dummy);
        lm.student->params().copy_from(student.params());
        MetricsReport srep = evaluate_model(test, sampler_for(lm, future_len),
                                            cfg.eval.samples, cfg.eval.tau, cfg.eval.seed);
        double stime;
        {
            // one timing section at a time; parallel trials would distort it
            std::lock_guard<std::mutex> lock(*timing_mutex);
            BenchResult b = benchmark_inference(
                single_prediction_runner(lm, test[0].observed_frames(), future_len),
                cfg.bench.repeats);
            stime = b.mean_seconds;
        }
        out.has_components = true;
        out.components.ratio_err = case2_ratio_err(*teacher_outs, student_outs);
        out.components.ratio_acc =
            (srep.ade.best - teacher_metrics->ade.best) / teacher_metrics->ade.best;
        out.components.ratio_inf = (stime - *teacher_time) / *teacher_time;
        out.g = objective_case2(out.components);
        (void)trial;
        return out;
    };
}

void write_metrics_report(const std::string& path, const MetricsReport& rep,
                          const ordered_json& meta, double inference_time_s) {
    std::ostringstream table;
    table << "# metrics report\n";
    table << "# APD normalization: mean L2 over unordered sample pairs, "
             "2/(S(S-1)) * sum_{i<j}\n";
    table << "# columns: InferenceTime(s) APD(m) ADE-B/M/W(m) FDE-B/M/W(m) "
             "MMADE-B/M/W(m) MMFDE-B/M/W(m)\n";
    auto bmw = [](const Bmw& b) {
        std::ostringstream os;
        os << b.best << "/" << b.median << "/" << b.worst;
        return os.str();
    };
    table << inference_time_s << "  " << rep.apd << "  " << bmw(rep.ade) << "  "
          << bmw(rep.fde) << "  " << bmw(rep.mmade) << "  " << bmw(rep.mmfde) << "\n";

    ordered_json rec = meta;
    rec["record"] = "metrics";
    rec["n_items"] = rep.n_items;
    rec["n_samples"] = rep.n_samples;
    rec["tau"] = rep.tau;
    rec["apd"] = rep.apd;
    rec["ade"] = {{"best", rep.ade.best}, {"median", rep.ade.median}, {"worst", rep.ade.worst}};
    rec["fde"] = {{"best", rep.fde.best}, {"median", rep.fde.median}, {"worst", rep.fde.worst}};
    rec["mmade"] = {{"best", rep.mmade.best},
                    {"median", rep.mmade.median},
                    {"worst", rep.mmade.worst}};
    rec["mmfde"] = {{"best", rep.mmfde.best},
                    {"median", rep.mmfde.median},
                    {"worst", rep.mmfde.worst}};
    rec["inference_time_s"] = inference_time_s;  // timing field, excluded from
                                                 // determinism comparisons
    atomic_write_file(path, table.str());
    atomic_write_file(path + ".jsonl", rec.dump() + "\n");
}

void write_bench_report(const std::string& path, const BenchResult& bench,
                        const ordered_json& meta) {
    std::ostringstream table;
    table << "# inference latency (single observation, one future)\n";
    table << "mean_s " << bench.mean_seconds << "\n";
    table << "min_s " << bench.min_seconds << "\n";
    table << "std_s " << bench.std_seconds << "\n";
    table << "repeats " << bench.repeats << "\n";

    ordered_json rec = meta;
    rec["record"] = "bench";
    rec["mean_s"] = bench.mean_seconds;
    rec["min_s"] = bench.min_seconds;
    rec["std_s"] = bench.std_seconds;
    rec["repeats"] = bench.repeats;
    rec["timer_warning"] = bench.timer_warning;
    atomic_write_file(path, table.str());
    atomic_write_file(path + ".jsonl", rec.dump() + "\n");
}

// ---- CLI commands -----------------------------------------------------------

namespace cli {

namespace {

ordered_json provenance_json(const ExperimentConfig& cfg, uint64_t seed,
                             const ordered_json& extra) {
    ordered_json p;
    p["seed"] = seed;
    p["config_hash"] = hash_hex(config_hash(cfg));
    for (auto it = extra.begin(); it != extra.end(); ++it) p[it.key()] = it.value();
    return p;
}

void maybe_print_config(const ExperimentConfig& cfg, bool print) {
    if (print) std::cout << config_to_json(cfg).dump(2) << "\n";
}

}  // namespace

void cmd_gen_data(const std::string& spec_path, const std::string& out_dir,
                  const CommonOpts& opts) {
    std::ifstream in(spec_path);
    if (!in) throw DataError(DataError::Code::io, "cannot open spec " + spec_path);
    ordered_json j = ordered_json::parse(in, nullptr, false);
    if (j.is_discarded()) throw ConfigError(spec_path + ": invalid JSON");

    SyntheticCorpusSpec spec = j.contains("data") ? corpus_spec_from_json(j.at("data"))
                                                  : corpus_spec_from_json(j);
    if (opts.seed) spec.seed = *opts.seed;
    if (opts.print_config) std::cout << corpus_spec_to_json(spec).dump(2) << "\n";

    SyntheticCorpus corpus = gen_corpus(spec);
    std::filesystem::create_directories(out_dir);

    ordered_json meta;
    meta["spec"] = corpus_spec_to_json(spec);
    meta["seed"] = spec.seed;
    meta["step_bound"] = corpus.step_bound;
    {
        ordered_json m = meta;
        m["split"] = "train";
        write_dataset(out_dir + "/train.bin", corpus.train, corpus.train_modes, m);
    }
    {
        ordered_json m = meta;
        m["split"] = "test";
        write_dataset(out_dir + "/test.bin", corpus.test, corpus.test_modes, m);
    }
    std::cerr << "[gen-data] wrote " << corpus.train.size() << " train / "
              << corpus.test.size() << " test items to " << out_dir << "\n";
}

void cmd_train_teacher(const std::string& config_path, const std::string& data_dir,
                       const std::string& out_ckpt, const CommonOpts& opts) {
    ExperimentConfig cfg = load_config(config_path);
    if (opts.seed) cfg.teacher_train.seed = *opts.seed;
    maybe_print_config(cfg, opts.print_config);

    Dataset train = read_dataset(data_dir + "/train.bin");
    TeacherTrainStats stats;
    TeacherModel model = train_teacher_driver(cfg, train.items, &stats);

    NoiseSchedule sched = make_schedule(cfg.k_train, cfg.schedule_kind);
    ordered_json extra;
    extra["epochs"] = cfg.teacher_train.epochs;
    extra["final_train_loss"] = stats.final_mean;
    save_teacher(out_ckpt, model, sched, cfg.eval.teacher_plan_steps,
                 provenance_json(cfg, cfg.teacher_train.seed, extra));
    std::cerr << "[train-teacher] final window loss " << stats.final_mean << " (early "
              << stats.early_mean << ") -> " << out_ckpt << "\n";
}

void cmd_distill(int stage, const std::string& teacher_ckpt, const std::string& config_path,
                 const std::string& data_dir, const std::string& out_ckpt,
                 const CommonOpts& opts) {
    if (stage != 1 && stage != 2) throw ConfigError("distill: stage must be 1 or 2");
    ExperimentConfig cfg = load_config(config_path);
    maybe_print_config(cfg, opts.print_config);

    Dataset train = read_dataset(data_dir + "/train.bin");
    std::vector<Tensor> train_obs = observations_of(train.items);
    int64_t future_len = train.future;

    LoadedModel teacher = load_model(teacher_ckpt);
    DistillResult stats;

    if (stage == 1) {
        if (teacher.kind != "teacher") {
            throw ConfigError("distill stage 1 expects a multi-step teacher checkpoint");
        }
        DistillRunConfig run = cfg.stage1;
        if (opts.seed) run.seed = *opts.seed;
        run.log_path = out_ckpt + ".log.jsonl";
        OneStepModel one_step = run_stage1(*teacher.teacher, teacher.sched, train_obs,
                                           future_len, run, &stats);
        ordered_json extra;
        extra["epochs"] = run.epochs;
        extra["initial_val_loss"] = stats.initial_val_loss;
        extra["final_val_loss"] = stats.final_val_loss;
        save_one_step(out_ckpt, one_step, teacher.sched,
                      provenance_json(cfg, run.seed, extra));
    } else {
        if (teacher.kind != "one_step") {
            throw ConfigError("distill stage 2 expects a one-step teacher checkpoint");
        }
        DistillRunConfig run = cfg.stage2;
        if (opts.seed) run.seed = *opts.seed;
        run.log_path = out_ckpt + ".log.jsonl";
        StudentModel student = run_stage2(*teacher.one_step, cfg.student, teacher.sched,
                                          train_obs, future_len, run, &stats);
        ordered_json extra;
        extra["epochs"] = run.epochs;
        extra["initial_val_loss"] = stats.initial_val_loss;
        extra["final_val_loss"] = stats.final_val_loss;
        save_student(out_ckpt, student, teacher.sched,
                     provenance_json(cfg, run.seed, extra));
    }
    std::cerr << "[distill " << stage << "] val loss " << stats.initial_val_loss << " -> "
              << stats.final_val_loss << " (best " << stats.best_val_loss << ") -> "
              << out_ckpt << "\n";
}

void cmd_bayesopt(int case_id, const std::string& config_path, const std::string& ledger,
                  int64_t parallel, const std::string& data_dir,
                  const std::string& teacher_ckpt, const CommonOpts& opts) {
    if (case_id != 1 && case_id != 2) throw ConfigError("bayesopt: case must be 1 or 2");
    ExperimentConfig cfg = load_config(config_path);
    cfg.bayesopt.case_id = case_id;
    if (parallel > 0) cfg.bayesopt.parallel = parallel;
    if (opts.seed) cfg.bayesopt.seed = *opts.seed;
    maybe_print_config(cfg, opts.print_config);

    Dataset train = read_dataset(data_dir + "/train.bin");
    Dataset test = read_dataset(data_dir + "/test.bin");

    LoadedModel teacher = load_model(teacher_ckpt);
    if (teacher.kind != "one_step") {
        throw ConfigError("bayesopt expects the stage-1 one-step teacher checkpoint");
    }

    BoStudyConfig study;
    study.space = cfg.bayesopt.space;
    study.iterations = cfg.bayesopt.iterations;
    study.parallel = cfg.bayesopt.parallel;
    study.seed = cfg.bayesopt.seed;
    study.ledger_path = ledger;

    TrialEvalFn eval = make_stage2_trial_eval(cfg, *teacher.one_step, teacher.sched,
                                              train.items, test.items);
    BoStudyResult res = run_bo_study(study, eval);
    std::cerr << "[bayesopt] best g " << res.best_g << " at trial " << res.best_trial
              << "\n";
    if (!res.best_raw.empty()) {
        std::cerr << "[bayesopt] best lambda:";
        for (size_t i = 0; i < res.best_raw.size(); ++i) {
            std::cerr << " " << study.space.dims[i].name << "=" << res.best_raw[i];
        }
        std::cerr << "\n";
    }
}

void cmd_eval(const std::string& model_ckpt, const std::string& data_dir, int64_t samples,
              const std::string& report, double tau, int64_t plan_steps_override,
              const CommonOpts& opts) {
    Dataset test = read_dataset(data_dir + "/test.bin");
    LoadedModel model = load_model(model_ckpt);
    uint64_t seed = opts.seed.value_or(9);

    MetricsReport rep = evaluate_model(test.items, sampler_for(model, test.future,
                                                               plan_steps_override),
                                       samples, tau, seed);
    BenchResult bench = benchmark_inference(
        single_prediction_runner(model, test.items[0].observed_frames(), test.future,
                                 plan_steps_override),
        10);

    ordered_json meta;
    meta["model"] = model_ckpt;
    meta["kind"] = model.kind;
    meta["seed"] = seed;
    write_metrics_report(report, rep, meta, bench.mean_seconds);
    std::cerr << "[eval] ADE best " << rep.ade.best << ", APD " << rep.apd << " -> "
              << report << "\n";
}

void cmd_bench(const std::string& model_ckpt, int64_t repeats, const std::string& report,
               const CommonOpts& opts) {
    LoadedModel model = load_model(model_ckpt);

    // A fixed synthetic observation; latency does not depend on its values.
    int64_t ch = 0, l = 0;
    if (model.kind == "teacher") {
        ch = model.teacher->config().channels();
        l = model.teacher->config().coeff_rows;
    } else if (model.kind == "one_step") {
        ch = model.one_step->net.config().channels();
        l = model.one_step->net.config().coeff_rows;
    } else {
        ch = model.student->config().channels();
        l = model.student->config().coeff_rows;
    }
    int64_t h = l;
    int64_t future_len = l;  // N = 2L, so coeff_rows is always valid
    Rng rng(opts.seed.value_or(1));
    Tensor obs = rng.normal_tensor({h, ch});

    BenchResult bench = benchmark_inference(
        single_prediction_runner(model, obs, future_len), repeats);

    ordered_json meta;
    meta["model"] = model_ckpt;
    meta["kind"] = model.kind;
    write_bench_report(report, bench, meta);
    std::cerr << "[bench] mean " << bench.mean_seconds << " s over " << bench.repeats
              << " repeats -> " << report << "\n";
}

}  // namespace cli

}  // namespace swiftdiff
