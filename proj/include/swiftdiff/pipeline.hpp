#pragma once

#include <optional>
#include <string>

#include "swiftdiff/checkpoint.hpp"
#include "swiftdiff/config.hpp"
#include "swiftdiff/dataset_io.hpp"
#include "swiftdiff/metrics.hpp"

namespace swiftdiff {

// ---- shared drivers ---------------------------------------------------------

struct TeacherTrainStats {
    std::vector<double> step_losses;
    double early_mean = 0.0;  // mean over a window ending at step 10
    double final_mean = 0.0;  // mean over the last window
};

TeacherModel train_teacher_driver(const ExperimentConfig& cfg,
                                  const std::vector<MotionSequence>& train,
                                  TeacherTrainStats* stats);

// S sampled futures for one observation, for any checkpoint kind.
PredictSamplesFn sampler_for(const LoadedModel& model, int64_t future_len,
                             int64_t plan_steps_override = 0);

// One single-observation prediction, the unit the latency benchmark times.
std::function<void()> single_prediction_runner(const LoadedModel& model, const Tensor& obs,
                                               int64_t future_len,
                                               int64_t plan_steps_override = 0);

// BO trial evaluation: trains a stage-2 student at the per-trial budget and
// scores it with the configured objective case.
TrialEvalFn make_stage2_trial_eval(const ExperimentConfig& cfg, const OneStepModel& teacher,
                                   const NoiseSchedule& sched,
                                   const std::vector<MotionSequence>& train,
                                   const std::vector<MotionSequence>& test);

void write_metrics_report(const std::string& path, const MetricsReport& rep,
                          const nlohmann::ordered_json& meta, double inference_time_s);
void write_bench_report(const std::string& path, const BenchResult& bench,
                        const nlohmann::ordered_json& meta);

// ---- CLI commands (throw on failure; main maps exceptions to exit codes) ----

namespace cli {

struct CommonOpts {
    std::optional<uint64_t> seed;
    bool print_config = false;
};

void cmd_gen_data(const std::string& spec_path, const std::string& out_dir,
                  const CommonOpts& opts);
void cmd_train_teacher(const std::string& config_path, const std::string& data_dir,
                       const std::string& out_ckpt, const CommonOpts& opts);
void cmd_distill(int stage, const std::string& teacher_ckpt, const std::string& config_path,
                 const std::string& data_dir, const std::string& out_ckpt,
                 const CommonOpts& opts);
void cmd_bayesopt(int case_id, const std::string& config_path, const std::string& ledger,
                  int64_t parallel, const std::string& data_dir,
                  const std::string& teacher_ckpt, const CommonOpts& opts);
void cmd_eval(const std::string& model_ckpt, const std::string& data_dir, int64_t samples,
              const std::string& report, double tau, int64_t plan_steps_override,
              const CommonOpts& opts);
void cmd_bench(const std::string& model_ckpt, int64_t repeats, const std::string& report,
               const CommonOpts& opts);

}  // namespace cli

}  // namespace swiftdiff
