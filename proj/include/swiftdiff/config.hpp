#pragma once

#include <cstdint>
#include <string>

#include "json.hpp"
#include "swiftdiff/bayesopt.hpp"
#include "swiftdiff/distill.hpp"
#include "swiftdiff/models.hpp"
#include "swiftdiff/synthetic.hpp"

namespace swiftdiff {

// One declarative document covering every stage. Validated on load; unknown
// keys are rejected.
struct ExperimentConfig {
    SyntheticCorpusSpec data;
    int64_t coeff_rows = 0;  // L; 0 means (H+F)/2
    int64_t k_train = 1000;
    std::string schedule_kind = "cosine";

    TeacherConfig teacher;  // coeff_rows/joints filled from data+frequency
    StudentConfig student;

    struct TeacherTrain {
        int64_t epochs = 100;
        int64_t samples_per_epoch = 2000;
        int64_t batch = 256;
        double base_lr = 1e-3;
        uint64_t seed = 1;
    } teacher_train;

    DistillRunConfig stage1;
    DistillRunConfig stage2;

    struct Bo {
        int case_id = 1;
        int64_t iterations = 40;
        int64_t parallel = 5;
        uint64_t seed = 5;
        int64_t epochs_per_trial = 8;  // reduced per-trial stage-2 budget
        int64_t val_pairs = 64;
        std::string reference = "one_step";  // teacher for Eqs. 10-13
        SearchSpace space;
    } bayesopt;

    struct Eval {
        int64_t samples = 10;
        double tau = 0.5;
        int64_t teacher_plan_steps = 10;
        uint64_t seed = 9;
    } eval;

    struct Bench {
        int64_t repeats = 10;
    } bench;

    int64_t effective_coeff_rows() const {
        return coeff_rows > 0 ? coeff_rows : data.total_len() / 2;
    }
};

ExperimentConfig load_config(const std::string& path);
ExperimentConfig config_from_json(const nlohmann::ordered_json& j);
nlohmann::ordered_json config_to_json(const ExperimentConfig& cfg);

// FNV-1a over the canonical serialization.
uint64_t config_hash(const ExperimentConfig& cfg);

nlohmann::ordered_json corpus_spec_to_json(const SyntheticCorpusSpec& spec);
SyntheticCorpusSpec corpus_spec_from_json(const nlohmann::ordered_json& j);

}  // namespace swiftdiff
