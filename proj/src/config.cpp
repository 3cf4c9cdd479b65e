#include "swiftdiff/config.hpp"

#include <fstream>
#include <set>

#include "swiftdiff/errors.hpp"

namespace swiftdiff {

namespace {

using ordered_json = nlohmann::ordered_json;

void reject_unknown(const ordered_json& j, const std::set<std::string>& allowed,
                    const std::string& where) {
    if (!j.is_object()) throw ConfigError(where + ": expected an object");
    for (auto it = j.begin(); it != j.end(); ++it) {
        if (!allowed.count(it.key())) {
            throw ConfigError(where + ": unknown key '" + it.key() + "'");
        }
    }
}

template <typename T>
T get_or(const ordered_json& j, const std::string& key, T fallback) {
    if (!j.contains(key)) return fallback;
    return j.at(key).get<T>();
}

}  // namespace

ordered_json corpus_spec_to_json(const SyntheticCorpusSpec& spec) {
    return ordered_json{{"joints", spec.joints},
                        {"observed", spec.observed},
                        {"future", spec.future},
                        {"n_train", spec.n_train},
                        {"n_test", spec.n_test},
                        {"n_modes", spec.n_modes},
                        {"n_families", spec.n_families},
                        {"band_limit", spec.band_limit},
                        {"amplitude", spec.amplitude},
                        {"mode_amplitude", spec.mode_amplitude},
                        {"noise_floor", spec.noise_floor},
                        {"seed", spec.seed}};
}

SyntheticCorpusSpec corpus_spec_from_json(const ordered_json& j) {
    reject_unknown(j,
                   {"joints", "observed", "future", "n_train", "n_test", "n_modes",
                    "n_families", "band_limit", "amplitude", "mode_amplitude",
                    "noise_floor", "seed"},
                   "data");
    SyntheticCorpusSpec spec;
    spec.joints = get_or<int64_t>(j, "joints", spec.joints);
    spec.observed = get_or<int64_t>(j, "observed", spec.observed);
    spec.future = get_or<int64_t>(j, "future", spec.future);
    spec.n_train = get_or<int64_t>(j, "n_train", spec.n_train);
    spec.n_test = get_or<int64_t>(j, "n_test", spec.n_test);
    spec.n_modes = get_or<int64_t>(j, "n_modes", spec.n_modes);
    spec.n_families = get_or<int64_t>(j, "n_families", spec.n_families);
    spec.band_limit = get_or<int64_t>(j, "band_limit", spec.band_limit);
    spec.amplitude = get_or<double>(j, "amplitude", spec.amplitude);
    spec.mode_amplitude = get_or<double>(j, "mode_amplitude", spec.mode_amplitude);
    spec.noise_floor = get_or<double>(j, "noise_floor", spec.noise_floor);
    spec.seed = get_or<uint64_t>(j, "seed", spec.seed);
    spec.validate();
    return spec;
}

namespace {

DistillRunConfig distill_from_json(const ordered_json& j, const std::string& where,
                                   bool stage1) {
    std::set<std::string> allowed = {"epochs", "samples_per_epoch", "batch",
                                     "base_lr", "seed", "weight_decay"};
    if (stage1) allowed.insert("teacher_plan_steps");
    reject_unknown(j, allowed, where);
    DistillRunConfig cfg;
    cfg.stage = stage1 ? 1 : 2;
    cfg.epochs = get_or<int64_t>(j, "epochs", 1);
    cfg.samples_per_epoch = get_or<int64_t>(j, "samples_per_epoch", 50000);
    cfg.batch = get_or<int64_t>(j, "batch", 256);
    cfg.base_lr = get_or<double>(j, "base_lr", 3e-4);
    cfg.seed = get_or<uint64_t>(j, "seed", stage1 ? 12 : 13);
    cfg.weight_decay = get_or<double>(j, "weight_decay", 0.0);
    if (stage1) cfg.teacher_plan_steps = get_or<int64_t>(j, "teacher_plan_steps", 20);
    return cfg;
}

SearchSpace space_from_json(const ordered_json& j) {
    reject_unknown(j, {"lr", "n_layers", "d_model"}, "bayesopt.space");
    SearchSpace space;
    {
        auto lr = j.at("lr").get<std::vector<double>>();
        if (lr.size() != 2) throw ConfigError("bayesopt.space.lr: expected [lo, hi]");
        space.dims.push_back(
            SearchDim{"lr", SearchDim::Kind::log_continuous, lr[0], lr[1], 1});
    }
    {
        auto nl = j.at("n_layers").get<std::vector<double>>();
        if (nl.size() != 2) throw ConfigError("bayesopt.space.n_layers: expected [lo, hi]");
        space.dims.push_back(
            SearchDim{"n_layers", SearchDim::Kind::integer, nl[0], nl[1], 1});
    }
    {
        auto dm = j.at("d_model").get<std::vector<double>>();
        if (dm.size() != 3) {
            throw ConfigError("bayesopt.space.d_model: expected [lo, hi, step]");
        }
        space.dims.push_back(SearchDim{"d_model", SearchDim::Kind::integer, dm[0], dm[1],
                                       static_cast<int64_t>(dm[2])});
    }
    space.validate();
    return space;
}

ordered_json space_to_json(const SearchSpace& space) {
    ordered_json j;
    for (const SearchDim& d : space.dims) {
        if (d.kind == SearchDim::Kind::integer && d.name == "d_model") {
            j[d.name] = {d.lo, d.hi, static_cast<double>(d.step)};
        } else {
            j[d.name] = {d.lo, d.hi};
        }
    }
    return j;
}

}  // namespace

ExperimentConfig config_from_json(const ordered_json& j) {
    reject_unknown(j,
                   {"data", "frequency", "schedule", "teacher", "student", "teacher_train",
                    "stage1", "stage2", "bayesopt", "eval", "bench"},
                   "config");
    ExperimentConfig cfg;
    cfg.data = corpus_spec_from_json(j.at("data"));

    if (j.contains("frequency")) {
        reject_unknown(j.at("frequency"), {"coeff_rows"}, "frequency");
        cfg.coeff_rows = get_or<int64_t>(j.at("frequency"), "coeff_rows", 0);
    }
    if (cfg.effective_coeff_rows() < 1 || cfg.effective_coeff_rows() > cfg.data.total_len()) {
        throw ConfigError("frequency.coeff_rows: L must lie in [1, H+F]");
    }

    if (j.contains("schedule")) {
        reject_unknown(j.at("schedule"), {"k_train", "kind"}, "schedule");
        cfg.k_train = get_or<int64_t>(j.at("schedule"), "k_train", 1000);
        cfg.schedule_kind = get_or<std::string>(j.at("schedule"), "kind", "cosine");
    }

    if (j.contains("teacher")) {
        reject_unknown(j.at("teacher"),
                       {"n_layers", "d_model", "n_heads", "ffn_dim", "se_reduction"},
                       "teacher");
        const auto& t = j.at("teacher");
        cfg.teacher.n_layers = get_or<int64_t>(t, "n_layers", cfg.teacher.n_layers);
        cfg.teacher.d_model = get_or<int64_t>(t, "d_model", cfg.teacher.d_model);
        cfg.teacher.n_heads = get_or<int64_t>(t, "n_heads", cfg.teacher.n_heads);
        cfg.teacher.ffn_dim = get_or<int64_t>(t, "ffn_dim", cfg.teacher.ffn_dim);
        cfg.teacher.se_reduction = get_or<int64_t>(t, "se_reduction", cfg.teacher.se_reduction);
    }
    cfg.teacher.coeff_rows = cfg.effective_coeff_rows();
    cfg.teacher.joints = cfg.data.joints;
    cfg.teacher.validate();

    if (j.contains("student")) {
        reject_unknown(j.at("student"),
                       {"n_layers", "d_model", "se_reduction", "seq_expand", "chan_expand"},
                       "student");
        const auto& s = j.at("student");
        cfg.student.n_layers = get_or<int64_t>(s, "n_layers", cfg.student.n_layers);
        cfg.student.d_model = get_or<int64_t>(s, "d_model", cfg.student.d_model);
        cfg.student.se_reduction = get_or<int64_t>(s, "se_reduction", cfg.student.se_reduction);
        cfg.student.seq_expand = get_or<int64_t>(s, "seq_expand", cfg.student.seq_expand);
        cfg.student.chan_expand = get_or<int64_t>(s, "chan_expand", cfg.student.chan_expand);
    }
    cfg.student.coeff_rows = cfg.effective_coeff_rows();
    cfg.student.joints = cfg.data.joints;
    cfg.student.validate();

    if (j.contains("teacher_train")) {
        reject_unknown(j.at("teacher_train"),
                       {"epochs", "samples_per_epoch", "batch", "base_lr", "seed"},
                       "teacher_train");
        const auto& t = j.at("teacher_train");
        cfg.teacher_train.epochs = get_or<int64_t>(t, "epochs", cfg.teacher_train.epochs);
        cfg.teacher_train.samples_per_epoch =
            get_or<int64_t>(t, "samples_per_epoch", cfg.teacher_train.samples_per_epoch);
        cfg.teacher_train.batch = get_or<int64_t>(t, "batch", cfg.teacher_train.batch);
        cfg.teacher_train.base_lr = get_or<double>(t, "base_lr", cfg.teacher_train.base_lr);
        cfg.teacher_train.seed = get_or<uint64_t>(t, "seed", cfg.teacher_train.seed);
    }

    cfg.stage1 = j.contains("stage1") ? distill_from_json(j.at("stage1"), "stage1", true)
                                      : DistillRunConfig{};
    cfg.stage2 = j.contains("stage2") ? distill_from_json(j.at("stage2"), "stage2", false)
                                      : DistillRunConfig{};
    cfg.stage1.stage = 1;
    cfg.stage2.stage = 2;

    if (j.contains("bayesopt")) {
        reject_unknown(j.at("bayesopt"),
                       {"case", "iterations", "parallel", "seed", "epochs_per_trial",
                        "val_pairs", "reference", "space"},
                       "bayesopt");
        const auto& b = j.at("bayesopt");
        cfg.bayesopt.case_id = static_cast<int>(get_or<int64_t>(b, "case", 1));
        cfg.bayesopt.iterations = get_or<int64_t>(b, "iterations", 40);
        cfg.bayesopt.parallel = get_or<int64_t>(b, "parallel", 5);
        cfg.bayesopt.seed = get_or<uint64_t>(b, "seed", 5);
        cfg.bayesopt.epochs_per_trial = get_or<int64_t>(b, "epochs_per_trial", 8);
        cfg.bayesopt.val_pairs = get_or<int64_t>(b, "val_pairs", 64);
        cfg.bayesopt.reference = get_or<std::string>(b, "reference", "one_step");
        if (cfg.bayesopt.reference != "one_step" && cfg.bayesopt.reference != "multistep") {
            throw ConfigError("bayesopt.reference must be 'one_step' or 'multistep'");
        }
        if (b.contains("space")) cfg.bayesopt.space = space_from_json(b.at("space"));
    }
    if (cfg.bayesopt.space.dims.empty()) {
        cfg.bayesopt.space.dims = {
            SearchDim{"lr", SearchDim::Kind::log_continuous, 1e-4, 1e-3, 1},
            SearchDim{"n_layers", SearchDim::Kind::integer, 2, 4, 1},
            SearchDim{"d_model", SearchDim::Kind::integer, 32, 64, 16}};
    }

    if (j.contains("eval")) {
        reject_unknown(j.at("eval"), {"samples", "tau", "teacher_plan_steps", "seed"},
                       "eval");
        const auto& e = j.at("eval");
        cfg.eval.samples = get_or<int64_t>(e, "samples", cfg.eval.samples);
        cfg.eval.tau = get_or<double>(e, "tau", cfg.eval.tau);
        cfg.eval.teacher_plan_steps =
            get_or<int64_t>(e, "teacher_plan_steps", cfg.eval.teacher_plan_steps);
        cfg.eval.seed = get_or<uint64_t>(e, "seed", cfg.eval.seed);
    }
    if (j.contains("bench")) {
        reject_unknown(j.at("bench"), {"repeats"}, "bench");
        cfg.bench.repeats = get_or<int64_t>(j.at("bench"), "repeats", 10);
    }
    return cfg;
}

ExperimentConfig load_config(const std::string& path) {
    std::ifstream in(path);
    if (!in) throw DataError(DataError::Code::io, "cannot open config " + path);
    ordered_json j = ordered_json::parse(in, nullptr, false);
    if (j.is_discarded()) {
        throw ConfigError(path + ": invalid JSON");
    }
    return config_from_json(j);
}

ordered_json config_to_json(const ExperimentConfig& cfg) {
    ordered_json j;
    j["data"] = corpus_spec_to_json(cfg.data);
    j["frequency"] = {{"coeff_rows", cfg.effective_coeff_rows()}};
    j["schedule"] = {{"k_train", cfg.k_train}, {"kind", cfg.schedule_kind}};
    j["teacher"] = {{"n_layers", cfg.teacher.n_layers},
                    {"d_model", cfg.teacher.d_model},
                    {"n_heads", cfg.teacher.n_heads},
                    {"ffn_dim", cfg.teacher.ffn_dim},
                    {"se_reduction", cfg.teacher.se_reduction}};
    j["student"] = {{"n_layers", cfg.student.n_layers},
                    {"d_model", cfg.student.d_model},
                    {"se_reduction", cfg.student.se_reduction},
                    {"seq_expand", cfg.student.seq_expand},
                    {"chan_expand", cfg.student.chan_expand}};
    j["teacher_train"] = {{"epochs", cfg.teacher_train.epochs},
                          {"samples_per_epoch", cfg.teacher_train.samples_per_epoch},
                          {"batch", cfg.teacher_train.batch},
                          {"base_lr", cfg.teacher_train.base_lr},
                          {"seed", cfg.teacher_train.seed}};
    j["stage1"] = {{"epochs", cfg.stage1.epochs},
                   {"samples_per_epoch", cfg.stage1.samples_per_epoch},
                   {"batch", cfg.stage1.batch},
                   {"base_lr", cfg.stage1.base_lr},
                   {"teacher_plan_steps", cfg.stage1.teacher_plan_steps},
                   {"weight_decay", cfg.stage1.weight_decay},
                   {"seed", cfg.stage1.seed}};
    j["stage2"] = {{"epochs", cfg.stage2.epochs},
                   {"samples_per_epoch", cfg.stage2.samples_per_epoch},
                   {"batch", cfg.stage2.batch},
                   {"base_lr", cfg.stage2.base_lr},
                   {"weight_decay", cfg.stage2.weight_decay},
                   {"seed", cfg.stage2.seed}};
    j["bayesopt"] = {{"case", cfg.bayesopt.case_id},
                     {"iterations", cfg.bayesopt.iterations},
                     {"parallel", cfg.bayesopt.parallel},
                     {"seed", cfg.bayesopt.seed},
                     {"epochs_per_trial", cfg.bayesopt.epochs_per_trial},
                     {"val_pairs", cfg.bayesopt.val_pairs},
                     {"reference", cfg.bayesopt.reference},
                     {"space", space_to_json(cfg.bayesopt.space)}};
    j["eval"] = {{"samples", cfg.eval.samples},
                 {"tau", cfg.eval.tau},
                 {"teacher_plan_steps", cfg.eval.teacher_plan_steps},
                 {"seed", cfg.eval.seed}};
    j["bench"] = {{"repeats", cfg.bench.repeats}};
    return j;
}

uint64_t config_hash(const ExperimentConfig& cfg) {
    std::string canon = config_to_json(cfg).dump();
    return fnv1a(canon.data(), canon.size());
}

}  // namespace swiftdiff
