#include <filesystem>
#include <fstream>

#include "doctest.h"
#include "swiftdiff/checkpoint.hpp"
#include "swiftdiff/config.hpp"
#include "swiftdiff/dataset_io.hpp"
#include "swiftdiff/errors.hpp"
#include "swiftdiff/pipeline.hpp"
#include "swiftdiff/synthetic.hpp"
#include "test_util.hpp"

using namespace swiftdiff;
using testutil::random_tensor;
namespace fs = std::filesystem;

namespace {

fs::path temp_dir(const std::string& tag) {
    fs::path p = fs::temp_directory_path() / ("swiftdiff_" + tag);
    fs::remove_all(p);
    fs::create_directories(p);
    return p;
}

std::string slurp(const fs::path& p) {
    std::ifstream in(p, std::ios::binary);
    return std::string((std::istreambuf_iterator<char>(in)),
                       std::istreambuf_iterator<char>());
}

SyntheticCorpusSpec tiny_spec(uint64_t seed = 3) {
    SyntheticCorpusSpec spec;
    spec.joints = 2;
    spec.observed = 4;
    spec.future = 8;
    spec.n_train = 12;
    spec.n_test = 6;
    spec.n_families = 4;
    spec.band_limit = 4;
    spec.seed = seed;
    return spec;
}

}  // namespace

TEST_CASE("dataset roundtrip is exact to the bit") {
    fs::path dir = temp_dir("ds_roundtrip");
    SyntheticCorpus corpus = gen_corpus(tiny_spec());
    nlohmann::ordered_json meta;
    meta["spec"] = corpus_spec_to_json(corpus.spec);
    meta["seed"] = corpus.spec.seed;
    std::string path = (dir / "train.bin").string();
    write_dataset(path, corpus.train, corpus.train_modes, meta);

    Dataset ds = read_dataset(path);
    REQUIRE(ds.items.size() == corpus.train.size());
    CHECK(ds.joints == corpus.spec.joints);
    CHECK(ds.observed == corpus.spec.observed);
    CHECK(ds.future == corpus.spec.future);
    for (size_t i = 0; i < ds.items.size(); ++i) {
        CHECK(ds.items[i].frames.bit_equal(corpus.train[i].frames));  // 0 ulp
    }
    CHECK(ds.modes == corpus.train_modes);
}

TEST_CASE("dataset reader rejects corruption with distinct codes") {
    fs::path dir = temp_dir("ds_corrupt");
    SyntheticCorpus corpus = gen_corpus(tiny_spec());
    std::string path = (dir / "d.bin").string();
    write_dataset(path, corpus.train, corpus.train_modes, {});
    std::string good = slurp(path);

    {
        std::string bad = good;
        bad[0] = 'X';
        std::ofstream(path, std::ios::binary) << bad;
        try {
            read_dataset(path);
            FAIL("expected magic mismatch");
        } catch (const DataError& e) {
            CHECK(e.code() == DataError::Code::magic_mismatch);
        }
    }
    {
        std::string bad = good;
        bad[8] = 9;  // version low byte
        std::ofstream(path, std::ios::binary) << bad;
        try {
            read_dataset(path);
            FAIL("expected version mismatch");
        } catch (const DataError& e) {
            CHECK(e.code() == DataError::Code::version_mismatch);
        }
    }
    {
        // drop one item's worth of frame bytes: header promises more than the
        // file holds
        size_t item_bytes = sizeof(double) * 12 * 6;
        std::string bad = good.substr(0, good.size() - item_bytes);
        std::ofstream(path, std::ios::binary) << bad;
        try {
            read_dataset(path);
            FAIL("expected truncation");
        } catch (const DataError& e) {
            CHECK(e.code() == DataError::Code::truncated);
        }
    }
}

TEST_CASE("generation is deterministic: same seed, byte-identical files") {
    fs::path a = temp_dir("gen_a");
    fs::path b = temp_dir("gen_b");
    nlohmann::ordered_json spec_json = corpus_spec_to_json(tiny_spec(11));
    std::string spec_path = (a / "spec.json").string();
    std::ofstream(spec_path) << spec_json.dump(2);

    cli::cmd_gen_data(spec_path, a.string(), {});
    cli::cmd_gen_data(spec_path, b.string(), {});
    CHECK(slurp(a / "train.bin") == slurp(b / "train.bin"));
    CHECK(slurp(a / "test.bin") == slurp(b / "test.bin"));
}

TEST_CASE("mode frequencies stay within the multinomial 3-sigma band") {
    SyntheticCorpusSpec spec = tiny_spec(21);
    spec.n_train = 300;
    spec.n_modes = 3;
    SyntheticCorpus corpus = gen_corpus(spec);
    std::vector<int64_t> counts(3, 0);
    for (int64_t m : corpus.train_modes) counts[static_cast<size_t>(m)]++;
    double expect = 300.0 / 3.0;
    double sigma = std::sqrt(300.0 * (1.0 / 3.0) * (2.0 / 3.0));
    for (int64_t c : counts) {
        CHECK(std::abs(static_cast<double>(c) - expect) <= 3.0 * sigma);
    }
}

TEST_CASE("generated motions are continuous at the observation boundary") {
    SyntheticCorpusSpec spec = tiny_spec(31);
    spec.n_train = 64;
    SyntheticCorpus corpus = gen_corpus(spec);
    CHECK(corpus.step_bound > 0.0);
    for (const MotionSequence& m : corpus.train) {
        int64_t h = m.observed;
        double d2 = 0.0;
        for (int64_t c = 0; c < m.frames.cols(); ++c) {
            double d = m.frames.at(h, c) - m.frames.at(h - 1, c);
            d2 += d * d;
        }
        CHECK(std::sqrt(d2) < corpus.step_bound);
    }
}

TEST_CASE("corpus spec validation") {
    SyntheticCorpusSpec spec = tiny_spec();
    spec.n_modes = 1;  // must be genuinely multi-modal
    CHECK_THROWS_AS(spec.validate(), ConfigError);
}

TEST_CASE("checkpoints reproduce forward outputs bit-exactly") {
    fs::path dir = temp_dir("ckpt");
    Rng rng(5);
    NoiseSchedule sched = make_schedule(25);

    TeacherConfig tc;
    tc.n_layers = 2;
    tc.d_model = 16;
    tc.n_heads = 2;
    tc.ffn_dim = 16;
    tc.coeff_rows = 4;
    tc.joints = 2;
    TeacherModel teacher(tc, rng);
    std::string tpath = (dir / "teacher.ckpt").string();
    save_teacher(tpath, teacher, sched, 10, {{"seed", 5}});
    LoadedModel lt = load_model(tpath);
    REQUIRE(lt.kind == "teacher");
    CHECK(lt.plan_steps == 10);
    CHECK(lt.sched.k_train == 25);
    Tensor y = random_tensor(rng, {4, 6});
    Tensor c = random_tensor(rng, {4, 6});
    CHECK(lt.teacher->forward_eager(y, c, 7).bit_equal(teacher.forward_eager(y, c, 7)));

    OneStepModel one{teacher, 24};
    std::string opath = (dir / "one.ckpt").string();
    save_one_step(opath, one, sched, {{"seed", 5}});
    LoadedModel lo = load_model(opath);
    REQUIRE(lo.kind == "one_step");
    CHECK(lo.one_step->k_star == 24);
    CHECK(lo.one_step->net.params().content_hash() == teacher.params().content_hash());

    StudentConfig sc;
    sc.n_layers = 2;
    sc.d_model = 16;
    sc.coeff_rows = 4;
    sc.joints = 2;
    StudentModel student(sc, rng);
    std::string spath = (dir / "student.ckpt").string();
    save_student(spath, student, sched, {{"seed", 5}});
    LoadedModel ls = load_model(spath);
    REQUIRE(ls.kind == "student");
    CHECK(ls.student->forward_eager(y, c).bit_equal(student.forward_eager(y, c)));

    // corrupted magic is reported distinctly
    std::string bytes = slurp(spath);
    bytes[0] = 'Z';
    std::ofstream(spath, std::ios::binary) << bytes;
    try {
        load_model(spath);
        FAIL("expected magic mismatch");
    } catch (const DataError& e) {
        CHECK(e.code() == DataError::Code::magic_mismatch);
    }
}

TEST_CASE("experiment config rejects unknown keys at every level") {
    nlohmann::ordered_json j;
    j["data"] = corpus_spec_to_json(tiny_spec());
    j["themelt"] = 1;
    CHECK_THROWS_AS(config_from_json(j), ConfigError);

    nlohmann::ordered_json j2;
    j2["data"] = corpus_spec_to_json(tiny_spec());
    j2["data"]["grommet"] = true;
    CHECK_THROWS_AS(config_from_json(j2), ConfigError);

    nlohmann::ordered_json j3;
    j3["data"] = corpus_spec_to_json(tiny_spec());
    j3["teacher"] = {{"n_layers", 2}, {"width", 64}};
    CHECK_THROWS_AS(config_from_json(j3), ConfigError);
}

TEST_CASE("experiment config roundtrips and hashes stably") {
    nlohmann::ordered_json j;
    j["data"] = corpus_spec_to_json(tiny_spec());
    j["frequency"] = {{"coeff_rows", 6}};
    j["schedule"] = {{"k_train", 50}, {"kind", "cosine"}};
    j["teacher"] = {{"n_layers", 2}, {"d_model", 16}, {"n_heads", 2}, {"ffn_dim", 32},
                    {"se_reduction", 4}};
    ExperimentConfig cfg = config_from_json(j);
    CHECK(cfg.teacher.coeff_rows == 6);
    CHECK(cfg.teacher.joints == 2);
    CHECK(cfg.effective_coeff_rows() == 6);

    ExperimentConfig cfg2 = config_from_json(config_to_json(cfg));
    CHECK(config_hash(cfg) == config_hash(cfg2));

    // L defaults to (H+F)/2 when the frequency section is absent
    nlohmann::ordered_json j4;
    j4["data"] = corpus_spec_to_json(tiny_spec());
    ExperimentConfig cfg4 = config_from_json(j4);
    CHECK(cfg4.effective_coeff_rows() == 6);
}

TEST_CASE("cli: gen-data spec echo honors seed overrides") {
    fs::path dir = temp_dir("cli_seed");
    nlohmann::ordered_json spec_json = corpus_spec_to_json(tiny_spec(1));
    std::string spec_path = (dir / "spec.json").string();
    std::ofstream(spec_path) << spec_json.dump(2);

    cli::CommonOpts opts;
    opts.seed = 99;
    cli::cmd_gen_data(spec_path, dir.string(), opts);
    Dataset ds = read_dataset((dir / "train.bin").string());
    CHECK(ds.meta["seed"].get<uint64_t>() == 99);
}

TEST_CASE("cli: a miniature end-to-end pipeline holds together") {
    fs::path dir = temp_dir("cli_mini");

    nlohmann::ordered_json j;
    j["data"] = corpus_spec_to_json(tiny_spec(7));
    j["frequency"] = {{"coeff_rows", 6}};
    j["schedule"] = {{"k_train", 20}, {"kind", "cosine"}};
    j["teacher"] = {{"n_layers", 1}, {"d_model", 16}, {"n_heads", 2}, {"ffn_dim", 16},
                    {"se_reduction", 4}};
    j["student"] = {{"n_layers", 1}, {"d_model", 16}, {"se_reduction", 4},
                    {"seq_expand", 2}, {"chan_expand", 1}};
    j["teacher_train"] = {{"epochs", 2}, {"samples_per_epoch", 32}, {"batch", 16},
                          {"base_lr", 1e-3}, {"seed", 1}};
    j["stage1"] = {{"epochs", 2}, {"samples_per_epoch", 32}, {"batch", 16},
                   {"base_lr", 1e-4}, {"teacher_plan_steps", 3}, {"seed", 2}};
    j["stage2"] = {{"epochs", 2}, {"samples_per_epoch", 32}, {"batch", 16},
                   {"base_lr", 1e-3}, {"seed", 3}};
    j["eval"] = {{"samples", 3}, {"tau", 0.5}, {"teacher_plan_steps", 3}, {"seed", 4}};
    j["bench"] = {{"repeats", 3}};
    std::string cfg_path = (dir / "config.json").string();
    std::ofstream(cfg_path) << j.dump(2);

    cli::CommonOpts opts;
    cli::cmd_gen_data(cfg_path, dir.string(), opts);
    cli::cmd_train_teacher(cfg_path, dir.string(), (dir / "teacher.ckpt").string(), opts);
    cli::cmd_distill(1, (dir / "teacher.ckpt").string(), cfg_path, dir.string(),
                     (dir / "one_step.ckpt").string(), opts);
    cli::cmd_distill(2, (dir / "one_step.ckpt").string(), cfg_path, dir.string(),
                     (dir / "student.ckpt").string(), opts);
    cli::cmd_eval((dir / "student.ckpt").string(), dir.string(), 3,
                  (dir / "report.txt").string(), 0.5, 0, opts);
    cli::cmd_bench((dir / "student.ckpt").string(), 3, (dir / "bench.txt").string(), opts);

    CHECK(fs::exists(dir / "report.txt"));
    CHECK(fs::exists(dir / "report.txt.jsonl"));
    CHECK(fs::exists(dir / "bench.txt.jsonl"));

    // wrong stage/checkpoint pairing is a usage error
    CHECK_THROWS_AS(cli::cmd_distill(2, (dir / "teacher.ckpt").string(), cfg_path,
                                     dir.string(), (dir / "x.ckpt").string(), opts),
                    ConfigError);
}
