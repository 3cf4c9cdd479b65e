#include "swiftdiff/checkpoint.hpp"

#include <cstring>
#include <fstream>

#include "swiftdiff/dataset_io.hpp"
#include "swiftdiff/errors.hpp"

namespace swiftdiff {

namespace {

using ordered_json = nlohmann::ordered_json;

std::string read_file(const std::string& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw DataError(DataError::Code::io, "cannot open " + path);
    return std::string((std::istreambuf_iterator<char>(in)),
                       std::istreambuf_iterator<char>());
}

void fill_segments_from_store(CheckpointData& ckpt, const ParamStore& ps) {
    for (size_t i = 0; i < ps.count(); ++i) {
        ckpt.seg_names.push_back(ps.name(i));
        ckpt.seg_values.push_back(ps[i]);
    }
}

void load_store_from_segments(ParamStore& ps, const CheckpointData& ckpt,
                              const std::string& path) {
    if (ckpt.seg_names.size() != ps.count()) {
        throw DataError(DataError::Code::header_mismatch,
                        path + ": segment count does not match the model layout");
    }
    for (size_t i = 0; i < ps.count(); ++i) {
        if (ckpt.seg_names[i] != ps.name(i) ||
            !ckpt.seg_values[i].same_shape(ps[i])) {
            throw DataError(DataError::Code::header_mismatch,
                            path + ": segment " + ckpt.seg_names[i] +
                                " does not match the model layout");
        }
        ps[i] = ckpt.seg_values[i];
    }
}

ordered_json schedule_json(const NoiseSchedule& sched) {
    return ordered_json{{"k_train", sched.k_train}, {"kind", "cosine"}};
}

NoiseSchedule schedule_from_json(const ordered_json& j) {
    return make_schedule(j.at("k_train").get<int64_t>(), j.value("kind", "cosine"));
}

}  // namespace

void write_checkpoint(const std::string& path, const CheckpointData& ckpt) {
    ordered_json header = ckpt.header;
    ordered_json segs = ordered_json::array();
    for (size_t i = 0; i < ckpt.seg_names.size(); ++i) {
        segs.push_back(ordered_json{{"name", ckpt.seg_names[i]},
                                    {"shape", ckpt.seg_values[i].shape()}});
    }
    header["segments"] = segs;
    std::string htxt = header.dump();

    std::string out;
    out.append(kCheckpointMagic, sizeof(kCheckpointMagic));
    uint32_t version = kCheckpointVersion;
    out.append(reinterpret_cast<const char*>(&version), sizeof(version));
    uint64_t hlen = htxt.size();
    out.append(reinterpret_cast<const char*>(&hlen), sizeof(hlen));
    out.append(htxt);
    for (const Tensor& t : ckpt.seg_values) {
        out.append(reinterpret_cast<const char*>(t.data()),
                   sizeof(double) * static_cast<size_t>(t.numel()));
    }
    atomic_write_file(path, out);
}

CheckpointData read_checkpoint(const std::string& path) {
    std::string bytes = read_file(path);
    if (bytes.size() < sizeof(kCheckpointMagic) + sizeof(uint32_t) + sizeof(uint64_t)) {
        throw DataError(DataError::Code::truncated, path + ": truncated checkpoint");
    }
    if (std::memcmp(bytes.data(), kCheckpointMagic, sizeof(kCheckpointMagic)) != 0) {
        throw DataError(DataError::Code::magic_mismatch, path + ": bad checkpoint magic");
    }
    size_t off = sizeof(kCheckpointMagic);
    uint32_t version;
    std::memcpy(&version, bytes.data() + off, sizeof(version));
    off += sizeof(version);
    if (version != kCheckpointVersion) {
        throw DataError(DataError::Code::version_mismatch,
                        path + ": checkpoint version " + std::to_string(version));
    }
    uint64_t hlen;
    std::memcpy(&hlen, bytes.data() + off, sizeof(hlen));
    off += sizeof(hlen);
    if (off + hlen > bytes.size()) {
        throw DataError(DataError::Code::truncated, path + ": truncated header");
    }
    CheckpointData ckpt;
    ckpt.header = ordered_json::parse(bytes.substr(off, hlen), nullptr, false);
    if (ckpt.header.is_discarded()) {
        throw DataError(DataError::Code::bad_content, path + ": header is not valid JSON");
    }
    off += hlen;

    if (!ckpt.header.contains("segments") || !ckpt.header["segments"].is_array()) {
        throw DataError(DataError::Code::bad_content, path + ": missing segment table");
    }
    for (const auto& seg : ckpt.header["segments"]) {
        std::string name = seg.at("name").get<std::string>();
        std::vector<int64_t> shape = seg.at("shape").get<std::vector<int64_t>>();
        Tensor t(shape);
        size_t nbytes = sizeof(double) * static_cast<size_t>(t.numel());
        if (off + nbytes > bytes.size()) {
            throw DataError(DataError::Code::truncated,
                            path + ": truncated segment " + name);
        }
        std::memcpy(t.data(), bytes.data() + off, nbytes);
        off += nbytes;
        ckpt.seg_names.push_back(std::move(name));
        ckpt.seg_values.push_back(std::move(t));
    }
    return ckpt;
}

nlohmann::ordered_json teacher_config_json(const TeacherConfig& cfg) {
    return ordered_json{{"n_layers", cfg.n_layers},   {"d_model", cfg.d_model},
                        {"n_heads", cfg.n_heads},     {"ffn_dim", cfg.ffn_dim},
                        {"se_reduction", cfg.se_reduction},
                        {"coeff_rows", cfg.coeff_rows}, {"joints", cfg.joints}};
}

nlohmann::ordered_json student_config_json(const StudentConfig& cfg) {
    return ordered_json{{"n_layers", cfg.n_layers},   {"d_model", cfg.d_model},
                        {"se_reduction", cfg.se_reduction},
                        {"coeff_rows", cfg.coeff_rows}, {"joints", cfg.joints},
                        {"seq_expand", cfg.seq_expand}, {"chan_expand", cfg.chan_expand}};
}

TeacherConfig teacher_config_from_json(const nlohmann::ordered_json& j) {
    TeacherConfig cfg;
    cfg.n_layers = j.at("n_layers").get<int64_t>();
    cfg.d_model = j.at("d_model").get<int64_t>();
    cfg.n_heads = j.at("n_heads").get<int64_t>();
    cfg.ffn_dim = j.at("ffn_dim").get<int64_t>();
    cfg.se_reduction = j.at("se_reduction").get<int64_t>();
    cfg.coeff_rows = j.at("coeff_rows").get<int64_t>();
    cfg.joints = j.at("joints").get<int64_t>();
    return cfg;
}

StudentConfig student_config_from_json(const nlohmann::ordered_json& j) {
    StudentConfig cfg;
    cfg.n_layers = j.at("n_layers").get<int64_t>();
    cfg.d_model = j.at("d_model").get<int64_t>();
    cfg.se_reduction = j.at("se_reduction").get<int64_t>();
    cfg.coeff_rows = j.at("coeff_rows").get<int64_t>();
    cfg.joints = j.at("joints").get<int64_t>();
    cfg.seq_expand = j.at("seq_expand").get<int64_t>();
    cfg.chan_expand = j.at("chan_expand").get<int64_t>();
    return cfg;
}

void save_teacher(const std::string& path, const TeacherModel& model,
                  const NoiseSchedule& sched, int64_t plan_steps,
                  const nlohmann::ordered_json& provenance) {
    CheckpointData ckpt;
    ckpt.header["format_version"] = kCheckpointVersion;
    ckpt.header["kind"] = "teacher";
    ckpt.header["config"] = teacher_config_json(model.config());
    ckpt.header["schedule"] = schedule_json(sched);
    ckpt.header["plan_steps"] = plan_steps;
    ckpt.header["provenance"] = provenance;
    fill_segments_from_store(ckpt, model.params());
    write_checkpoint(path, ckpt);
}

void save_one_step(const std::string& path, const OneStepModel& model,
                   const NoiseSchedule& sched, const nlohmann::ordered_json& provenance) {
    CheckpointData ckpt;
    ckpt.header["format_version"] = kCheckpointVersion;
    ckpt.header["kind"] = "one_step";
    ckpt.header["config"] = teacher_config_json(model.net.config());
    ckpt.header["schedule"] = schedule_json(sched);
    ckpt.header["k_star"] = model.k_star;
    ckpt.header["provenance"] = provenance;
    fill_segments_from_store(ckpt, model.net.params());
    write_checkpoint(path, ckpt);
}

void save_student(const std::string& path, const StudentModel& model,
                  const NoiseSchedule& sched, const nlohmann::ordered_json& provenance) {
    CheckpointData ckpt;
    ckpt.header["format_version"] = kCheckpointVersion;
    ckpt.header["kind"] = "student";
    ckpt.header["config"] = student_config_json(model.config());
    ckpt.header["schedule"] = schedule_json(sched);
    ckpt.header["provenance"] = provenance;
    fill_segments_from_store(ckpt, model.params());
    write_checkpoint(path, ckpt);
}

LoadedModel load_model(const std::string& path) {
    CheckpointData ckpt = read_checkpoint(path);
    LoadedModel lm;
    lm.header = ckpt.header;
    lm.kind = ckpt.header.at("kind").get<std::string>();
    lm.sched = schedule_from_json(ckpt.header.at("schedule"));
    lm.plan_steps = ckpt.header.value("plan_steps", int64_t{0});

    Rng dummy(0);
    if (lm.kind == "teacher") {
        TeacherConfig cfg = teacher_config_from_json(ckpt.header.at("config"));
        lm.teacher = std::make_unique<TeacherModel>(cfg, dummy);
        load_store_from_segments(lm.teacher->params(), ckpt, path);
    } else if (lm.kind == "one_step") {
        TeacherConfig cfg = teacher_config_from_json(ckpt.header.at("config"));
        TeacherModel net(cfg, dummy);
        lm.one_step = std::make_unique<OneStepModel>(
            OneStepModel{std::move(net), ckpt.header.at("k_star").get<int64_t>()});
        load_store_from_segments(lm.one_step->net.params(), ckpt, path);
    } else if (lm.kind == "student") {
        StudentConfig cfg = student_config_from_json(ckpt.header.at("config"));
        lm.student = std::make_unique<StudentModel>(cfg, dummy);
        load_store_from_segments(lm.student->params(), ckpt, path);
    } else {
        throw DataError(DataError::Code::bad_content,
                        path + ": unknown checkpoint kind '" + lm.kind + "'");
    }
    return lm;
}

}  // namespace swiftdiff
