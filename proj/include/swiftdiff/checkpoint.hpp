#pragma once

#include <memory>
#include <string>
#include <vector>

#include "json.hpp"
#include "swiftdiff/diffusion.hpp"
#include "swiftdiff/distill.hpp"
#include "swiftdiff/models.hpp"

namespace swiftdiff {

// Layout: magic "SWDCKPT1" | u32 version | u64 header_len | header JSON
// (kind, config echo, schedule, provenance, segment table) | raw float64
// segments. Loading reproduces forward outputs bit-exactly.
inline constexpr char kCheckpointMagic[8] = {'S', 'W', 'D', 'C', 'K', 'P', 'T', '1'};
inline constexpr uint32_t kCheckpointVersion = 1;

struct CheckpointData {
    nlohmann::ordered_json header;  // everything except the raw segments
    std::vector<std::string> seg_names;
    std::vector<Tensor> seg_values;
};

void write_checkpoint(const std::string& path, const CheckpointData& ckpt);
CheckpointData read_checkpoint(const std::string& path);

// Model-level helpers. `kind` is one of "teacher", "one_step", "student".
struct LoadedModel {
    std::string kind;
    NoiseSchedule sched;
    int64_t plan_steps = 0;  // teacher sampling default
    // exactly one of these is populated, matching `kind`
    std::unique_ptr<TeacherModel> teacher;    // kind == teacher
    std::unique_ptr<OneStepModel> one_step;   // kind == one_step
    std::unique_ptr<StudentModel> student;    // kind == student
    nlohmann::ordered_json header;
};

void save_teacher(const std::string& path, const TeacherModel& model,
                  const NoiseSchedule& sched, int64_t plan_steps,
                  const nlohmann::ordered_json& provenance);
void save_one_step(const std::string& path, const OneStepModel& model,
                   const NoiseSchedule& sched, const nlohmann::ordered_json& provenance);
void save_student(const std::string& path, const StudentModel& model,
                  const NoiseSchedule& sched, const nlohmann::ordered_json& provenance);

LoadedModel load_model(const std::string& path);

nlohmann::ordered_json teacher_config_json(const TeacherConfig& cfg);
nlohmann::ordered_json student_config_json(const StudentConfig& cfg);
TeacherConfig teacher_config_from_json(const nlohmann::ordered_json& j);
StudentConfig student_config_from_json(const nlohmann::ordered_json& j);

}  // namespace swiftdiff
