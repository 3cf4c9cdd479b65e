#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include "json.hpp"
#include "swiftdiff/motion.hpp"

namespace swiftdiff {

// Container layout (little-endian):
//   magic "SWDMOT01" | u32 version | u32 J | u32 H | u32 F | u64 n_items
//   n_items × (H+F) × 3J float64 frames
//   u64 footer_len | footer JSON (spec echo, seed, per-item modes)
// Readers reject magic and version mismatches, truncation, and headers that
// disagree with the footer, each with a distinct error code.
inline constexpr char kDatasetMagic[8] = {'S', 'W', 'D', 'M', 'O', 'T', '0', '1'};
inline constexpr uint32_t kDatasetVersion = 1;

struct Dataset {
    int64_t joints = 0;
    int64_t observed = 0;
    int64_t future = 0;
    std::vector<MotionSequence> items;
    std::vector<int64_t> modes;  // empty when the footer carries none
    nlohmann::ordered_json meta;
};

void write_dataset(const std::string& path, const std::vector<MotionSequence>& items,
                   const std::vector<int64_t>& modes, const nlohmann::ordered_json& meta);

Dataset read_dataset(const std::string& path);

// write-temp-then-rename
void atomic_write_file(const std::string& path, const std::string& bytes);

}  // namespace swiftdiff
