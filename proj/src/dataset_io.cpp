#include "swiftdiff/dataset_io.hpp"

#include <bit>
#include <cstring>
#include <filesystem>
#include <fstream>

#include "swiftdiff/errors.hpp"

static_assert(std::endian::native == std::endian::little,
              "dataset container assumes a little-endian host");

namespace swiftdiff {

namespace {

template <typename T>
void put(std::string& out, T v) {
    char buf[sizeof(T)];
    std::memcpy(buf, &v, sizeof(T));
    out.append(buf, sizeof(T));
}

template <typename T>
T take(const std::string& in, size_t& off, const std::string& path) {
    if (off + sizeof(T) > in.size()) {
        throw DataError(DataError::Code::truncated, path + ": truncated file");
    }
    T v;
    std::memcpy(&v, in.data() + off, sizeof(T));
    off += sizeof(T);
    return v;
}

std::string read_file(const std::string& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw DataError(DataError::Code::io, "cannot open " + path);
    std::string bytes((std::istreambuf_iterator<char>(in)),
                      std::istreambuf_iterator<char>());
    return bytes;
}

}  // namespace

void atomic_write_file(const std::string& path, const std::string& bytes) {
    std::string tmp = path + ".tmp";
    {
        std::ofstream out(tmp, std::ios::binary | std::ios::trunc);
        if (!out) throw DataError(DataError::Code::io, "cannot open " + tmp + " for write");
        out.write(bytes.data(), static_cast<std::streamsize>(bytes.size()));
        if (!out) throw DataError(DataError::Code::io, "write failed for " + tmp);
    }
    std::error_code ec;
    std::filesystem::rename(tmp, path, ec);
    if (ec) {
        throw DataError(DataError::Code::io,
                        "rename " + tmp + " -> " + path + ": " + ec.message());
    }
}

void write_dataset(const std::string& path, const std::vector<MotionSequence>& items,
                   const std::vector<int64_t>& modes, const nlohmann::ordered_json& meta) {
    if (items.empty()) throw ConfigError("write_dataset: no items");
    if (!modes.empty() && modes.size() != items.size()) {
        throw ConfigError("write_dataset: modes/items size mismatch");
    }
    int64_t h = items[0].observed;
    int64_t f = items[0].future;
    int64_t ch = items[0].frames.cols();
    if (ch % 3 != 0) throw ShapeError("write_dataset: channels not a multiple of 3");

    std::string out;
    out.append(kDatasetMagic, sizeof(kDatasetMagic));
    put<uint32_t>(out, kDatasetVersion);
    put<uint32_t>(out, static_cast<uint32_t>(ch / 3));
    put<uint32_t>(out, static_cast<uint32_t>(h));
    put<uint32_t>(out, static_cast<uint32_t>(f));
    put<uint64_t>(out, items.size());

    for (const MotionSequence& m : items) {
        if (m.observed != h || m.future != f || m.frames.cols() != ch) {
            throw ShapeError("write_dataset: inconsistent item shapes");
        }
        out.append(reinterpret_cast<const char*>(m.frames.data()),
                   sizeof(double) * static_cast<size_t>(m.frames.numel()));
    }

    nlohmann::ordered_json footer = meta;
    footer["modes"] = modes;
    std::string ftxt = footer.dump();
    put<uint64_t>(out, ftxt.size());
    out.append(ftxt);

    atomic_write_file(path, out);
}

Dataset read_dataset(const std::string& path) {
    std::string bytes = read_file(path);
    size_t off = 0;

    if (bytes.size() < sizeof(kDatasetMagic)) {
        throw DataError(DataError::Code::truncated, path + ": shorter than magic");
    }
    if (std::memcmp(bytes.data(), kDatasetMagic, sizeof(kDatasetMagic)) != 0) {
        throw DataError(DataError::Code::magic_mismatch, path + ": bad magic bytes");
    }
    off = sizeof(kDatasetMagic);

    uint32_t version = take<uint32_t>(bytes, off, path);
    if (version != kDatasetVersion) {
        throw DataError(DataError::Code::version_mismatch,
                        path + ": version " + std::to_string(version) + ", expected " +
                            std::to_string(kDatasetVersion));
    }

    Dataset ds;
    ds.joints = take<uint32_t>(bytes, off, path);
    ds.observed = take<uint32_t>(bytes, off, path);
    ds.future = take<uint32_t>(bytes, off, path);
    uint64_t n_items = take<uint64_t>(bytes, off, path);
    if (ds.joints < 1 || ds.observed < 1 || ds.future < 1 || n_items < 1) {
        throw DataError(DataError::Code::header_mismatch, path + ": degenerate header");
    }

    int64_t ch = 3 * ds.joints;
    int64_t n = ds.observed + ds.future;
    size_t frame_bytes =
        sizeof(double) * static_cast<size_t>(n * ch) * static_cast<size_t>(n_items);
    if (off + frame_bytes > bytes.size()) {
        throw DataError(DataError::Code::truncated,
                        path + ": header promises " + std::to_string(n_items) +
                            " items but the file is too short");
    }

    ds.items.reserve(n_items);
    for (uint64_t i = 0; i < n_items; ++i) {
        Tensor frames({n, ch});
        std::memcpy(frames.data(), bytes.data() + off, sizeof(double) * frames.numel());
        off += sizeof(double) * static_cast<size_t>(frames.numel());
        ds.items.push_back(make_motion(std::move(frames), ds.observed, ds.future));
    }

    uint64_t footer_len = take<uint64_t>(bytes, off, path);
    if (off + footer_len > bytes.size()) {
        throw DataError(DataError::Code::truncated, path + ": truncated footer");
    }
    std::string ftxt = bytes.substr(off, footer_len);
    ds.meta = nlohmann::ordered_json::parse(ftxt, nullptr, false);
    if (ds.meta.is_discarded()) {
        throw DataError(DataError::Code::bad_content, path + ": footer is not valid JSON");
    }
    if (ds.meta.contains("modes") && ds.meta["modes"].is_array()) {
        ds.modes = ds.meta["modes"].get<std::vector<int64_t>>();
        if (!ds.modes.empty() && ds.modes.size() != ds.items.size()) {
            throw DataError(DataError::Code::header_mismatch,
                            path + ": footer mode count disagrees with header item count");
        }
    }
    if (ds.meta.contains("spec")) {
        const auto& sp = ds.meta["spec"];
        if ((sp.contains("joints") && sp["joints"].get<int64_t>() != ds.joints) ||
            (sp.contains("observed") && sp["observed"].get<int64_t>() != ds.observed) ||
            (sp.contains("future") && sp["future"].get<int64_t>() != ds.future)) {
            throw DataError(DataError::Code::header_mismatch,
                            path + ": footer spec disagrees with binary header");
        }
    }
    return ds;
}

}  // namespace swiftdiff
