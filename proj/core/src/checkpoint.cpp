#include "madf/checkpoint.hpp"

#include <fstream>

namespace madf {

namespace {
constexpr char kMagic[4] = {'M', 'A', 'D', 'F'};

template <typename T>
void write_pod(std::ostream& out, T v) {
    out.write(reinterpret_cast<const char*>(&v), sizeof v);
}

template <typename T>
T read_pod(std::istream& in, const std::string& path) {
    T v;
    in.read(reinterpret_cast<char*>(&v), sizeof v);
    if (!in) throw CheckpointError(path + ": truncated payload");
    return v;
}
}  // namespace

std::size_t dtype_size(DType t) {
    switch (t) {
        case DType::kF32: return 4;
        case DType::kF64: return 8;
        case DType::kI64: return 8;
        case DType::kU64: return 8;
    }
    throw CheckpointError("unknown dtype tag");
}

void write_records(const std::string& path, const std::vector<TensorRecord>& records) {
    std::ofstream out(path, std::ios::binary | std::ios::trunc);
    if (!out) throw CheckpointError(path + ": cannot open for writing");
    out.write(kMagic, 4);
    write_pod<std::uint32_t>(out, kCheckpointVersion);
    write_pod<std::uint32_t>(out, static_cast<std::uint32_t>(records.size()));
    for (const auto& rec : records) {
        write_pod<std::uint32_t>(out, static_cast<std::uint32_t>(rec.name.size()));
        out.write(rec.name.data(), static_cast<std::streamsize>(rec.name.size()));
        write_pod<std::uint8_t>(out, static_cast<std::uint8_t>(rec.dtype));
        write_pod<std::uint8_t>(out, static_cast<std::uint8_t>(rec.dims.size()));
        for (const auto d : rec.dims) write_pod<std::uint64_t>(out, d);
        if (rec.payload.size() != rec.element_count() * dtype_size(rec.dtype))
            throw CheckpointError(rec.name + ": payload does not match dims");
        out.write(reinterpret_cast<const char*>(rec.payload.data()),
                  static_cast<std::streamsize>(rec.payload.size()));
    }
    if (!out) throw CheckpointError(path + ": write failed");
}

std::vector<TensorRecord> read_records(const std::string& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw CheckpointError(path + ": cannot open for reading");
    char magic[4];
    in.read(magic, 4);
    if (!in || std::memcmp(magic, kMagic, 4) != 0)
        throw CheckpointError(path + ": bad magic, not a checkpoint file");
    const auto version = read_pod<std::uint32_t>(in, path);
    if (version != kCheckpointVersion)
        throw CheckpointError(path + ": unsupported version " + std::to_string(version));
    const auto count = read_pod<std::uint32_t>(in, path);
    std::vector<TensorRecord> records;
    records.reserve(count);
    for (std::uint32_t i = 0; i < count; ++i) {
        TensorRecord rec;
        const auto name_len = read_pod<std::uint32_t>(in, path);
        if (name_len > 4096) throw CheckpointError(path + ": implausible record name length");
        rec.name.resize(name_len);
        in.read(rec.name.data(), name_len);
        if (!in) throw CheckpointError(path + ": truncated payload");
        const auto tag = read_pod<std::uint8_t>(in, path);
        if (tag > 3) throw CheckpointError(path + ": unknown dtype tag");
        rec.dtype = static_cast<DType>(tag);
        const auto rank = read_pod<std::uint8_t>(in, path);
        rec.dims.resize(rank);
        for (auto& d : rec.dims) d = read_pod<std::uint64_t>(in, path);
        const std::uint64_t bytes = rec.element_count() * dtype_size(rec.dtype);
        if (bytes > (1ull << 34)) throw CheckpointError(path + ": implausible tensor size");
        rec.payload.resize(bytes);
        in.read(reinterpret_cast<char*>(rec.payload.data()),
                static_cast<std::streamsize>(bytes));
        if (static_cast<std::uint64_t>(in.gcount()) != bytes)
            throw CheckpointError(path + ": truncated payload");
        records.push_back(std::move(rec));
    }
    return records;
}

}  // namespace madf
