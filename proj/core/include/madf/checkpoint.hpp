#pragma once

#include <cstring>
#include <map>

#include "madf/adam.hpp"
#include "madf/model.hpp"

namespace madf {

// Checkpoint container format: magic "MADF", version u32, tensor count
// u32, then per tensor: name length u32, name bytes, dtype tag u8,
// rank u8, dims u64 each, little-endian payload.
inline constexpr std::uint32_t kCheckpointVersion = 1;

enum class DType : std::uint8_t { kF32 = 0, kF64 = 1, kI64 = 2, kU64 = 3 };

std::size_t dtype_size(DType t);

struct TensorRecord {
    std::string name;
    DType dtype = DType::kF32;
    std::vector<std::uint64_t> dims;
    std::vector<std::uint8_t> payload;

    std::uint64_t element_count() const {
        std::uint64_t n = 1;
        for (const auto d : dims) n *= d;
        return n;
    }
};

void write_records(const std::string& path, const std::vector<TensorRecord>& records);
std::vector<TensorRecord> read_records(const std::string& path);

namespace detail {

template <typename T>
DType dtype_of();
template <>
inline DType dtype_of<float>() {
    return DType::kF32;
}
template <>
inline DType dtype_of<double>() {
    return DType::kF64;
}
template <>
inline DType dtype_of<std::int64_t>() {
    return DType::kI64;
}
template <>
inline DType dtype_of<std::uint64_t>() {
    return DType::kU64;
}

template <typename T>
TensorRecord record_from(const std::string& name, const T* data, std::size_t count,
                         std::vector<std::uint64_t> dims) {
    TensorRecord rec;
    rec.name = name;
    rec.dtype = dtype_of<T>();
    rec.dims = std::move(dims);
    rec.payload.resize(count * sizeof(T));
    std::memcpy(rec.payload.data(), data, rec.payload.size());
    return rec;
}

inline TensorRecord record_from_i64(const std::string& name,
                                    const std::vector<std::int64_t>& vals) {
    TensorRecord rec;
    rec.name = name;
    rec.dtype = DType::kI64;
    rec.dims = {vals.size()};
    rec.payload.resize(vals.size() * sizeof(std::int64_t));
    std::memcpy(rec.payload.data(), vals.data(), rec.payload.size());
    return rec;
}

inline TensorRecord record_from_u64(const std::string& name, std::uint64_t v) {
    TensorRecord rec;
    rec.name = name;
    rec.dtype = DType::kU64;
    rec.dims = {1};
    rec.payload.resize(sizeof v);
    std::memcpy(rec.payload.data(), &v, sizeof v);
    return rec;
}

template <typename T>
void copy_into(const TensorRecord& rec, T* dst, std::size_t count) {
    if (rec.dtype != dtype_of<T>())
        throw CheckpointError(rec.name + ": dtype mismatch");
    if (rec.payload.size() != count * sizeof(T))
        throw CheckpointError(rec.name + ": payload size mismatch");
    std::memcpy(dst, rec.payload.data(), rec.payload.size());
}

inline std::vector<std::int64_t> config_echo(const ModelConfig& cfg) {
    std::vector<std::int64_t> vals = {cfg.levels,
                                      cfg.refinements,
                                      cfg.pn_enabled ? 1 : 0,
                                      cfg.input_channels,
                                      cfg.mask_channels,
                                      cfg.base_width,
                                      cfg.max_width,
                                      cfg.pn_latent};
    for (const int k : cfg.kernel_ladder) vals.push_back(k);
    for (const int c : cfg.image_channels) vals.push_back(c);
    return vals;
}

}  // namespace detail

// Training-side counters persisted alongside tensors.
struct CheckpointMeta {
    std::uint64_t iteration = 0;
    std::uint64_t rng_state = 0;
    std::int64_t adam_t = 0;
};

template <typename T>
void save_checkpoint(const std::string& path, const Model<T>& model, const Adam<T>* adam,
                     const CheckpointMeta& meta) {
    std::vector<TensorRecord> records;
    records.push_back(detail::record_from_i64("meta.config",
                                              detail::config_echo(model.config())));
    records.push_back(detail::record_from_u64("meta.iteration", meta.iteration));
    records.push_back(detail::record_from_u64("meta.rng_state", meta.rng_state));
    records.push_back(detail::record_from_i64("meta.adam_t", {meta.adam_t}));

    const ParamStore<T>& params = model.params();
    for (std::size_t i = 0; i < params.size(); ++i) {
        const auto& e = params.entry(i);
        const Tensor4<T>& v = e.node->value;
        records.push_back(detail::record_from("param." + e.name, v.data.data(), v.numel(),
                                              {static_cast<std::uint64_t>(v.n),
                                               static_cast<std::uint64_t>(v.c),
                                               static_cast<std::uint64_t>(v.h),
                                               static_cast<std::uint64_t>(v.w)}));
    }
    auto& model_mut = const_cast<Model<T>&>(model);
    const auto& bn_names = model.bn_names();
    for (std::size_t i = 0; i < bn_names.size(); ++i) {
        const BnState<T>& bn = model_mut.bn_states()[i];
        records.push_back(detail::record_from(bn_names[i] + ".mean", bn.running_mean.data(),
                                              bn.running_mean.size(),
                                              {bn.running_mean.size()}));
        records.push_back(detail::record_from(bn_names[i] + ".var", bn.running_var.data(),
                                              bn.running_var.size(),
                                              {bn.running_var.size()}));
    }
    if (adam) {
        for (std::size_t i = 0; i < params.size(); ++i) {
            const auto& name = params.entry(i).name;
            records.push_back(detail::record_from("adam.m." + name, adam->moment1(i).data(),
                                                  adam->moment1(i).size(),
                                                  {adam->moment1(i).size()}));
            records.push_back(detail::record_from("adam.v." + name, adam->moment2(i).data(),
                                                  adam->moment2(i).size(),
                                                  {adam->moment2(i).size()}));
        }
    }
    write_records(path, records);
}

template <typename T>
CheckpointMeta load_checkpoint(const std::string& path, Model<T>& model, Adam<T>* adam) {
    const std::vector<TensorRecord> records = read_records(path);
    std::map<std::string, const TensorRecord*> index;
    for (const auto& r : records) index[r.name] = &r;

    auto get = [&](const std::string& name) -> const TensorRecord& {
        auto it = index.find(name);
        if (it == index.end()) throw CheckpointError(path + ": missing record " + name);
        return *it->second;
    };

    const auto echo = detail::config_echo(model.config());
    const TensorRecord& cfg_rec = get("meta.config");
    if (cfg_rec.element_count() != echo.size())
        throw CheckpointError(path + ": model configuration mismatch");
    std::vector<std::int64_t> stored(echo.size());
    detail::copy_into(cfg_rec, stored.data(), stored.size());
    if (stored != echo) throw CheckpointError(path + ": model configuration mismatch");

    CheckpointMeta meta;
    detail::copy_into(get("meta.iteration"), &meta.iteration, 1);
    detail::copy_into(get("meta.rng_state"), &meta.rng_state, 1);
    detail::copy_into(get("meta.adam_t"), &meta.adam_t, 1);

    ParamStore<T>& params = model.params();
    for (std::size_t i = 0; i < params.size(); ++i) {
        auto& e = params.entry(i);
        const TensorRecord& rec = get("param." + e.name);
        Tensor4<T>& v = e.node->value;
        const std::vector<std::uint64_t> want = {static_cast<std::uint64_t>(v.n),
                                                 static_cast<std::uint64_t>(v.c),
                                                 static_cast<std::uint64_t>(v.h),
                                                 static_cast<std::uint64_t>(v.w)};
        if (rec.dims != want) throw CheckpointError(rec.name + ": dims mismatch");
        detail::copy_into(rec, v.data.data(), v.numel());
    }
    const auto& bn_names = model.bn_names();
    for (std::size_t i = 0; i < bn_names.size(); ++i) {
        BnState<T>& bn = model.bn_states()[i];
        detail::copy_into(get(bn_names[i] + ".mean"), bn.running_mean.data(),
                          bn.running_mean.size());
        detail::copy_into(get(bn_names[i] + ".var"), bn.running_var.data(),
                          bn.running_var.size());
    }
    if (adam) {
        adam->set_t(meta.adam_t);
        for (std::size_t i = 0; i < params.size(); ++i) {
            const auto& name = params.entry(i).name;
            detail::copy_into(get("adam.m." + name), adam->moment1(i).data(),
                              adam->moment1(i).size());
            detail::copy_into(get("adam.v." + name), adam->moment2(i).data(),
                              adam->moment2(i).size());
        }
    }
    return meta;
}

}  // namespace madf
