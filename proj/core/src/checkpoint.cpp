#include "octc/checkpoint.hpp"

#include <cstring>
#include <fstream>
#include <stdexcept>

namespace octc {

namespace {

constexpr char kMagic[8] = {'O', 'C', 'T', 'C', 'C', 'K', 'P', 'T'};

void put_u32(std::ostream& os, uint32_t v) {
    unsigned char b[4] = {static_cast<unsigned char>(v), static_cast<unsigned char>(v >> 8),
                          static_cast<unsigned char>(v >> 16),
                          static_cast<unsigned char>(v >> 24)};
    os.write(reinterpret_cast<const char*>(b), 4);
}

void put_u64(std::ostream& os, uint64_t v) {
    put_u32(os, static_cast<uint32_t>(v));
    put_u32(os, static_cast<uint32_t>(v >> 32));
}

uint32_t get_u32(std::istream& is) {
    unsigned char b[4];
    is.read(reinterpret_cast<char*>(b), 4);
    if (!is) throw std::runtime_error("truncated checkpoint");
    return static_cast<uint32_t>(b[0]) | (static_cast<uint32_t>(b[1]) << 8) |
           (static_cast<uint32_t>(b[2]) << 16) | (static_cast<uint32_t>(b[3]) << 24);
}

uint64_t get_u64(std::istream& is) {
    uint64_t lo = get_u32(is);
    uint64_t hi = get_u32(is);
    return lo | (hi << 32);
}

void put_f32(std::ostream& os, float v) {
    uint32_t bits;
    std::memcpy(&bits, &v, 4);
    put_u32(os, bits);
}

float get_f32(std::istream& is) {
    uint32_t bits = get_u32(is);
    float v;
    std::memcpy(&v, &bits, 4);
    return v;
}

CheckpointMeta read_header(std::istream& is, const std::string& path) {
    char magic[8];
    is.read(magic, 8);
    if (!is || std::memcmp(magic, kMagic, 8) != 0)
        throw std::runtime_error("not a checkpoint file (bad magic): " + path);
    CheckpointMeta meta;
    meta.version = get_u32(is);
    if (meta.version != 1)
        throw std::runtime_error("unsupported checkpoint version " +
                                 std::to_string(meta.version));
    meta.model_hash = get_u64(is);
    meta.run_hash = get_u64(is);
    meta.steps = get_u64(is);
    return meta;
}

}  // namespace

void save_checkpoint(const std::string& path, const FlowModel& model, uint64_t run_hash,
                     uint64_t steps) {
    std::ofstream os(path, std::ios::binary);
    if (!os) throw std::runtime_error("cannot open checkpoint for writing: " + path);
    os.write(kMagic, 8);
    put_u32(os, 1);
    put_u64(os, model.config().hash());
    put_u64(os, run_hash);
    put_u64(os, steps);

    const auto& names = model.parameter_names();
    const auto& params = model.parameters();
    put_u32(os, static_cast<uint32_t>(params.size()));
    for (size_t i = 0; i < params.size(); ++i) {
        put_u32(os, static_cast<uint32_t>(names[i].size()));
        os.write(names[i].data(), static_cast<std::streamsize>(names[i].size()));
        const Shape& s = params[i].shape();
        put_u32(os, static_cast<uint32_t>(s.size()));
        for (int d : s) put_u32(os, static_cast<uint32_t>(d));
        for (float v : params[i].data()) put_f32(os, v);
    }
    if (!os) throw std::runtime_error("checkpoint write failed: " + path);
}

CheckpointMeta load_checkpoint(const std::string& path, FlowModel& model) {
    std::ifstream is(path, std::ios::binary);
    if (!is) throw std::runtime_error("cannot open checkpoint: " + path);
    CheckpointMeta meta = read_header(is, path);
    if (meta.model_hash != model.config().hash())
        throw std::runtime_error("checkpoint model-config hash mismatch (checkpoint " +
                                 std::to_string(meta.model_hash) + ", current " +
                                 std::to_string(model.config().hash()) + ")");

    uint32_t count = get_u32(is);
    const auto& names = model.parameter_names();
    if (count != names.size())
        throw std::runtime_error("checkpoint parameter count mismatch");

    std::vector<Tensor> loaded;
    loaded.reserve(count);
    for (uint32_t i = 0; i < count; ++i) {
        uint32_t name_len = get_u32(is);
        std::string name(name_len, '\0');
        is.read(name.data(), name_len);
        if (!is || name != names[i])
            throw std::runtime_error("checkpoint parameter order mismatch at " + name);
        uint32_t ndims = get_u32(is);
        Shape shape(ndims);
        for (uint32_t d = 0; d < ndims; ++d) shape[d] = static_cast<int>(get_u32(is));
        int64_t n = shape_numel(shape);
        std::vector<float> data(static_cast<size_t>(n));
        for (auto& v : data) v = get_f32(is);
        loaded.push_back(Tensor::from_data(std::move(shape), std::move(data), true));
    }
    model.set_parameters(loaded);
    return meta;
}

CheckpointMeta read_checkpoint_meta(const std::string& path) {
    std::ifstream is(path, std::ios::binary);
    if (!is) throw std::runtime_error("cannot open checkpoint: " + path);
    return read_header(is, path);
}

}  // namespace octc
