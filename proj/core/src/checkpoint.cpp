#include "a2net/checkpoint.hpp"

#include <bit>
#include <cstdint>
#include <cstring>
#include <fstream>

#include "a2net/errors.hpp"

namespace a2net {

namespace {

constexpr char kMagic[8] = {'A', '2', 'N', 'E', 'T', 'C', 'K', 'P'};
constexpr std::uint32_t kVersion = 1;

void put_u32(std::ostream& out, std::uint32_t v) {
    std::uint8_t b[4];
    for (int i = 0; i < 4; ++i) b[i] = static_cast<std::uint8_t>(v >> (8 * i));
    out.write(reinterpret_cast<const char*>(b), 4);
}

void put_u64(std::ostream& out, std::uint64_t v) {
    std::uint8_t b[8];
    for (int i = 0; i < 8; ++i) b[i] = static_cast<std::uint8_t>(v >> (8 * i));
    out.write(reinterpret_cast<const char*>(b), 8);
}

void put_f64(std::ostream& out, double v) {
    put_u64(out, std::bit_cast<std::uint64_t>(v));
}

std::uint32_t get_u32(std::istream& in, const std::string& what) {
    std::uint8_t b[4];
    if (!in.read(reinterpret_cast<char*>(b), 4)) {
        throw DataError("checkpoint truncated while reading " + what);
    }
    std::uint32_t v = 0;
    for (int i = 0; i < 4; ++i) v |= static_cast<std::uint32_t>(b[i]) << (8 * i);
    return v;
}

std::uint64_t get_u64(std::istream& in, const std::string& what) {
    std::uint8_t b[8];
    if (!in.read(reinterpret_cast<char*>(b), 8)) {
        throw DataError("checkpoint truncated while reading " + what);
    }
    std::uint64_t v = 0;
    for (int i = 0; i < 8; ++i) v |= static_cast<std::uint64_t>(b[i]) << (8 * i);
    return v;
}

std::string get_bytes(std::istream& in, std::uint64_t len, const std::string& what) {
    if (len > (1ull << 32)) {
        throw DataError("checkpoint field '" + what + "' reports implausible size");
    }
    std::string s(static_cast<std::size_t>(len), '\0');
    if (len > 0 && !in.read(s.data(), static_cast<std::streamsize>(len))) {
        throw DataError("checkpoint truncated while reading " + what);
    }
    return s;
}

}  // namespace

const Tensor* Checkpoint::find(const std::string& name) const {
    for (const auto& [n, t] : tensors) {
        if (n == name) return &t;
    }
    return nullptr;
}

void save_checkpoint(const std::filesystem::path& path, const Checkpoint& ckpt) {
    std::ofstream out(path, std::ios::binary | std::ios::trunc);
    if (!out) {
        throw DataError("cannot open checkpoint for writing: " + path.string());
    }
    out.write(kMagic, sizeof(kMagic));
    put_u32(out, kVersion);
    put_u64(out, ckpt.meta_json.size());
    out.write(ckpt.meta_json.data(), static_cast<std::streamsize>(ckpt.meta_json.size()));
    put_u64(out, ckpt.tensors.size());
    for (const auto& [name, tensor] : ckpt.tensors) {
        put_u64(out, name.size());
        out.write(name.data(), static_cast<std::streamsize>(name.size()));
        put_u32(out, static_cast<std::uint32_t>(tensor.rank()));
        for (long d : tensor.shape()) {
            put_u64(out, static_cast<std::uint64_t>(d));
        }
        for (double v : tensor.values()) {
            put_f64(out, v);
        }
    }
    out.flush();
    if (!out) {
        throw DataError("write failure on checkpoint: " + path.string());
    }
}

Checkpoint load_checkpoint(const std::filesystem::path& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) {
        throw DataError("cannot open checkpoint: " + path.string());
    }
    char magic[sizeof(kMagic)];
    if (!in.read(magic, sizeof(magic)) || std::memcmp(magic, kMagic, sizeof(kMagic)) != 0) {
        throw DataError("not a checkpoint file: " + path.string());
    }
    const std::uint32_t version = get_u32(in, "version");
    if (version != kVersion) {
        throw DataError("checkpoint version " + std::to_string(version) +
                        " unsupported (expected " + std::to_string(kVersion) + ")");
    }

    Checkpoint ckpt;
    ckpt.meta_json = get_bytes(in, get_u64(in, "metadata length"), "metadata");
    const std::uint64_t count = get_u64(in, "tensor count");
    if (count > (1ull << 24)) {
        throw DataError("checkpoint reports implausible tensor count");
    }
    ckpt.tensors.reserve(static_cast<std::size_t>(count));
    for (std::uint64_t i = 0; i < count; ++i) {
        std::string name = get_bytes(in, get_u64(in, "tensor name length"), "tensor name");
        const std::uint32_t ndim = get_u32(in, "tensor rank of '" + name + "'");
        if (ndim == 0 || ndim > 8) {
            throw DataError("tensor '" + name + "' has unsupported rank " +
                            std::to_string(ndim));
        }
        std::vector<long> shape(ndim);
        for (auto& d : shape) {
            d = static_cast<long>(get_u64(in, "dimension of '" + name + "'"));
        }
        const long numel = shape_numel(shape);
        std::vector<double> values(static_cast<std::size_t>(numel));
        for (auto& v : values) {
            v = std::bit_cast<double>(get_u64(in, "data of '" + name + "'"));
        }
        ckpt.tensors.emplace_back(std::move(name), Tensor(std::move(shape), std::move(values)));
    }
    return ckpt;
}

}  // namespace a2net
