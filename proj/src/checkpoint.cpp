#include "ocrprep/checkpoint.hpp"

#include <cstdio>
#include <cstring>
#include <fstream>
#include <stdexcept>

namespace ocrprep::diffkernel {

namespace {

constexpr char kMagic[8] = {'O', 'C', 'R', 'P', 'C', 'K', 'P', 'T'};
constexpr std::uint32_t kVersion = 1;

void put_u32(std::ostream& os, std::uint32_t v) {
    unsigned char b[4] = {static_cast<unsigned char>(v), static_cast<unsigned char>(v >> 8),
                          static_cast<unsigned char>(v >> 16),
                          static_cast<unsigned char>(v >> 24)};
    os.write(reinterpret_cast<const char*>(b), 4);
}

std::uint32_t get_u32(std::istream& is) {
    unsigned char b[4];
    is.read(reinterpret_cast<char*>(b), 4);
    if (!is) throw std::runtime_error("checkpoint: truncated file");
    return std::uint32_t(b[0]) | (std::uint32_t(b[1]) << 8) | (std::uint32_t(b[2]) << 16) |
           (std::uint32_t(b[3]) << 24);
}

void put_f32(std::ostream& os, const float* data, std::size_t n) {
    static_assert(sizeof(float) == 4);
    // host is little-endian; write raw
    os.write(reinterpret_cast<const char*>(data), static_cast<std::streamsize>(n * 4));
}

}  // namespace

void save_checkpoint(const std::string& path, const Checkpoint& ckpt) {
    std::ofstream os(path, std::ios::binary | std::ios::trunc);
    if (!os) throw std::runtime_error("checkpoint: cannot write " + path);
    os.write(kMagic, 8);
    put_u32(os, kVersion);
    put_u32(os, static_cast<std::uint32_t>(ckpt.config.size()));
    os.write(ckpt.config.data(), static_cast<std::streamsize>(ckpt.config.size()));
    put_u32(os, static_cast<std::uint32_t>(ckpt.entries.size()));
    for (const auto& e : ckpt.entries) {
        put_u32(os, static_cast<std::uint32_t>(e.name.size()));
        os.write(e.name.data(), static_cast<std::streamsize>(e.name.size()));
        put_u32(os, static_cast<std::uint32_t>(e.shape.size()));
        for (int d : e.shape) put_u32(os, static_cast<std::uint32_t>(d));
        put_f32(os, e.data.data(), e.data.size());
    }
    if (!os) throw std::runtime_error("checkpoint: write failed for " + path);
}

Checkpoint load_checkpoint(const std::string& path) {
    std::ifstream is(path, std::ios::binary);
    if (!is) throw std::runtime_error("checkpoint: cannot open " + path);
    char magic[8];
    is.read(magic, 8);
    if (!is || std::memcmp(magic, kMagic, 8) != 0)
        throw std::runtime_error("checkpoint: bad magic in " + path);
    const std::uint32_t version = get_u32(is);
    if (version != kVersion)
        throw std::runtime_error("checkpoint: unsupported version " + std::to_string(version));
    Checkpoint ckpt;
    const std::uint32_t cfg_len = get_u32(is);
    ckpt.config.resize(cfg_len);
    is.read(ckpt.config.data(), cfg_len);
    const std::uint32_t count = get_u32(is);
    ckpt.entries.resize(count);
    for (auto& e : ckpt.entries) {
        const std::uint32_t name_len = get_u32(is);
        e.name.resize(name_len);
        is.read(e.name.data(), name_len);
        const std::uint32_t rank = get_u32(is);
        e.shape.resize(rank);
        std::size_t n = 1;
        for (auto& d : e.shape) {
            d = static_cast<int>(get_u32(is));
            n *= static_cast<std::size_t>(d);
        }
        e.data.resize(n);
        is.read(reinterpret_cast<char*>(e.data.data()), static_cast<std::streamsize>(n * 4));
        if (!is) throw std::runtime_error("checkpoint: truncated record '" + e.name + "'");
    }
    return ckpt;
}

Checkpoint snapshot_params(const std::vector<Var<float>>& params, std::string config) {
    Checkpoint ckpt;
    ckpt.config = std::move(config);
    for (const auto& p : params)
        ckpt.entries.push_back({p->name, p->shape, p->value});
    return ckpt;
}

void restore_params(const std::vector<Var<float>>& params, const Checkpoint& ckpt) {
    for (const auto& p : params) {
        const CheckpointEntry* found = nullptr;
        for (const auto& e : ckpt.entries)
            if (e.name == p->name) {
                found = &e;
                break;
            }
        if (!found) throw std::runtime_error("checkpoint: missing parameter '" + p->name + "'");
        if (found->shape != p->shape)
            throw std::runtime_error("checkpoint: shape mismatch for '" + p->name + "': file " +
                                     shape_str(found->shape) + " vs model " + shape_str(p->shape));
        p->value = found->data;
    }
}

std::string file_hash(const std::string& path) {
    std::ifstream is(path, std::ios::binary);
    if (!is) throw std::runtime_error("file_hash: cannot open " + path);
    std::uint64_t h = 1469598103934665603ull;
    char buf[4096];
    while (is.read(buf, sizeof(buf)) || is.gcount() > 0) {
        for (std::streamsize i = 0; i < is.gcount(); ++i) {
            h ^= static_cast<unsigned char>(buf[i]);
            h *= 1099511628211ull;
        }
        if (!is) break;
    }
    char out[17];
    std::snprintf(out, sizeof(out), "%016llx", static_cast<unsigned long long>(h));
    return out;
}

}  // namespace ocrprep::diffkernel
