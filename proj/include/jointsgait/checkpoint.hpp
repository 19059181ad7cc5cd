#pragma once

#include <cstdint>
#include <cstring>
#include <fstream>
#include <map>
#include <string>
#include <vector>

#include "jointsgait/tensor.hpp"

namespace jointsgait {

struct CheckpointError : std::runtime_error {
    explicit CheckpointError(const std::string& msg) : std::runtime_error("checkpoint: " + msg) {}
};

// Versioned little-endian binary container of named float64 tensors.
// Layout: "JGCK" | u32 version | u32 count | records of
// (u32 name_len, name, u32 ndim, u32 dims..., f64 row-major values).

namespace detail {

inline void write_u32(std::ostream& os, uint32_t v) {
    unsigned char b[4] = {static_cast<unsigned char>(v), static_cast<unsigned char>(v >> 8),
                          static_cast<unsigned char>(v >> 16), static_cast<unsigned char>(v >> 24)};
    os.write(reinterpret_cast<const char*>(b), 4);
}

inline uint32_t read_u32(std::istream& is) {
    unsigned char b[4];
    is.read(reinterpret_cast<char*>(b), 4);
    if (!is) throw CheckpointError("truncated file");
    return static_cast<uint32_t>(b[0]) | static_cast<uint32_t>(b[1]) << 8 |
           static_cast<uint32_t>(b[2]) << 16 | static_cast<uint32_t>(b[3]) << 24;
}

inline void write_f64(std::ostream& os, double v) {
    uint64_t u;
    std::memcpy(&u, &v, 8);
    unsigned char b[8];
    for (int i = 0; i < 8; ++i) b[i] = static_cast<unsigned char>(u >> (8 * i));
    os.write(reinterpret_cast<const char*>(b), 8);
}

inline double read_f64(std::istream& is) {
    unsigned char b[8];
    is.read(reinterpret_cast<char*>(b), 8);
    if (!is) throw CheckpointError("truncated file");
    uint64_t u = 0;
    for (int i = 0; i < 8; ++i) u |= static_cast<uint64_t>(b[i]) << (8 * i);
    double v;
    std::memcpy(&v, &u, 8);
    return v;
}

}  // namespace detail

inline void save_checkpoint(const std::string& path,
                            const std::vector<std::pair<std::string, const Tensor*>>& records) {
    std::ofstream os(path, std::ios::binary);
    if (!os) throw CheckpointError("cannot open '" + path + "' for writing");
    os.write("JGCK", 4);
    detail::write_u32(os, 1);
    detail::write_u32(os, static_cast<uint32_t>(records.size()));
    for (const auto& [name, t] : records) {
        detail::write_u32(os, static_cast<uint32_t>(name.size()));
        os.write(name.data(), static_cast<std::streamsize>(name.size()));
        detail::write_u32(os, static_cast<uint32_t>(t->shape.size()));
        for (int d : t->shape) detail::write_u32(os, static_cast<uint32_t>(d));
        for (double v : t->data) detail::write_f64(os, v);
    }
    if (!os) throw CheckpointError("write failed for '" + path + "'");
}

inline std::map<std::string, Tensor> load_checkpoint(const std::string& path) {
    std::ifstream is(path, std::ios::binary);
    if (!is) throw CheckpointError("cannot open '" + path + "'");
    char magic[4];
    is.read(magic, 4);
    if (!is || std::string(magic, 4) != "JGCK") throw CheckpointError("bad magic in '" + path + "'");
    const uint32_t version = detail::read_u32(is);
    if (version != 1) throw CheckpointError("unsupported version " + std::to_string(version));
    const uint32_t count = detail::read_u32(is);
    std::map<std::string, Tensor> out;
    for (uint32_t r = 0; r < count; ++r) {
        const uint32_t nlen = detail::read_u32(is);
        std::string name(nlen, '\0');
        is.read(name.data(), nlen);
        const uint32_t ndim = detail::read_u32(is);
        Shape shape(ndim);
        for (uint32_t i = 0; i < ndim; ++i) shape[i] = static_cast<int>(detail::read_u32(is));
        Tensor t(shape);
        for (double& v : t.data) v = detail::read_f64(is);
        out.emplace(std::move(name), std::move(t));
    }
    return out;
}

}  // namespace jointsgait
