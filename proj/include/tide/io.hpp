#pragma once

#include <cstdint>
#include <cstring>
#include <filesystem>
#include <fstream>
#include <stdexcept>
#include <string>
#include <vector>

#include "tide/tensor.hpp"

namespace tide::io {

enum class Dtype : uint8_t {
    f32 = 0,  // little-endian 32-bit float
    u8 = 1,
    f64 = 2,  // checkpoint extension; datasets use f32/u8 only
};

// CRC-32C (Castagnoli), table-driven.
inline uint32_t crc32c(const uint8_t* data, size_t len, uint32_t crc = 0) {
    static const auto table = [] {
        std::array<uint32_t, 256> t{};
        for (uint32_t i = 0; i < 256; ++i) {
            uint32_t c = i;
            for (int k = 0; k < 8; ++k) c = (c & 1) ? (c >> 1) ^ 0x82f63b78u : (c >> 1);
            t[i] = c;
        }
        return t;
    }();
    crc = ~crc;
    for (size_t i = 0; i < len; ++i) crc = table[(crc ^ data[i]) & 0xff] ^ (crc >> 8);
    return ~crc;
}

inline uint32_t crc32c(const std::vector<uint8_t>& bytes) { return crc32c(bytes.data(), bytes.size()); }

// Binary tensor file: magic "TIDE", version u8=1, dtype u8, rank u8,
// rank x u32 LE dims, row-major payload.
inline std::vector<uint8_t> serialize_tensor(const Tensor& t, Dtype dtype) {
    std::vector<uint8_t> out;
    out.reserve(8 + 4 * t.rank() + t.numel() * 8);
    const char magic[4] = {'T', 'I', 'D', 'E'};
    out.insert(out.end(), magic, magic + 4);
    out.push_back(1);  // version
    out.push_back(static_cast<uint8_t>(dtype));
    out.push_back(static_cast<uint8_t>(t.rank()));
    for (int64_t d : t.shape) {
        uint32_t v = static_cast<uint32_t>(d);
        for (int k = 0; k < 4; ++k) out.push_back(static_cast<uint8_t>((v >> (8 * k)) & 0xff));
    }
    for (double x : t.data) {
        switch (dtype) {
            case Dtype::f32: {
                float f = static_cast<float>(x);
                uint32_t bits;
                std::memcpy(&bits, &f, 4);
                for (int k = 0; k < 4; ++k) out.push_back(static_cast<uint8_t>((bits >> (8 * k)) & 0xff));
                break;
            }
            case Dtype::u8:
                out.push_back(static_cast<uint8_t>(x));
                break;
            case Dtype::f64: {
                uint64_t bits;
                std::memcpy(&bits, &x, 8);
                for (int k = 0; k < 8; ++k) out.push_back(static_cast<uint8_t>((bits >> (8 * k)) & 0xff));
                break;
            }
        }
    }
    return out;
}

inline Tensor deserialize_tensor(const std::vector<uint8_t>& bytes, const std::string& what = "tensor") {
    auto fail = [&](const std::string& why) -> Tensor { throw std::runtime_error(what + ": " + why); };
    if (bytes.size() < 7 || std::memcmp(bytes.data(), "TIDE", 4) != 0) return fail("bad magic");
    if (bytes[4] != 1) return fail("unsupported version");
    uint8_t dtype = bytes[5];
    uint8_t rank = bytes[6];
    size_t off = 7;
    if (bytes.size() < off + 4ull * rank) return fail("truncated header");
    std::vector<int64_t> shape(rank);
    for (int i = 0; i < rank; ++i) {
        uint32_t v = 0;
        for (int k = 0; k < 4; ++k) v |= static_cast<uint32_t>(bytes[off + k]) << (8 * k);
        shape[i] = v;
        off += 4;
    }
    Tensor t(shape);
    size_t esize = dtype == 0 ? 4 : dtype == 1 ? 1 : dtype == 2 ? 8 : 0;
    if (esize == 0) return fail("unknown dtype");
    if (bytes.size() != off + esize * static_cast<size_t>(t.numel())) return fail("payload size mismatch");
    for (int64_t i = 0; i < t.numel(); ++i) {
        switch (static_cast<Dtype>(dtype)) {
            case Dtype::f32: {
                uint32_t bits = 0;
                for (int k = 0; k < 4; ++k) bits |= static_cast<uint32_t>(bytes[off + k]) << (8 * k);
                float f;
                std::memcpy(&f, &bits, 4);
                t[i] = f;
                off += 4;
                break;
            }
            case Dtype::u8:
                t[i] = bytes[off++];
                break;
            case Dtype::f64: {
                uint64_t bits = 0;
                for (int k = 0; k < 8; ++k) bits |= static_cast<uint64_t>(bytes[off + k]) << (8 * k);
                double d;
                std::memcpy(&d, &bits, 8);
                t[i] = d;
                off += 8;
                break;
            }
        }
    }
    return t;
}

inline void write_file(const std::filesystem::path& path, const std::vector<uint8_t>& bytes) {
    std::ofstream f(path, std::ios::binary | std::ios::trunc);
    if (!f) throw std::runtime_error("cannot open for write: " + path.string());
    f.write(reinterpret_cast<const char*>(bytes.data()), static_cast<std::streamsize>(bytes.size()));
    if (!f) throw std::runtime_error("write failed: " + path.string());
}

inline std::vector<uint8_t> read_file(const std::filesystem::path& path) {
    std::ifstream f(path, std::ios::binary);
    if (!f) throw std::runtime_error("cannot open for read: " + path.string());
    f.seekg(0, std::ios::end);
    auto size = f.tellg();
    f.seekg(0);
    std::vector<uint8_t> bytes(static_cast<size_t>(size));
    f.read(reinterpret_cast<char*>(bytes.data()), size);
    if (!f) throw std::runtime_error("read failed: " + path.string());
    return bytes;
}

// returns crc32c of the written bytes
inline uint32_t write_tensor_file(const std::filesystem::path& path, const Tensor& t, Dtype dtype) {
    auto bytes = serialize_tensor(t, dtype);
    write_file(path, bytes);
    return crc32c(bytes);
}

inline Tensor read_tensor_file(const std::filesystem::path& path, uint32_t* crc_out = nullptr) {
    auto bytes = read_file(path);
    if (crc_out) *crc_out = crc32c(bytes);
    return deserialize_tensor(bytes, path.string());
}

}  // namespace tide::io
