#pragma once

// Little-endian byte encoding helpers shared by the binary file formats.

#include <bit>
#include <cstdint>
#include <cstring>
#include <filesystem>
#include <fstream>
#include <string>
#include <string_view>
#include <vector>

#include "bftcn/errors.hpp"

namespace bftcn::binary {

using Bytes = std::vector<std::uint8_t>;

template <class U>
void put_uint(Bytes& out, U v) {
    for (std::size_t i = 0; i < sizeof(U); ++i) out.push_back(static_cast<std::uint8_t>(v >> (8 * i)));
}

inline void put_f32(Bytes& out, float v) { put_uint(out, std::bit_cast<std::uint32_t>(v)); }
inline void put_f64(Bytes& out, double v) { put_uint(out, std::bit_cast<std::uint64_t>(v)); }

inline void put_bytes(Bytes& out, std::string_view s) { out.insert(out.end(), s.begin(), s.end()); }

/// FNV-1a, 64-bit.
inline std::uint64_t fnv1a(const std::uint8_t* data, std::size_t n) {
    std::uint64_t h = 0xcbf29ce484222325ULL;
    for (std::size_t i = 0; i < n; ++i) {
        h ^= data[i];
        h *= 0x100000001b3ULL;
    }
    return h;
}

/// Bounds-checked sequential reader; running past the end throws TruncatedFileError.
class Reader {
public:
    Reader(const Bytes& data, std::string source) : data_(data), source_(std::move(source)) {}

    std::size_t offset() const { return pos_; }
    std::size_t remaining() const { return data_.size() - pos_; }

    void require(std::size_t n, std::string_view what) const {
        if (remaining() < n) {
            throw TruncatedFileError(source_ + ": truncated " + std::string(what) + ": expected " +
                                     std::to_string(pos_ + n) + " bytes, file has " + std::to_string(data_.size()));
        }
    }

    template <class U>
    U get_uint(std::string_view what) {
        require(sizeof(U), what);
        U v = 0;
        for (std::size_t i = 0; i < sizeof(U); ++i) v |= static_cast<U>(static_cast<U>(data_[pos_ + i]) << (8 * i));
        pos_ += sizeof(U);
        return v;
    }

    float get_f32(std::string_view what) { return std::bit_cast<float>(get_uint<std::uint32_t>(what)); }
    double get_f64(std::string_view what) { return std::bit_cast<double>(get_uint<std::uint64_t>(what)); }

    std::string get_string(std::size_t n, std::string_view what) {
        require(n, what);
        std::string s(reinterpret_cast<const char*>(data_.data() + pos_), n);
        pos_ += n;
        return s;
    }

private:
    const Bytes& data_;
    std::string source_;
    std::size_t pos_ = 0;
};

inline Bytes read_file(const std::filesystem::path& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw IoError("cannot open '" + path.string() + "' for reading");
    return Bytes((std::istreambuf_iterator<char>(in)), std::istreambuf_iterator<char>());
}

inline void write_file(const std::filesystem::path& path, const Bytes& bytes) {
    std::ofstream out(path, std::ios::binary | std::ios::trunc);
    if (!out) throw IoError("cannot open '" + path.string() + "' for writing");
    out.write(reinterpret_cast<const char*>(bytes.data()), static_cast<std::streamsize>(bytes.size()));
    if (!out) throw IoError("failed writing '" + path.string() + "'");
}

inline void write_text(const std::filesystem::path& path, const std::string& text) {
    std::ofstream out(path, std::ios::binary | std::ios::trunc);
    if (!out) throw IoError("cannot open '" + path.string() + "' for writing");
    out << text;
    if (!out) throw IoError("failed writing '" + path.string() + "'");
}

inline std::string read_text(const std::filesystem::path& path) {
    const Bytes b = read_file(path);
    return std::string(b.begin(), b.end());
}

}  // namespace bftcn::binary
