#pragma once

// Little-endian binary record helpers shared by the checkpoint and sequence
// file formats.

#include <bit>
#include <cstdint>
#include <cstring>
#include <istream>
#include <ostream>
#include <stdexcept>
#include <string>
#include <vector>

namespace frnn {

class FileError : public std::runtime_error {
public:
    explicit FileError(const std::string& what) : std::runtime_error(what) {}
};

namespace io {

inline void write_u32(std::ostream& os, std::uint32_t v) {
    unsigned char b[4] = {static_cast<unsigned char>(v), static_cast<unsigned char>(v >> 8),
                          static_cast<unsigned char>(v >> 16), static_cast<unsigned char>(v >> 24)};
    os.write(reinterpret_cast<const char*>(b), 4);
}

inline void write_u64(std::ostream& os, std::uint64_t v) {
    write_u32(os, static_cast<std::uint32_t>(v));
    write_u32(os, static_cast<std::uint32_t>(v >> 32));
}

inline std::uint32_t read_u32(std::istream& is, const char* what) {
    unsigned char b[4];
    if (!is.read(reinterpret_cast<char*>(b), 4))
        throw FileError(std::string("truncated file while reading ") + what);
    return std::uint32_t(b[0]) | (std::uint32_t(b[1]) << 8) | (std::uint32_t(b[2]) << 16) |
           (std::uint32_t(b[3]) << 24);
}

inline std::uint64_t read_u64(std::istream& is, const char* what) {
    const std::uint64_t lo = read_u32(is, what);
    const std::uint64_t hi = read_u32(is, what);
    return lo | (hi << 32);
}

inline void write_magic(std::ostream& os, const char magic[4]) { os.write(magic, 4); }

inline void expect_magic(std::istream& is, const char magic[4], const char* format_name) {
    char b[4];
    if (!is.read(b, 4)) throw FileError(std::string("truncated file while reading ") + format_name + " magic");
    if (std::memcmp(b, magic, 4) != 0)
        throw FileError(std::string("bad magic: not a ") + format_name + " file");
}

inline void write_string(std::ostream& os, const std::string& s) {
    write_u32(os, static_cast<std::uint32_t>(s.size()));
    os.write(s.data(), static_cast<std::streamsize>(s.size()));
}

inline std::string read_string(std::istream& is, const char* what) {
    const std::uint32_t len = read_u32(is, what);
    std::string s(len, '\0');
    if (len && !is.read(s.data(), len))
        throw FileError(std::string("truncated file while reading ") + what);
    return s;
}

inline void write_f32_array(std::ostream& os, const float* p, std::size_t n) {
    if constexpr (std::endian::native == std::endian::little) {
        os.write(reinterpret_cast<const char*>(p), static_cast<std::streamsize>(n * 4));
    } else {
        for (std::size_t i = 0; i < n; ++i) write_u32(os, std::bit_cast<std::uint32_t>(p[i]));
    }
}

inline void read_f32_array(std::istream& is, float* p, std::size_t n, const char* what) {
    if constexpr (std::endian::native == std::endian::little) {
        if (!is.read(reinterpret_cast<char*>(p), static_cast<std::streamsize>(n * 4)))
            throw FileError(std::string("truncated file while reading ") + what);
    } else {
        for (std::size_t i = 0; i < n; ++i) p[i] = std::bit_cast<float>(read_u32(is, what));
    }
}

}  // namespace io
}  // namespace frnn
