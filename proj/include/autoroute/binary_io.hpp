#pragma once

#include <bit>
#include <cstdint>
#include <istream>
#include <ostream>
#include <span>
#include <stdexcept>
#include <string>
#include <string_view>

#include "autoroute/matrix.hpp"

// Little-endian fixed-width encoding shared by every checkpoint format.
namespace autoroute::binio {

class FormatError : public std::runtime_error {
public:
    using std::runtime_error::runtime_error;
};

inline void write_u64(std::ostream& os, std::uint64_t v) {
    char buf[8];
    for (int i = 0; i < 8; ++i) buf[i] = static_cast<char>((v >> (8 * i)) & 0xffu);
    os.write(buf, 8);
}

inline void write_u32(std::ostream& os, std::uint32_t v) {
    char buf[4];
    for (int i = 0; i < 4; ++i) buf[i] = static_cast<char>((v >> (8 * i)) & 0xffu);
    os.write(buf, 4);
}

inline void write_f64(std::ostream& os, double v) { write_u64(os, std::bit_cast<std::uint64_t>(v)); }

inline void write_f64s(std::ostream& os, std::span<const double> vs) {
    for (double v : vs) write_f64(os, v);
}

inline void write_string(std::ostream& os, std::string_view s) {
    write_u64(os, s.size());
    os.write(s.data(), static_cast<std::streamsize>(s.size()));
}

inline void write_matrix(std::ostream& os, const Matrix& m) {
    write_u64(os, m.rows());
    write_u64(os, m.cols());
    write_f64s(os, m.values());
}

inline std::uint64_t read_u64(std::istream& is) {
    unsigned char buf[8];
    if (!is.read(reinterpret_cast<char*>(buf), 8)) throw FormatError("unexpected end of stream");
    std::uint64_t v = 0;
    for (int i = 0; i < 8; ++i) v |= static_cast<std::uint64_t>(buf[i]) << (8 * i);
    return v;
}

inline std::uint32_t read_u32(std::istream& is) {
    unsigned char buf[4];
    if (!is.read(reinterpret_cast<char*>(buf), 4)) throw FormatError("unexpected end of stream");
    std::uint32_t v = 0;
    for (int i = 0; i < 4; ++i) v |= static_cast<std::uint32_t>(buf[i]) << (8 * i);
    return v;
}

inline double read_f64(std::istream& is) { return std::bit_cast<double>(read_u64(is)); }

inline std::string read_string(std::istream& is, std::size_t max_len = 1u << 24) {
    const auto n = read_u64(is);
    if (n > max_len) throw FormatError("string length " + std::to_string(n) + " exceeds limit");
    std::string s(n, '\0');
    if (!is.read(s.data(), static_cast<std::streamsize>(n))) throw FormatError("unexpected end of stream");
    return s;
}

inline Matrix read_matrix(std::istream& is) {
    const auto rows = read_u64(is);
    const auto cols = read_u64(is);
    if (rows > (1u << 26) || cols > (1u << 26) || rows * cols > (1u << 28))
        throw FormatError("matrix dimensions out of range");
    Matrix m(rows, cols);
    for (double& v : m.values()) v = read_f64(is);
    return m;
}

/// 8-byte magic followed by a u32 version.
inline void write_header(std::ostream& os, std::string_view magic, std::uint32_t version) {
    std::string m(magic);
    m.resize(8, '\0');
    os.write(m.data(), 8);
    write_u32(os, version);
}

inline void read_header(std::istream& is, std::string_view magic, std::uint32_t version) {
    std::string got(8, '\0');
    if (!is.read(got.data(), 8)) throw FormatError("missing header");
    std::string want(magic);
    want.resize(8, '\0');
    if (got != want) throw FormatError("bad magic, expected '" + std::string(magic) + "'");
    const auto v = read_u32(is);
    if (v != version)
        throw FormatError("unsupported version " + std::to_string(v) + " for '" + std::string(magic) + "'");
}

}  // namespace autoroute::binio
