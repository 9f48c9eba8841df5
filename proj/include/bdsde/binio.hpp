#pragma once

#include <bit>
#include <cstdint>
#include <cstring>
#include <istream>
#include <ostream>
#include <span>

#include "bdsde/errors.hpp"

namespace bdsde::binio {

// Common container convention: 8-byte magic, u64 header length, JSON
// header, little-endian 64-bit payloads.

inline void write_u64(std::ostream& os, std::uint64_t v) {
    unsigned char buf[8];
    for (int i = 0; i < 8; ++i) buf[i] = static_cast<unsigned char>((v >> (8 * i)) & 0xff);
    os.write(reinterpret_cast<const char*>(buf), 8);
}

inline std::uint64_t read_u64(std::istream& is) {
    unsigned char buf[8];
    is.read(reinterpret_cast<char*>(buf), 8);
    std::uint64_t v = 0;
    for (int i = 0; i < 8; ++i) v |= static_cast<std::uint64_t>(buf[i]) << (8 * i);
    return v;
}

inline void write_doubles(std::ostream& os, std::span<const double> xs) {
    for (double x : xs) write_u64(os, std::bit_cast<std::uint64_t>(x));
}

inline void read_doubles(std::istream& is, std::span<double> xs) {
    for (double& x : xs) x = std::bit_cast<double>(read_u64(is));
}

inline void write_magic(std::ostream& os, const char (&magic)[9]) { os.write(magic, 8); }

inline void expect_magic(std::istream& is, const char (&magic)[9], const char* what) {
    char buf[8];
    is.read(buf, 8);
    if (!is || std::memcmp(buf, magic, 8) != 0)
        throw InvalidArgument(std::string("not a ") + what + " container");
}

} // namespace bdsde::binio
