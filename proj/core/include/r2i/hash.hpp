#pragma once

#include <cstdint>
#include <string>
#include <string_view>

namespace r2i {

/// Lowercase hex SHA-256 of the given bytes.
std::string sha256_hex(std::string_view bytes);

/// First 8 bytes of SHA-256, big-endian. Used for seeded, platform-independent draws.
std::uint64_t sha256_u64(std::string_view bytes);

/// Maps a 64-bit value onto [0, 1) with 53 bits of precision.
double to_unit_interval(std::uint64_t value);

std::string base64_encode(std::string_view bytes);
std::string base64_decode(std::string_view text);

}  // namespace r2i
