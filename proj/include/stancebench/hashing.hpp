#pragma once

#include <cstdint>
#include <span>
#include <string>
#include <string_view>

namespace stancebench {

/// 64-bit FNV-1a. Stable across platforms; used for feature hashing.
constexpr std::uint64_t fnv1a64(std::string_view bytes,
                                std::uint64_t basis = 0xcbf29ce484222325ULL) noexcept {
    std::uint64_t h = basis;
    for (unsigned char c : bytes) {
        h ^= c;
        h *= 0x100000001b3ULL;
    }
    return h;
}

/// Lowercase hex SHA-256 (OpenSSL).
std::string sha256_hex(std::string_view bytes);
std::string sha256_hex(std::span<const unsigned char> bytes);

/// SHA-256 of a file's contents; throws Error when unreadable.
std::string sha256_file(const std::string& path);

} // namespace stancebench
