#pragma once

#include <cstdint>
#include <string>
#include <string_view>

namespace stancebench::utf8 {

inline constexpr char32_t kReplacement = 0xFFFD;

/// Decodes one code point at `pos` and advances it; malformed bytes decode
/// to U+FFFD and consume one byte.
char32_t decode(std::string_view s, std::size_t& pos) noexcept;
void append(std::string& out, char32_t cp);

/// Letters and digits of the Latin, Greek and Cyrillic blocks, plus any
/// code point at or above U+0530 outside the punctuation/symbol blocks.
bool is_word_char(char32_t cp) noexcept;
/// Simple case folding for Latin-1, Latin Extended-A, Greek and Cyrillic.
char32_t to_lower(char32_t cp) noexcept;

} // namespace stancebench::utf8
