#pragma once

#include <cstddef>
#include <string>
#include <string_view>
#include <vector>

namespace playtitle {

// NFC normalization, default Unicode case folding, and trimming of
// surrounding whitespace. Invalid UTF-8 is rejected with ParseError.
std::string normalize_token(std::string_view raw);

// Splits on runs of Unicode whitespace and normalizes every piece.
std::vector<std::string> tokenize_title(std::string_view title);

// Number of Unicode scalar values in a valid UTF-8 string.
std::size_t scalar_count(std::string_view utf8);

}  // namespace playtitle
