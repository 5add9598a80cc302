#include "playtitle/unicode.hpp"

#include <unicode/normalizer2.h>
#include <unicode/uchar.h>
#include <unicode/unistr.h>
#include <unicode/utf8.h>

#include "playtitle/error.hpp"

namespace playtitle {

namespace {

icu::UnicodeString to_unicode(std::string_view utf8) {
    // ICU silently substitutes U+FFFD; validate first so bad input is loud.
    const auto* s = reinterpret_cast<const std::uint8_t*>(utf8.data());
    const auto length = static_cast<std::int32_t>(utf8.size());
    for (std::int32_t i = 0; i < length;) {
        UChar32 c;
        U8_NEXT(s, i, length, c);
        if (c < 0) throw ParseError("invalid UTF-8 in \"" + std::string(utf8) + "\"");
    }
    return icu::UnicodeString::fromUTF8(icu::StringPiece(utf8.data(), length));
}

std::string normalize_unicode(const icu::UnicodeString& input) {
    UErrorCode status = U_ZERO_ERROR;
    const icu::Normalizer2* nfc = icu::Normalizer2::getNFCInstance(status);
    if (U_FAILURE(status)) throw Error("ICUError", u_errorName(status));
    icu::UnicodeString s = nfc->normalize(input, status);
    if (U_FAILURE(status)) throw Error("ICUError", u_errorName(status));
    s.foldCase(U_FOLD_CASE_DEFAULT);
    // Case folding can denormalize (e.g. some Greek sequences).
    s = nfc->normalize(s, status);
    if (U_FAILURE(status)) throw Error("ICUError", u_errorName(status));

    std::int32_t begin = 0;
    std::int32_t end = s.length();
    while (begin < end && u_isUWhiteSpace(s.char32At(begin))) begin = s.moveIndex32(begin, 1);
    while (end > begin) {
        const std::int32_t prev = s.moveIndex32(end, -1);
        if (!u_isUWhiteSpace(s.char32At(prev))) break;
        end = prev;
    }
    std::string out;
    s.tempSubStringBetween(begin, end).toUTF8String(out);
    return out;
}

}  // namespace

std::string normalize_token(std::string_view raw) { return normalize_unicode(to_unicode(raw)); }

std::vector<std::string> tokenize_title(std::string_view title) {
    const icu::UnicodeString s = to_unicode(title);
    std::vector<std::string> tokens;
    std::int32_t i = 0;
    const std::int32_t n = s.length();
    while (i < n) {
        while (i < n && u_isUWhiteSpace(s.char32At(i))) i = s.moveIndex32(i, 1);
        const std::int32_t start = i;
        while (i < n && !u_isUWhiteSpace(s.char32At(i))) i = s.moveIndex32(i, 1);
        if (i > start) {
            std::string token = normalize_unicode(s.tempSubStringBetween(start, i));
            if (!token.empty()) tokens.push_back(std::move(token));
        }
    }
    return tokens;
}

std::size_t scalar_count(std::string_view utf8) {
    std::size_t count = 0;
    for (const char c : utf8) {
        if ((static_cast<unsigned char>(c) & 0xC0) != 0x80) ++count;
    }
    return count;
}

}  // namespace playtitle
