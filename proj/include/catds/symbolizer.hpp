#pragma once

#include <cstdint>
#include <span>
#include <string>
#include <string_view>
#include <vector>

#include "catds/common.hpp"

namespace catds {

/// First code point of the text export alphabet (CJK Unified Ideographs block:
/// tens of thousands of contiguous printable single-code-point characters).
inline constexpr char32_t kSymbolBase = U'\u4E00';

/// Drop consecutive duplicates: each maximal run contributes one symbol.
template <typename T>
std::vector<T> collapse_runs(std::span<const T> ids) {
    std::vector<T> out;
    out.reserve(ids.size());
    for (const T& v : ids) {
        if (out.empty() || out.back() != v) out.push_back(v);
    }
    return out;
}

template <typename T>
std::vector<T> collapse_runs(const std::vector<T>& ids) {
    return collapse_runs(std::span<const T>(ids));
}

namespace detail {

inline void append_utf8(std::string& out, char32_t cp) {
    if (cp < 0x80) {
        out.push_back(static_cast<char>(cp));
    } else if (cp < 0x800) {
        out.push_back(static_cast<char>(0xC0 | (cp >> 6)));
        out.push_back(static_cast<char>(0x80 | (cp & 0x3F)));
    } else if (cp < 0x10000) {
        out.push_back(static_cast<char>(0xE0 | (cp >> 12)));
        out.push_back(static_cast<char>(0x80 | ((cp >> 6) & 0x3F)));
        out.push_back(static_cast<char>(0x80 | (cp & 0x3F)));
    } else {
        out.push_back(static_cast<char>(0xF0 | (cp >> 18)));
        out.push_back(static_cast<char>(0x80 | ((cp >> 12) & 0x3F)));
        out.push_back(static_cast<char>(0x80 | ((cp >> 6) & 0x3F)));
        out.push_back(static_cast<char>(0x80 | (cp & 0x3F)));
    }
}

inline std::vector<char32_t> decode_utf8(std::string_view s) {
    std::vector<char32_t> out;
    std::size_t i = 0;
    while (i < s.size()) {
        const auto c = static_cast<unsigned char>(s[i]);
        std::size_t len;
        char32_t cp;
        if (c < 0x80) {
            len = 1;
            cp = c;
        } else if ((c >> 5) == 0x6) {
            len = 2;
            cp = c & 0x1F;
        } else if ((c >> 4) == 0xE) {
            len = 3;
            cp = c & 0x0F;
        } else if ((c >> 3) == 0x1E) {
            len = 4;
            cp = c & 0x07;
        } else {
            throw FormatError("invalid UTF-8 lead byte");
        }
        if (i + len > s.size()) throw FormatError("truncated UTF-8 sequence");
        for (std::size_t j = 1; j < len; ++j) {
            const auto cc = static_cast<unsigned char>(s[i + j]);
            if ((cc >> 6) != 0x2) throw FormatError("invalid UTF-8 continuation byte");
            cp = (cp << 6) | (cc & 0x3F);
        }
        out.push_back(cp);
        i += len;
    }
    return out;
}

}  // namespace detail

/// Text rendering for external subword trainers: symbol i becomes code point kSymbolBase + i.
inline std::string dump_text(std::span<const std::uint32_t> symbols, std::uint32_t alphabet_size) {
    std::string out;
    out.reserve(symbols.size() * 3);
    for (auto s : symbols) {
        if (s >= alphabet_size) {
            throw ValidationError("symbol " + std::to_string(s) + " outside alphabet of size " + std::to_string(alphabet_size));
        }
        detail::append_utf8(out, kSymbolBase + s);
    }
    return out;
}

inline std::vector<std::uint32_t> parse_text(std::string_view text, std::uint32_t alphabet_size) {
    std::vector<std::uint32_t> out;
    for (char32_t cp : detail::decode_utf8(text)) {
        if (cp < kSymbolBase || cp - kSymbolBase >= alphabet_size) {
            throw ValidationError("code point U+" + std::to_string(static_cast<std::uint32_t>(cp)) +
                                  " is not a symbol of this alphabet");
        }
        out.push_back(static_cast<std::uint32_t>(cp - kSymbolBase));
    }
    return out;
}

}  // namespace catds
