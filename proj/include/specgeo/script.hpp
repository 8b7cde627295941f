#pragma once

#include <array>
#include <cstdint>
#include <string>
#include <string_view>
#include <vector>

#include "specgeo/error.hpp"
#include "specgeo/manifest.hpp"

namespace specgeo {

enum class Script { Latin, Han, Cyrillic, Arabic, Hangul, Devanagari, Common, Mixed, Other };

inline std::string to_string(Script s) {
    switch (s) {
    case Script::Latin: return "Latin";
    case Script::Han: return "Han";
    case Script::Cyrillic: return "Cyrillic";
    case Script::Arabic: return "Arabic";
    case Script::Hangul: return "Hangul";
    case Script::Devanagari: return "Devanagari";
    case Script::Common: return "Common";
    case Script::Mixed: return "Mixed";
    case Script::Other: return "Other";
    }
    return "Other";
}

inline Script parse_script(std::string_view s) {
    for (Script x : {Script::Latin, Script::Han, Script::Cyrillic, Script::Arabic, Script::Hangul, Script::Devanagari,
                     Script::Common, Script::Mixed, Script::Other})
        if (to_string(x) == s) return x;
    fail(Errc::invalid_argument, "unknown script '" + std::string(s) + "'");
}

namespace detail {

// Per-character class; Inherited marks combining marks that take the script
// of their base and are ignored in the tally just like Common.
enum class CharClass { Latin, Han, Cyrillic, Arabic, Hangul, Devanagari, Common, Inherited, Other };

struct ScriptRange {
    char32_t lo, hi;
    CharClass cls;
};

// Sorted, non-overlapping. Code points not covered fall back to Other.
inline constexpr std::array kScriptRanges{
    ScriptRange{0x0000, 0x0040, CharClass::Common},
    ScriptRange{0x0041, 0x005A, CharClass::Latin},
    ScriptRange{0x005B, 0x0060, CharClass::Common},
    ScriptRange{0x0061, 0x007A, CharClass::Latin},
    ScriptRange{0x007B, 0x00A9, CharClass::Common},
    ScriptRange{0x00AA, 0x00AA, CharClass::Latin},
    ScriptRange{0x00AB, 0x00B9, CharClass::Common},
    ScriptRange{0x00BA, 0x00BA, CharClass::Latin},
    ScriptRange{0x00BB, 0x00BF, CharClass::Common},
    ScriptRange{0x00C0, 0x00D6, CharClass::Latin},
    ScriptRange{0x00D7, 0x00D7, CharClass::Common},
    ScriptRange{0x00D8, 0x00F6, CharClass::Latin},
    ScriptRange{0x00F7, 0x00F7, CharClass::Common},
    ScriptRange{0x00F8, 0x02AF, CharClass::Latin},
    ScriptRange{0x02B0, 0x02FF, CharClass::Common},
    ScriptRange{0x0300, 0x036F, CharClass::Inherited},
    ScriptRange{0x0400, 0x0482, CharClass::Cyrillic},
    ScriptRange{0x0483, 0x0489, CharClass::Inherited},
    ScriptRange{0x048A, 0x052F, CharClass::Cyrillic},
    ScriptRange{0x0600, 0x060B, CharClass::Arabic},
    ScriptRange{0x060C, 0x060C, CharClass::Common},
    ScriptRange{0x060D, 0x061A, CharClass::Arabic},
    ScriptRange{0x061B, 0x061B, CharClass::Common},
    ScriptRange{0x061C, 0x061E, CharClass::Arabic},
    ScriptRange{0x061F, 0x061F, CharClass::Common},
    ScriptRange{0x0620, 0x063F, CharClass::Arabic},
    ScriptRange{0x0640, 0x0640, CharClass::Common},
    ScriptRange{0x0641, 0x064A, CharClass::Arabic},
    ScriptRange{0x064B, 0x0655, CharClass::Inherited},
    ScriptRange{0x0656, 0x066F, CharClass::Arabic},
    ScriptRange{0x0670, 0x0670, CharClass::Inherited},
    ScriptRange{0x0671, 0x06DC, CharClass::Arabic},
    ScriptRange{0x06DD, 0x06DD, CharClass::Common},
    ScriptRange{0x06DE, 0x06FF, CharClass::Arabic},
    ScriptRange{0x0750, 0x077F, CharClass::Arabic},
    ScriptRange{0x08A0, 0x08FF, CharClass::Arabic},
    ScriptRange{0x0900, 0x0950, CharClass::Devanagari},
    ScriptRange{0x0951, 0x0954, CharClass::Inherited},
    ScriptRange{0x0955, 0x0963, CharClass::Devanagari},
    ScriptRange{0x0964, 0x0965, CharClass::Common},
    ScriptRange{0x0966, 0x097F, CharClass::Devanagari},
    ScriptRange{0x1100, 0x11FF, CharClass::Hangul},
    ScriptRange{0x1AB0, 0x1AFF, CharClass::Inherited},
    ScriptRange{0x1C80, 0x1C8F, CharClass::Cyrillic},
    ScriptRange{0x1D00, 0x1D25, CharClass::Latin},
    ScriptRange{0x1D2C, 0x1D5C, CharClass::Latin},
    ScriptRange{0x1D62, 0x1D65, CharClass::Latin},
    ScriptRange{0x1D6B, 0x1D77, CharClass::Latin},
    ScriptRange{0x1D79, 0x1DBE, CharClass::Latin},
    ScriptRange{0x1DC0, 0x1DFF, CharClass::Inherited},
    ScriptRange{0x1E00, 0x1EFF, CharClass::Latin},
    ScriptRange{0x2000, 0x200B, CharClass::Common},
    ScriptRange{0x200C, 0x200D, CharClass::Inherited},
    ScriptRange{0x200E, 0x2070, CharClass::Common},
    ScriptRange{0x2071, 0x2071, CharClass::Latin},
    ScriptRange{0x2072, 0x207E, CharClass::Common},
    ScriptRange{0x207F, 0x207F, CharClass::Latin},
    ScriptRange{0x2080, 0x208F, CharClass::Common},
    ScriptRange{0x2090, 0x209C, CharClass::Latin},
    ScriptRange{0x20A0, 0x20CF, CharClass::Common},
    ScriptRange{0x20D0, 0x20FF, CharClass::Inherited},
    ScriptRange{0x2100, 0x2125, CharClass::Common},
    ScriptRange{0x212A, 0x212B, CharClass::Latin},
    ScriptRange{0x2132, 0x2132, CharClass::Latin},
    ScriptRange{0x214E, 0x214E, CharClass::Latin},
    ScriptRange{0x2150, 0x215F, CharClass::Common},
    ScriptRange{0x2160, 0x2188, CharClass::Latin},
    ScriptRange{0x2189, 0x2BFF, CharClass::Common},
    ScriptRange{0x2C60, 0x2C7F, CharClass::Latin},
    ScriptRange{0x2DE0, 0x2DFF, CharClass::Cyrillic},
    ScriptRange{0x2E00, 0x2E7F, CharClass::Common},
    ScriptRange{0x2E80, 0x2FDF, CharClass::Han},
    ScriptRange{0x2FF0, 0x3004, CharClass::Common},
    ScriptRange{0x3005, 0x3005, CharClass::Han},
    ScriptRange{0x3006, 0x3006, CharClass::Common},
    ScriptRange{0x3007, 0x3007, CharClass::Han},
    ScriptRange{0x3008, 0x3020, CharClass::Common},
    ScriptRange{0x3021, 0x3029, CharClass::Han},
    ScriptRange{0x302A, 0x302D, CharClass::Inherited},
    ScriptRange{0x3030, 0x3037, CharClass::Common},
    ScriptRange{0x3038, 0x303B, CharClass::Han},
    ScriptRange{0x303C, 0x303F, CharClass::Common},
    ScriptRange{0x3131, 0x318E, CharClass::Hangul},
    ScriptRange{0x3190, 0x319F, CharClass::Common},
    ScriptRange{0x3200, 0x321E, CharClass::Hangul},
    ScriptRange{0x3220, 0x325F, CharClass::Common},
    ScriptRange{0x3260, 0x327E, CharClass::Hangul},
    ScriptRange{0x327F, 0x32FF, CharClass::Common},
    ScriptRange{0x3358, 0x33FF, CharClass::Common},
    ScriptRange{0x3400, 0x4DBF, CharClass::Han},
    ScriptRange{0x4DC0, 0x4DFF, CharClass::Common},
    ScriptRange{0x4E00, 0x9FFF, CharClass::Han},
    ScriptRange{0xA640, 0xA69F, CharClass::Cyrillic},
    ScriptRange{0xA700, 0xA721, CharClass::Common},
    ScriptRange{0xA722, 0xA787, CharClass::Latin},
    ScriptRange{0xA788, 0xA78A, CharClass::Common},
    ScriptRange{0xA78B, 0xA7FF, CharClass::Latin},
    ScriptRange{0xA8E0, 0xA8FF, CharClass::Devanagari},
    ScriptRange{0xA960, 0xA97F, CharClass::Hangul},
    ScriptRange{0xAB30, 0xAB5A, CharClass::Latin},
    ScriptRange{0xAB5B, 0xAB5B, CharClass::Common},
    ScriptRange{0xAB5C, 0xAB64, CharClass::Latin},
    ScriptRange{0xAC00, 0xD7A3, CharClass::Hangul},
    ScriptRange{0xD7B0, 0xD7FF, CharClass::Hangul},
    ScriptRange{0xF900, 0xFAFF, CharClass::Han},
    ScriptRange{0xFB00, 0xFB06, CharClass::Latin},
    ScriptRange{0xFB50, 0xFD3D, CharClass::Arabic},
    ScriptRange{0xFD3E, 0xFD3F, CharClass::Common},
    ScriptRange{0xFD40, 0xFDFF, CharClass::Arabic},
    ScriptRange{0xFE00, 0xFE0F, CharClass::Inherited},
    ScriptRange{0xFE10, 0xFE1F, CharClass::Common},
    ScriptRange{0xFE20, 0xFE2F, CharClass::Inherited},
    ScriptRange{0xFE30, 0xFE6F, CharClass::Common},
    ScriptRange{0xFE70, 0xFEFC, CharClass::Arabic},
    ScriptRange{0xFEFF, 0xFF20, CharClass::Common},
    ScriptRange{0xFF21, 0xFF3A, CharClass::Latin},
    ScriptRange{0xFF3B, 0xFF40, CharClass::Common},
    ScriptRange{0xFF41, 0xFF5A, CharClass::Latin},
    ScriptRange{0xFF5B, 0xFF65, CharClass::Common},
    ScriptRange{0xFF70, 0xFF70, CharClass::Common},
    ScriptRange{0xFF9E, 0xFF9F, CharClass::Common},
    ScriptRange{0xFFA0, 0xFFDC, CharClass::Hangul},
    ScriptRange{0xFFE0, 0xFFFD, CharClass::Common},
    ScriptRange{0x1F000, 0x1FBFF, CharClass::Common},
    ScriptRange{0x20000, 0x323AF, CharClass::Han},
    ScriptRange{0xE0001, 0xE007F, CharClass::Common},
    ScriptRange{0xE0100, 0xE01EF, CharClass::Inherited},
};

inline CharClass classify_char(char32_t cp) {
    std::size_t lo = 0, hi = kScriptRanges.size();
    while (lo < hi) {
        const std::size_t mid = (lo + hi) / 2;
        if (kScriptRanges[mid].hi < cp)
            lo = mid + 1;
        else
            hi = mid;
    }
    if (lo < kScriptRanges.size() && kScriptRanges[lo].lo <= cp) return kScriptRanges[lo].cls;
    return CharClass::Other;
}

inline constexpr char32_t kInvalidCodePoint = 0xFFFFFFFF;

/// Decode UTF-8; malformed sequences yield kInvalidCodePoint for one byte.
inline std::vector<char32_t> decode_utf8(std::string_view s) {
    std::vector<char32_t> out;
    std::size_t i = 0;
    while (i < s.size()) {
        const auto b0 = static_cast<unsigned char>(s[i]);
        std::size_t len = 0;
        char32_t cp = 0;
        if (b0 < 0x80) {
            len = 1;
            cp = b0;
        } else if ((b0 & 0xE0) == 0xC0) {
            len = 2;
            cp = b0 & 0x1F;
        } else if ((b0 & 0xF0) == 0xE0) {
            len = 3;
            cp = b0 & 0x0F;
        } else if ((b0 & 0xF8) == 0xF0) {
            len = 4;
            cp = b0 & 0x07;
        }
        bool ok = len > 0 && i + len <= s.size();
        for (std::size_t k = 1; ok && k < len; ++k) {
            const auto b = static_cast<unsigned char>(s[i + k]);
            if ((b & 0xC0) != 0x80) ok = false;
            cp = (cp << 6) | (b & 0x3F);
        }
        if (ok && ((len == 2 && cp < 0x80) || (len == 3 && cp < 0x800) || (len == 4 && (cp < 0x10000 || cp > 0x10FFFF)) ||
                   (cp >= 0xD800 && cp <= 0xDFFF)))
            ok = false;
        if (!ok) {
            out.push_back(kInvalidCodePoint);
            ++i;
        } else {
            out.push_back(cp);
            i += len;
        }
    }
    return out;
}

// Tokenizer word-boundary glyphs: byte-level BPE space (U+0120) and newline
// (U+010A), SentencePiece space (U+2581).
inline bool is_prefix_marker(char32_t cp) {
    return cp == 0x0120 || cp == 0x010A || cp == 0x2581 || cp == U' ' || cp == U'\t' || cp == U'\n' || cp == U'\r';
}

} // namespace detail

/// Script of a token string: leading tokenizer markers are stripped, Common
/// and Inherited characters are ignored, and the label is the script holding
/// a strict majority of what remains. No strict majority gives Mixed; no
/// remaining characters gives Common.
inline Script classify_script(std::string_view token) {
    auto cps = detail::decode_utf8(token);
    std::size_t start = 0;
    while (start < cps.size() && detail::is_prefix_marker(cps[start])) ++start;

    constexpr std::size_t kClasses = 9;
    std::array<std::size_t, kClasses> counts{};
    std::size_t total = 0;
    for (std::size_t i = start; i < cps.size(); ++i) {
        const auto cls = cps[i] == detail::kInvalidCodePoint ? detail::CharClass::Other : detail::classify_char(cps[i]);
        if (cls == detail::CharClass::Common || cls == detail::CharClass::Inherited) continue;
        ++counts[static_cast<std::size_t>(cls)];
        ++total;
    }
    if (total == 0) return Script::Common;
    for (std::size_t c = 0; c < kClasses; ++c) {
        if (2 * counts[c] > total) {
            switch (static_cast<detail::CharClass>(c)) {
            case detail::CharClass::Latin: return Script::Latin;
            case detail::CharClass::Han: return Script::Han;
            case detail::CharClass::Cyrillic: return Script::Cyrillic;
            case detail::CharClass::Arabic: return Script::Arabic;
            case detail::CharClass::Hangul: return Script::Hangul;
            case detail::CharClass::Devanagari: return Script::Devanagari;
            default: return Script::Other;
            }
        }
    }
    return Script::Mixed;
}

/// Ids of the tokens whose script label equals `target`, in table order.
inline std::vector<std::int64_t> script_filter(std::span<const TokenEntry> table, Script target) {
    std::vector<std::int64_t> ids;
    for (const auto& t : table)
        if (classify_script(t.token) == target) ids.push_back(t.id);
    return ids;
}

/// Same, for a plain list where the token id is the position.
inline std::vector<std::int64_t> script_filter(std::span<const std::string> tokens, Script target) {
    std::vector<std::int64_t> ids;
    for (std::size_t i = 0; i < tokens.size(); ++i)
        if (classify_script(tokens[i]) == target) ids.push_back(static_cast<std::int64_t>(i));
    return ids;
}

} // namespace specgeo
