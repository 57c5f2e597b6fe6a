#include "eg/text.hpp"

#include <cctype>
#include <cstdint>

namespace eg::text {

std::string_view trim(std::string_view s) {
    const auto first = s.find_first_not_of(" \t\r\n\f\v");
    if (first == std::string_view::npos) return {};
    const auto last = s.find_last_not_of(" \t\r\n\f\v");
    return s.substr(first, last - first + 1);
}

std::string to_lower_ascii(std::string_view s) {
    std::string out(s);
    for (auto& c : out) c = static_cast<char>(std::tolower(static_cast<unsigned char>(c)));
    return out;
}

std::string replace_all(std::string_view s, std::string_view from, std::string_view to) {
    std::string out;
    if (from.empty()) return std::string(s);
    std::size_t pos = 0;
    while (true) {
        const auto hit = s.find(from, pos);
        if (hit == std::string_view::npos) break;
        out.append(s.substr(pos, hit - pos));
        out.append(to);
        pos = hit + from.size();
    }
    out.append(s.substr(pos));
    return out;
}

namespace {

enum class CharClass { Word, Joiner, Other };

struct Decoded {
    char32_t cp;
    std::size_t len;
};

Decoded decode(std::string_view s, std::size_t i) {
    const auto b0 = static_cast<unsigned char>(s[i]);
    auto cont = [&](std::size_t k) -> char32_t {
        if (i + k >= s.size()) return 0xFFFD;
        const auto b = static_cast<unsigned char>(s[i + k]);
        return (b & 0xC0) == 0x80 ? static_cast<char32_t>(b & 0x3F) : 0xFFFD;
    };
    if (b0 < 0x80) return {b0, 1};
    if ((b0 & 0xE0) == 0xC0) return {(char32_t(b0 & 0x1F) << 6) | cont(1), 2};
    if ((b0 & 0xF0) == 0xE0) return {(char32_t(b0 & 0x0F) << 12) | (cont(1) << 6) | cont(2), 3};
    if ((b0 & 0xF8) == 0xF0) {
        return {(char32_t(b0 & 0x07) << 18) | (cont(1) << 12) | (cont(2) << 6) | cont(3), 4};
    }
    return {0xFFFD, 1};
}

CharClass classify(char32_t cp) {
    if (cp < 0x80) {
        if (std::isalnum(static_cast<int>(cp))) return CharClass::Word;
        if (cp == '\'' || cp == '-') return CharClass::Joiner;
        return CharClass::Other;
    }
    if (cp == 0x2019) return CharClass::Joiner;
    if (cp == 0xA0 || cp == 0xFFFD) return CharClass::Other;
    if (cp >= 0x2000 && cp <= 0x2BFF) return CharClass::Other;  // punctuation, symbols, arrows
    if (cp >= 0x3000 && cp <= 0x303F) return CharClass::Other;  // CJK punctuation
    if (cp >= 0xA1 && cp <= 0xBF) return CharClass::Other;      // Latin-1 punctuation
    if (cp == 0xD7 || cp == 0xF7) return CharClass::Other;
    if (cp >= 0x1F000) return CharClass::Other;                 // emoji and pictographs
    return CharClass::Word;
}

}  // namespace

std::vector<std::string> tokenize(std::string_view s) {
    std::vector<std::string> tokens;
    std::string current;
    std::string pending_joiner;
    for (std::size_t i = 0; i < s.size();) {
        const auto [cp, len] = decode(s, i);
        const auto piece = s.substr(i, len);
        switch (classify(cp)) {
            case CharClass::Word:
                if (!pending_joiner.empty()) {
                    current += pending_joiner;
                    pending_joiner.clear();
                }
                current += to_lower_ascii(piece);
                break;
            case CharClass::Joiner:
                if (!current.empty() && pending_joiner.empty()) {
                    pending_joiner = cp == 0x2019 ? std::string("'") : std::string(piece);
                } else if (!current.empty()) {
                    tokens.push_back(std::move(current));
                    current.clear();
                    pending_joiner.clear();
                }
                break;
            case CharClass::Other:
                if (!current.empty()) tokens.push_back(std::move(current));
                current.clear();
                pending_joiner.clear();
        }
        i += len;
    }
    if (!current.empty()) tokens.push_back(std::move(current));
    return tokens;
}

std::size_t word_count(std::string_view s) {
    std::size_t count = 0;
    bool in_word = false;
    for (char c : s) {
        const bool space = std::isspace(static_cast<unsigned char>(c)) != 0;
        if (!space && !in_word) ++count;
        in_word = !space;
    }
    return count;
}

}  // namespace eg::text
