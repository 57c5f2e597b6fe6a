#pragma once

#include <cstddef>
#include <string>
#include <string_view>
#include <vector>

namespace eg::text {

std::string_view trim(std::string_view s);
std::string to_lower_ascii(std::string_view s);
std::string replace_all(std::string_view s, std::string_view from, std::string_view to);

// Lowercased word tokens. A word is a maximal run of letters/digits; apostrophes
// (ASCII or U+2019) and hyphens are kept when they sit between two word
// characters. Non-ASCII code points outside the general-punctuation and
// symbol blocks count as letters, so accented words stay whole.
std::vector<std::string> tokenize(std::string_view s);

// Whitespace-delimited word count, used for stimulus length targets.
std::size_t word_count(std::string_view s);

}  // namespace eg::text
