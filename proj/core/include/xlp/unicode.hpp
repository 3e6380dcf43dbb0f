#pragma once

#include <string>
#include <string_view>
#include <vector>

// Thin wrappers over ICU used by every text-facing module. Invalid UTF-8
// sequences decode to U+FFFD.
namespace xlp::unicode {

std::string nfkc(std::string_view text);
std::string to_lower(std::string_view text);

std::u32string decode(std::string_view utf8);
std::string encode(std::u32string_view cps);
void append_utf8(std::string& out, char32_t cp);

bool is_space(char32_t cp);
// Unicode general category P*, plus the ASCII punctuation set (which also
// covers symbols such as '$', '+', '<', '^', '`', '|', '~').
bool is_punct(char32_t cp);

// NFKC, lowercase, whitespace runs collapsed to one ASCII space, trimmed.
// Shared key for query dedup, hashing and gazetteer surfaces.
std::string canonical_text(std::string_view text);

// True when the text has no non-whitespace code point.
bool is_blank(std::string_view text);

}  // namespace xlp::unicode
