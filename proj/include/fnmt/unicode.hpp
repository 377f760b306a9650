// Thin UTF-8 helpers over ICU. All case mappings are locale-independent.
#pragma once

#include <string>
#include <string_view>

namespace fnmt::unicode {

std::u32string decode(std::string_view utf8);
std::string encode(std::u32string_view cps);
std::string encode(char32_t cp);

bool is_cased(char32_t cp);
bool is_upper(char32_t cp);
bool is_lower(char32_t cp);
bool is_punct(char32_t cp);
bool is_space(char32_t cp);

/// Full case mappings (e.g. "ß" uppercases to "SS").
std::string to_lower(std::string_view s);
std::string to_upper(std::string_view s);

/// Simple one-to-one mapping per code point; preserves code point count.
std::u32string to_lower_simple(std::u32string_view cps);
char32_t to_upper_simple(char32_t cp);

}  // namespace fnmt::unicode
