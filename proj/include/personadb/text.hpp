#pragma once

#include <string>
#include <string_view>
#include <vector>

namespace personadb::text {

std::string_view trim(std::string_view s) noexcept;
std::vector<std::string> split_lines(std::string_view s);
std::vector<std::string> split(std::string_view s, char sep);
std::string join(const std::vector<std::string>& parts, std::string_view sep);
std::string to_lower(std::string_view s);

/// Lowercased word tokens: maximal runs of ASCII alphanumerics and '_'.
/// Non-ASCII bytes are treated as part of tokens.
std::vector<std::string> tokenize(std::string_view s);

bool starts_with_ci(std::string_view s, std::string_view prefix) noexcept;

}  // namespace personadb::text
