#pragma once

#include <string>
#include <string_view>
#include <vector>

namespace personadb {

inline constexpr std::string_view kDigestAlgorithm = "sha256";

/// Lowercase hex SHA-256 of `data`.
std::string sha256_hex(std::string_view data);

/// Injective serialization of a field list: each field is written as
/// `<byte length>:<bytes>\n`, so no choice of field contents can collide.
std::string canonical_fields(const std::vector<std::string_view>& fields);

}  // namespace personadb
