#pragma once

#include <cstddef>
#include <span>
#include <string>
#include <string_view>

namespace fmsr {

/// Lowercase hex SHA-256 digest.
std::string sha256_hex(std::span<const std::byte> data);
std::string sha256_hex(std::string_view text);

}  // namespace fmsr
