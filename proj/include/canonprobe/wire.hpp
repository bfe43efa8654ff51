#pragma once

// Encoding helpers shared by the remote generation protocol and digests.

#include <cstdint>
#include <span>
#include <string>
#include <string_view>
#include <vector>

namespace canonprobe {

std::string base64_encode(std::span<const std::uint8_t> bytes);
std::string base64_encode(std::string_view text);
/// Throws std::invalid_argument on malformed input.
std::vector<std::uint8_t> base64_decode(std::string_view text);

std::string sha256_hex(std::span<const std::uint8_t> bytes);
std::string sha256_hex(std::string_view text);

}  // namespace canonprobe
