#pragma once

#include <cstdint>
#include <span>
#include <string>
#include <string_view>
#include <vector>

namespace aeckit {

// RFC 4648 standard alphabet with '=' padding.
std::string base64_encode(std::span<const std::uint8_t> bytes);
// Strict: rejects characters outside the alphabet, bad padding, and lengths
// that are not a multiple of 4. Throws InvalidArgument.
std::vector<std::uint8_t> base64_decode(std::string_view text);

}  // namespace aeckit
