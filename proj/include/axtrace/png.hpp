#pragma once

#include <cstdint>
#include <string>
#include <vector>

namespace axtrace {

/// Encodes 8-bit pixels as PNG. `channels` is 1 (grey) or 3 (RGB); pixels
/// are row-major.
std::string encode_png(std::int64_t width, std::int64_t height, int channels,
                       const std::vector<std::uint8_t>& pixels);

}  // namespace axtrace
