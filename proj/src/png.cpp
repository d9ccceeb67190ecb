#include "axtrace/png.hpp"

#include <stdexcept>

#include <zlib.h>

namespace axtrace {

namespace {

void put_u32(std::string& out, std::uint32_t v) {
  out.push_back(static_cast<char>(v >> 24));
  out.push_back(static_cast<char>(v >> 16));
  out.push_back(static_cast<char>(v >> 8));
  out.push_back(static_cast<char>(v));
}

void put_chunk(std::string& out, const char* type, const std::string& body) {
  put_u32(out, static_cast<std::uint32_t>(body.size()));
  const std::string tagged = std::string(type, 4) + body;
  out += tagged;
  put_u32(out, static_cast<std::uint32_t>(
                   crc32(0L, reinterpret_cast<const Bytef*>(tagged.data()), static_cast<uInt>(tagged.size()))));
}

}  // namespace

std::string encode_png(std::int64_t width, std::int64_t height, int channels,
                       const std::vector<std::uint8_t>& pixels) {
  if (channels != 1 && channels != 3) throw std::invalid_argument("PNG channels must be 1 or 3");
  if (width <= 0 || height <= 0) throw std::invalid_argument("PNG dimensions must be positive");
  const auto row = static_cast<std::size_t>(width) * static_cast<std::size_t>(channels);
  if (pixels.size() != row * static_cast<std::size_t>(height)) throw std::invalid_argument("PNG pixel count mismatch");

  // Filter type 0 per scanline.
  std::string raw;
  raw.reserve((row + 1) * static_cast<std::size_t>(height));
  for (std::int64_t y = 0; y < height; ++y) {
    raw.push_back('\0');
    raw.append(reinterpret_cast<const char*>(pixels.data()) + static_cast<std::size_t>(y) * row, row);
  }
  uLongf packed_len = compressBound(static_cast<uLong>(raw.size()));
  std::string packed(packed_len, '\0');
  if (compress2(reinterpret_cast<Bytef*>(packed.data()), &packed_len, reinterpret_cast<const Bytef*>(raw.data()),
                static_cast<uLong>(raw.size()), Z_DEFAULT_COMPRESSION) != Z_OK) {
    throw std::runtime_error("zlib compression failed");
  }
  packed.resize(packed_len);

  std::string out("\x89PNG\r\n\x1a\n", 8);
  std::string ihdr;
  put_u32(ihdr, static_cast<std::uint32_t>(width));
  put_u32(ihdr, static_cast<std::uint32_t>(height));
  ihdr.push_back(8);                                // bit depth
  ihdr.push_back(channels == 1 ? 0 : 2);            // colour type
  ihdr.append(3, '\0');                             // compression, filter, interlace
  put_chunk(out, "IHDR", ihdr);
  put_chunk(out, "IDAT", packed);
  put_chunk(out, "IEND", "");
  return out;
}

}  // namespace axtrace
