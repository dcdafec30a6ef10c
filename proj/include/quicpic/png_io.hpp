#pragma once

#include <cstdint>
#include <filesystem>
#include <span>
#include <vector>

#include "quicpic/image.hpp"

namespace quicpic {

/// Decoded 8-bit RGB pixels, row-major, no alpha.
struct DecodedPng {
  Index width = 0;
  Index height = 0;
  std::vector<std::uint8_t> rgb;
};

/// Encode as an 8-bit RGB PNG (color type 2, no interlace). Width is the
/// number of time bins, height the number of length bins. The IDAT stream
/// uses stored deflate blocks, so output bytes depend only on the pixels —
/// golden files stay stable across toolchain upgrades.
std::vector<std::uint8_t> encode_png(const TrafficImage& img);

/// Decode PNGs produced by encode_png (8-bit RGB, filter 0, stored deflate
/// blocks). Anything else raises Error{BadPng}.
DecodedPng decode_png(std::span<const std::uint8_t> bytes);

void write_png(const TrafficImage& img, const std::filesystem::path& path);

DecodedPng read_png_file(const std::filesystem::path& path);

}  // namespace quicpic
