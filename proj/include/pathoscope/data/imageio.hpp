#pragma once

#include <cstdint>
#include <filesystem>
#include <span>
#include <vector>

#include "pathoscope/data/image.hpp"

namespace pathoscope::data {

/// Decodes PNG or JPEG (detected by signature) to RGB.
Image read_image(const std::filesystem::path& path);
Image decode_image(std::span<const std::uint8_t> bytes);

/// 8-bit RGB PNG; channel values are rounded and clamped to 0..255.
std::vector<std::uint8_t> encode_png(const Image& image);
void write_png(const std::filesystem::path& path, const Image& image);

}  // namespace pathoscope::data
