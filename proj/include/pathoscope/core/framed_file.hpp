#pragma once

#include <array>
#include <cstdint>
#include <filesystem>
#include <span>
#include <vector>

namespace pathoscope {

// Shared container for the versioned binary artifacts:
//
//   magic[4] | u32 version | u64 body_length | body | u32 crc32(magic..body)
//
// All integers little-endian. Readers see TruncatedFile when fewer bytes than
// declared are present, ChecksumMismatch on a CRC failure, BadMagic and
// VersionUnsupported as named.
using Magic = std::array<char, 4>;

std::vector<std::uint8_t> frame(const Magic& magic, std::uint32_t version, std::span<const std::uint8_t> body);

struct Unframed {
  std::uint32_t version = 0;
  std::vector<std::uint8_t> body;
};

Unframed unframe(const Magic& magic, std::uint32_t max_version, std::span<const std::uint8_t> bytes);

}  // namespace pathoscope
