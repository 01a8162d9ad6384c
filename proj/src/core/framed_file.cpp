#include "pathoscope/core/framed_file.hpp"

#include <cstring>
#include <string>

#include "pathoscope/core/binary_io.hpp"
#include "pathoscope/core/error.hpp"
#include "pathoscope/core/hashing.hpp"

namespace pathoscope {

namespace {
constexpr std::size_t kHeaderSize = 4 + 4 + 8;
}

std::vector<std::uint8_t> frame(const Magic& magic, std::uint32_t version, std::span<const std::uint8_t> body) {
  ByteWriter w;
  for (char c : magic) w.put(static_cast<std::uint8_t>(c));
  w.put(version);
  w.put(static_cast<std::uint64_t>(body.size()));
  w.put_bytes(body);
  w.put(crc32(w.bytes()));
  return std::move(w.bytes());
}

Unframed unframe(const Magic& magic, std::uint32_t max_version, std::span<const std::uint8_t> bytes) {
  if (bytes.size() < 4) throw Error(ErrorCode::TruncatedFile, "file shorter than its magic number");
  if (std::memcmp(bytes.data(), magic.data(), 4) != 0) {
    throw Error(ErrorCode::BadMagic, "expected magic \"" + std::string(magic.data(), 4) + "\"");
  }
  if (bytes.size() < kHeaderSize) throw Error(ErrorCode::TruncatedFile, "file shorter than its header");
  ByteReader r(bytes.subspan(4));
  Unframed out;
  out.version = r.get<std::uint32_t>();
  if (out.version == 0 || out.version > max_version) {
    throw Error(ErrorCode::VersionUnsupported, "format version " + std::to_string(out.version) +
                                                   " (this build reads up to " + std::to_string(max_version) + ")");
  }
  const auto body_len = r.get<std::uint64_t>();
  if (body_len > bytes.size() || bytes.size() - kHeaderSize < body_len + 4) {
    throw Error(ErrorCode::TruncatedFile, "file holds " + std::to_string(bytes.size()) + " bytes, header declares " +
                                              std::to_string(kHeaderSize + body_len + 4));
  }
  const std::size_t covered = kHeaderSize + static_cast<std::size_t>(body_len);
  std::uint32_t stored;
  std::memcpy(&stored, bytes.data() + covered, 4);
  if (crc32(bytes.first(covered)) != stored) throw Error(ErrorCode::ChecksumMismatch, "CRC-32 does not match contents");
  out.body.assign(bytes.begin() + kHeaderSize, bytes.begin() + static_cast<std::ptrdiff_t>(covered));
  return out;
}

}  // namespace pathoscope
