#pragma once

// Shared on-disk envelope for dumps (ASPD), feature caches (ASPF) and model
// files (ASPM):
//
//   offset 0   4 bytes   magic
//   offset 4   u32 LE    version
//   offset 8   u32 LE    metadata length M
//   offset 12  M bytes   UTF-8 JSON metadata (keys sorted, compact)
//   offset 12+M          little-endian tensor payload

#include <array>
#include <cstdint>
#include <iosfwd>
#include <span>
#include <string_view>
#include <vector>

#include <json.hpp>

namespace halospan {

using Magic = std::array<char, 4>;

struct Envelope {
  std::uint32_t version = 0;
  nlohmann::json metadata;
  std::vector<std::byte> payload;
};

std::vector<std::byte> encode_envelope(const Magic& magic, std::uint32_t version,
                                       const nlohmann::json& metadata,
                                       std::span<const std::byte> payload);

/// Parses the envelope header and metadata; the payload is everything after
/// the metadata block. Throws FormatError on bad magic or malformed JSON.
Envelope decode_envelope(std::span<const std::byte> bytes, const Magic& magic);

Envelope read_envelope(std::istream& in, const Magic& magic);

}  // namespace halospan
