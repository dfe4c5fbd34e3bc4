#include "halospan/container.hpp"

#include <cstring>
#include <istream>
#include <iterator>
#include <string>

#include "halospan/errors.hpp"
#include "halospan/util.hpp"

namespace halospan {

namespace {
constexpr std::size_t kHeaderBytes = 12;

std::string magic_string(const Magic& m) { return std::string(m.data(), m.size()); }
}  // namespace

std::vector<std::byte> encode_envelope(const Magic& magic, std::uint32_t version,
                                       const nlohmann::json& metadata,
                                       std::span<const std::byte> payload) {
  const std::string meta = metadata.dump();
  std::vector<std::byte> out;
  out.reserve(kHeaderBytes + meta.size() + payload.size());
  for (char c : magic) out.push_back(static_cast<std::byte>(c));
  append_u32(out, version);
  append_u32(out, static_cast<std::uint32_t>(meta.size()));
  for (char c : meta) out.push_back(static_cast<std::byte>(c));
  out.insert(out.end(), payload.begin(), payload.end());
  return out;
}

Envelope decode_envelope(std::span<const std::byte> bytes, const Magic& magic) {
  if (bytes.size() < kHeaderBytes) {
    throw FormatError("file too short for a " + magic_string(magic) + " header");
  }
  if (std::memcmp(bytes.data(), magic.data(), magic.size()) != 0) {
    std::string seen(4, '?');
    std::memcpy(seen.data(), bytes.data(), 4);
    throw FormatError("bad magic '" + seen + "', expected '" + magic_string(magic) + "'");
  }
  Envelope env;
  env.version = load_u32(bytes.data() + 4);
  const std::uint32_t meta_len = load_u32(bytes.data() + 8);
  if (bytes.size() - kHeaderBytes < meta_len) {
    throw LengthMismatchError("metadata block truncated", meta_len, bytes.size() - kHeaderBytes);
  }
  const auto* meta_begin = reinterpret_cast<const char*>(bytes.data() + kHeaderBytes);
  try {
    env.metadata = nlohmann::json::parse(meta_begin, meta_begin + meta_len);
  } catch (const nlohmann::json::exception& e) {
    throw FormatError(std::string("malformed metadata JSON: ") + e.what());
  }
  const auto payload = bytes.subspan(kHeaderBytes + meta_len);
  env.payload.assign(payload.begin(), payload.end());
  return env;
}

Envelope read_envelope(std::istream& in, const Magic& magic) {
  std::vector<char> raw((std::istreambuf_iterator<char>(in)), std::istreambuf_iterator<char>());
  if (in.bad()) throw IoError("read failed");
  return decode_envelope(std::as_bytes(std::span(raw.data(), raw.size())), magic);
}

}  // namespace halospan
