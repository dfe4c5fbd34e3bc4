#pragma once

#include <cstddef>
#include <cstdint>
#include <functional>
#include <span>
#include <string>
#include <string_view>
#include <vector>

namespace halospan {

// IEEE-754 binary16 conversion, round-to-nearest-even.
std::uint16_t float_to_half(float value);
float half_to_float(std::uint16_t bits);

/// 64-bit FNV-1a.
std::uint64_t fnv1a64(std::span<const std::byte> bytes, std::uint64_t seed = 0xcbf29ce484222325ULL);
std::uint64_t fnv1a64(std::string_view text, std::uint64_t seed = 0xcbf29ce484222325ULL);
std::string hex64(std::uint64_t value);

/// SplitMix64 step; used to derive independent per-sample seeds.
std::uint64_t mix_seed(std::uint64_t seed, std::uint64_t stream);

// Little-endian append/read helpers for tensor payloads.
void append_u32(std::vector<std::byte>& out, std::uint32_t value);
void append_f32(std::vector<std::byte>& out, float value);
void append_f16(std::vector<std::byte>& out, float value);
std::uint32_t load_u32(const std::byte* p);
float load_f32(const std::byte* p);
float load_f16(const std::byte* p);

// Offsets into UTF-8 text are counted in code points.
std::size_t utf8_length(std::string_view text);
/// Byte offset of every code-point boundary (size = utf8_length + 1).
std::vector<std::size_t> utf8_boundaries(std::string_view text);

/// Worker count: HALOSPAN_THREADS if set and positive, else hardware concurrency.
unsigned thread_count();

/// Runs fn(i) for i in [0, n) on up to thread_count() workers. Work items
/// must write to disjoint outputs; the first exception thrown is rethrown.
void parallel_for(std::size_t n, const std::function<void(std::size_t)>& fn);

std::vector<std::byte> read_file_bytes(const std::string& path);
void write_file_bytes(const std::string& path, std::span<const std::byte> bytes);

}  // namespace halospan
