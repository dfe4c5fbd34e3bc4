#pragma once

// Attention-dump container (ASPD) shared with the extractor.
//
// Only output-span query rows are stored, but each row covers every key
// position j <= i, including the prompt/context. Rows for one (layer, head)
// are contiguous; blocks are ordered layer-major, then head.

#include <cstdint>
#include <iosfwd>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include "halospan/types.hpp"

namespace halospan {

enum class Precision { F32, F16 };

struct AttentionDump {
  std::string sample_id;
  Task task = Task::Other;
  std::size_t S = 0;  // full sequence length
  std::size_t C = 0;  // prompt + context tokens; output is rows C+1..S (1-based)
  std::size_t L = 0;
  std::size_t H = 0;
  Precision precision = Precision::F32;

  /// Ragged rows, (layer, head, row, column) order; row for absolute query
  /// position i holds i weights.
  std::vector<float> attention;
  /// Per (layer, head, token) norm of the value-then-output transform, or empty.
  std::vector<float> value_norms;

  std::vector<TokenInfo> tokens;                 // one per output token
  std::optional<std::vector<CharSpan>> gold_spans;
  std::optional<std::string> output_text;

  std::size_t T() const { return S - C; }
  bool has_value_norms() const { return !value_norms.empty(); }

  /// Weights stored per (layer, head) block.
  std::size_t block_size() const { return (S * (S + 1) - C * (C + 1)) / 2; }

  /// Row of absolute query position `abs_row` (C < abs_row <= S) for (layer, head), 0-based l/h.
  std::span<const float> row(std::size_t layer, std::size_t head, std::size_t abs_row) const;
  std::span<float> row(std::size_t layer, std::size_t head, std::size_t abs_row);

  /// Norms of tokens 1..S for (layer, head).
  std::span<const float> norms(std::size_t layer, std::size_t head) const;

  bool operator==(const AttentionDump&) const = default;
};

/// Creates a dump with correctly sized zero tensors.
AttentionDump make_empty_dump(std::string sample_id, std::size_t S, std::size_t C, std::size_t L,
                              std::size_t H, bool with_norms);

struct Violation {
  std::string field;
  std::string where;  // indices, e.g. "(l=0,h=1,i=5)"
  double observed = 0.0;
  std::string message;
};

/// Row-sum tolerance for the given storage precision (1e-5 f32, 1e-3 f16).
double default_tolerance(Precision precision);

/// Reports every invariant violation; never throws.
std::vector<Violation> validate_dump(const AttentionDump& dump, double tolerance);
std::vector<Violation> validate_dump(const AttentionDump& dump);

std::string describe(const Violation& v);

/// Exact payload size in bytes implied by the shape.
std::size_t payload_bytes(std::size_t S, std::size_t C, std::size_t L, std::size_t H,
                          Precision precision, bool with_norms);

std::vector<std::byte> encode_dump(const AttentionDump& dump);
AttentionDump decode_dump(std::span<const std::byte> bytes);

/// Returns the number of bytes written. Throws ValidationError naming the
/// first violated field, IoError on sink failure.
std::size_t write_dump(const AttentionDump& dump, std::ostream& out);
AttentionDump read_dump(std::istream& in);

void save_dump(const AttentionDump& dump, const std::string& path);
AttentionDump load_dump(const std::string& path);

}  // namespace halospan
