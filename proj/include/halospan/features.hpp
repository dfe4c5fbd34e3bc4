#pragma once

// Per-token attention features for one dump:
//
//   mu_j    average incoming attention (row-position scaled)
//   beta_j  incoming attention entropy, normalised by log(T - j + 1)
//   gamma_i outgoing attention entropy over the full row, normalised by log(row length)
//
// Incoming features use only the output-span triangle (rows and columns
// indexed 1..T). Outgoing entropy uses the full row, context included.

#include <cstddef>
#include <span>
#include <string>
#include <vector>

#include <Eigen/Dense>

#include "halospan/attn_io.hpp"

namespace halospan {

using RowMatrix = Eigen::Matrix<double, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;

enum class AttentionMode { Raw, Norm };

/// Which index multiplies row i when compensating for the causal mask.
enum class RowIndex {
  OutputRelative,  // i in 1..T (default)
  Absolute,        // C + i, ablation only
};

std::string_view to_string(AttentionMode mode);
std::string_view to_string(RowIndex index);
AttentionMode parse_attention_mode(std::string_view name);
RowIndex parse_row_index(std::string_view name);

struct FeatureOptions {
  AttentionMode mode = AttentionMode::Raw;
  RowIndex row_index = RowIndex::OutputRelative;
  bool operator==(const FeatureOptions&) const = default;
};

/// Lower-triangular ragged matrix: row r (0-based) has r + 1 entries.
using Triangle = std::vector<std::vector<double>>;

/// Attention for a single (layer, head). rows[r] is the full row of output
/// token r + 1, i.e. C + r + 1 weights covering context and output keys.
struct AttentionView {
  std::size_t C = 0;
  std::size_t S = 0;
  AttentionMode mode = AttentionMode::Raw;
  std::vector<std::vector<double>> rows;
  std::size_t T() const { return S - C; }
};

AttentionView attention_view(const AttentionDump& dump, std::size_t layer, std::size_t head);

/// Entry (i, j) scaled by ||f(x_j)|| for (layer, head). Throws CapabilityError
/// if the dump carries no value norms.
AttentionView apply_norm_adjustment(const AttentionDump& dump, std::size_t layer, std::size_t head);

/// Output-span columns of each output row.
Triangle output_triangle(const AttentionView& view);

/// Multiplies row r by (r + 1 + index_offset). The input is not modified.
Triangle scale_attention(const Triangle& rows, std::size_t index_offset = 0);

std::vector<double> avg_incoming_attention(const Triangle& scaled);

/// Row-normalises within the triangle and sums -k log k down each column.
/// The last column has a single observation and is defined as 0.
std::vector<double> incoming_attention_entropy(const Triangle& scaled);

/// Row-normalised weights used by incoming_attention_entropy (exposed for checks).
Triangle incoming_kappa(const Triangle& scaled);

/// Normalised Shannon entropy of every full row, after renormalising the
/// row to sum to one.
std::vector<double> outgoing_attention_entropy(const AttentionView& view);

/// -sum p log p / log(n); 0 for n <= 1. Zero entries contribute 0.
double normalised_entropy(std::span<const double> distribution);

struct FeatureMatrix {
  RowMatrix values;  // T x 3LH
  std::size_t L = 0;
  std::size_t H = 0;
  FeatureOptions options;

  std::size_t rows() const { return static_cast<std::size_t>(values.rows()); }
  std::size_t width() const { return static_cast<std::size_t>(values.cols()); }

  // Column layout: [mu block | beta block | gamma block], each (layer, head) ordered.
  std::size_t mu_column(std::size_t l, std::size_t h) const { return l * H + h; }
  std::size_t beta_column(std::size_t l, std::size_t h) const { return L * H + l * H + h; }
  std::size_t gamma_column(std::size_t l, std::size_t h) const { return 2 * L * H + l * H + h; }
};

FeatureMatrix build_feature_matrix(const AttentionDump& dump, const FeatureOptions& options = {});

// ASPF cache: same envelope as ASPD, payload T x 3LH f32 row-major.
std::vector<std::byte> encode_features(const FeatureMatrix& fm, const std::string& sample_id);
FeatureMatrix decode_features(std::span<const std::byte> bytes, std::string* sample_id = nullptr);
void save_features(const FeatureMatrix& fm, const std::string& sample_id, const std::string& path);
FeatureMatrix load_features(const std::string& path, std::string* sample_id = nullptr);

}  // namespace halospan
