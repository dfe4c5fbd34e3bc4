#pragma once

// Synthetic attention dumps with planted hallucination spans.
//
// Clean rows are near-uniform symmetric-Dirichlet draws. For planted tokens:
//   - every later row attends less to them (incoming suppression), and
//   - their own rows are sharpened toward one context and one generated key
//     (outgoing entropy drop).
// Both edits keep each row's total context mass and total generated mass
// unchanged, so the lookback ratio carries no planted signal.

#include <cstdint>
#include <vector>

#include <json.hpp>

#include "halospan/attn_io.hpp"

namespace halospan {

struct Irregularity {
  double incoming_bias = 0.5;  // fraction of attention removed from planted columns
  double entropy_drop = 0.5;   // target drop of normalised outgoing entropy
};

struct SynthConfig {
  std::size_t S = 96;
  std::size_t C = 48;
  std::size_t L = 2;
  std::size_t H = 4;
  double hallucination_rate = 0.15;
  Irregularity irregularity;
  double concentration = 50.0;  // symmetric Dirichlet parameter for clean rows
  double norm_sigma = 0.5;      // log-normal value-norm spread
  std::size_t max_spans = 2;
  std::uint64_t seed = 7;
};

/// Throws ConfigError for infeasible configurations.
void validate(const SynthConfig& config);

struct SynthSample {
  AttentionDump dump;
  LabelSequence labels;
};

SynthSample generate(const SynthConfig& config, const std::string& sample_id = "synth");

/// Sample k of a corpus: config with seed mixed by k.
SynthSample generate_indexed(const SynthConfig& config, std::size_t index,
                             const std::string& sample_id);

nlohmann::json to_json(const SynthConfig& config);
/// Missing keys keep their current values; unknown keys are rejected.
void update_from_json(SynthConfig& config, const nlohmann::json& j);

}  // namespace halospan
