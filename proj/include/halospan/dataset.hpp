#pragma once

#include <cstdint>
#include <filesystem>
#include <optional>
#include <string_view>
#include <span>
#include <string>
#include <vector>

#include "halospan/attn_io.hpp"
#include "halospan/types.hpp"

namespace halospan {

struct AnnotatedSample {
  std::string sample_id;
  Task task = Task::Other;
  std::string output_text;
  std::vector<CharSpan> spans;
  std::string source_llm;
  std::string source_id;
  std::string split;  // official partition: "train" or "test"
};

/// Sorts spans and merges overlapping spans of the same type. Touching spans
/// ([a,b) and [b,c)) are kept apart.
std::vector<CharSpan> merge_spans(std::vector<CharSpan> spans);

/// A token is hallucinated iff [char_start, char_end) shares at least one
/// character with a span. Its type is that of the earliest-starting
/// overlapping span. Throws AnnotationError for spans beyond text_length.
LabelSequence char_spans_to_token_labels(std::span<const CharSpan> spans, std::size_t text_length,
                                         std::span<const TokenInfo> tokens);
LabelSequence char_spans_to_token_labels(const AnnotatedSample& sample,
                                         std::span<const TokenInfo> tokens);

/// Gold labels from the dump's own spans; all zeros if it carries none.
LabelSequence labels_from_dump(const AttentionDump& dump);

/// Maximal runs of label-1 tokens converted back to character spans.
std::vector<CharSpan> labels_to_char_spans(const LabelSequence& labels,
                                           std::span<const TokenInfo> tokens);

/// Concatenated token texts with each run of hallucinated tokens wrapped in
/// "[[" and "]]". Literal '[', ']' and '\\' in token text are backslash-escaped.
std::string render_bracketed(std::span<const TokenInfo> tokens, const LabelSequence& labels);

/// Inverse of render_bracketed for the same tokens. Exact when every token
/// has non-empty text; an empty token next to a run boundary may land on
/// either side. Throws ValidationError if the rendering does not spell out the
/// token texts.
LabelSequence parse_bracketed(std::string_view rendering, std::span<const TokenInfo> tokens);

/// Parses one RAGTruth response record. `task` comes from source_info when known.
AnnotatedSample parse_ragtruth_record(const std::string& json_line, std::optional<Task> task);

/// Reads response.jsonl and, optionally, source_info.jsonl for task types.
std::vector<AnnotatedSample> load_ragtruth(const std::string& response_path,
                                           const std::string& source_info_path = {});

struct Splits {
  std::vector<AnnotatedSample> train;
  std::vector<AnnotatedSample> valid;
  std::vector<AnnotatedSample> test;
};

/// Holds out every sample of `valid_source_ids` source IDs drawn uniformly
/// from the official train partition. Throws ConfigError when the train
/// partition has fewer distinct IDs.
Splits make_splits(const std::vector<AnnotatedSample>& samples, std::uint64_t seed,
                   std::size_t valid_source_ids = 75);

/// Fraction of hallucinated tokens; 0 for an empty sequence.
double hallucination_ratio(const LabelSequence& seq);

/// Ratio bin label for a sample: "0-2", "2-4", "4-6", "6-8" (percent,
/// left-open/right-closed) or "8+". std::nullopt for ratio 0.
std::optional<std::string> ratio_bin(const LabelSequence& seq);
inline const std::vector<std::string>& ratio_bin_labels() {
  static const std::vector<std::string> labels = {"0-2", "2-4", "4-6", "6-8", "8+"};
  return labels;
}

// Manifest: one JSON object per line with keys sample_id, split, task,
// dump, labels, features. Paths are relative to the manifest's directory.
struct ManifestEntry {
  std::string sample_id;
  std::string split;
  std::string task = "Other";
  std::string dump;
  std::string labels;
  std::string features;
};

struct Manifest {
  std::filesystem::path base_dir;
  std::vector<ManifestEntry> entries;

  std::filesystem::path resolve(const std::string& relative) const;
  std::vector<const ManifestEntry*> split(const std::string& name) const;
};

Manifest read_manifest(const std::string& path);
/// Entries are written in sample_id order.
void write_manifest(const Manifest& manifest, const std::string& path);
/// Re-expresses every path of `m` relative to `new_base`.
Manifest rebase_manifest(const Manifest& m, const std::filesystem::path& new_base);

// Label file: {"sample_id", "labels": [0|1...], "types": [null|"EConf"...], "rendering"?}
struct LabelFile {
  std::string sample_id;
  LabelSequence labels;
  std::optional<std::string> rendering;
};

void write_label_file(const LabelFile& file, const std::string& path);
LabelFile read_label_file(const std::string& path);

}  // namespace halospan
