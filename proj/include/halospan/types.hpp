#pragma once

#include <array>
#include <optional>
#include <string>
#include <string_view>
#include <vector>

namespace halospan {

enum class Task { QA, Data2Text, Summarisation, Other };

/// RAGTruth hallucination categories: subtle/evident baseless information and
/// subtle/evident conflict.
enum class HalluType { SInfo, EInfo, SConf, EConf };

inline constexpr std::array<HalluType, 4> kAllHalluTypes = {HalluType::SInfo, HalluType::EInfo,
                                                            HalluType::SConf, HalluType::EConf};

std::string_view to_string(Task task);
std::string_view to_string(HalluType type);
/// Throws ValidationError on unknown names.
Task parse_task(std::string_view name);
HalluType parse_hallu_type(std::string_view name);

/// Character span into an output string, [start, end) in code points.
struct CharSpan {
  std::size_t start = 0;
  std::size_t end = 0;
  HalluType type = HalluType::SInfo;
  bool operator==(const CharSpan&) const = default;
};

struct TokenInfo {
  std::string text;
  std::size_t char_start = 0;
  std::size_t char_end = 0;
  bool operator==(const TokenInfo&) const = default;
};

/// Binary per-token labels (1 = hallucinated) with optional per-token type.
struct LabelSequence {
  std::vector<int> labels;
  std::vector<std::optional<HalluType>> types;  // empty, or same size as labels
  std::size_t size() const { return labels.size(); }
  bool operator==(const LabelSequence&) const = default;
};

}  // namespace halospan
