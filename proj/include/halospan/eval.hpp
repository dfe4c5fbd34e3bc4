#pragma once

#include <map>
#include <optional>
#include <string>
#include <vector>

#include <json.hpp>

#include "halospan/types.hpp"

namespace halospan {

/// One evaluated sample. Tokens are matched by position within the sample.
struct EvalPair {
  std::string sample_id;
  LabelSequence gold;
  LabelSequence pred;
};

struct PrfCounts {
  std::size_t gold = 0;
  std::size_t pred = 0;
  std::size_t intersection = 0;

  double precision() const;
  double recall() const;
  double f1() const;
};

struct EvalReport {
  double micro_precision = 0.0;
  double micro_recall = 0.0;
  double micro_f1 = 0.0;
  PrfCounts counts;
  std::map<HalluType, double> per_type_recall;       // absent types omitted
  std::map<std::string, double> per_bin_f1;          // empty bins omitted
  std::size_t samples = 0;
};

/// Pools counts over all samples. Throws ShapeError naming the sample on a
/// length mismatch.
PrfCounts token_counts(const std::vector<EvalPair>& pairs);
EvalReport token_prf(const std::vector<EvalPair>& pairs);

std::map<HalluType, double> recall_by_type(const std::vector<EvalPair>& pairs);

/// Micro F1 within each hallucination-ratio bin of the gold sequences.
std::map<std::string, double> f1_by_ratio_bin(const std::vector<EvalPair>& pairs);

/// token_prf + recall_by_type + f1_by_ratio_bin.
EvalReport evaluate(const std::vector<EvalPair>& pairs);

nlohmann::json to_json(const EvalReport& report);
/// Aligned text tables; missing entries render as "-".
std::string to_text(const EvalReport& report);

}  // namespace halospan
