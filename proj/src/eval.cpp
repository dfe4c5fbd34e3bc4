#include "halospan/eval.hpp"

#include <iomanip>
#include <sstream>

#include "halospan/dataset.hpp"
#include "halospan/errors.hpp"

namespace halospan {

double PrfCounts::precision() const {
  return pred == 0 ? 0.0 : static_cast<double>(intersection) / static_cast<double>(pred);
}

double PrfCounts::recall() const {
  return gold == 0 ? 0.0 : static_cast<double>(intersection) / static_cast<double>(gold);
}

double PrfCounts::f1() const {
  const double p = precision();
  const double r = recall();
  return p + r == 0.0 ? 0.0 : 2.0 * p * r / (p + r);
}

PrfCounts token_counts(const std::vector<EvalPair>& pairs) {
  PrfCounts c;
  for (const auto& pair : pairs) {
    if (pair.gold.size() != pair.pred.size()) {
      throw ShapeError("sample '" + pair.sample_id + "': gold has " +
                       std::to_string(pair.gold.size()) + " tokens, prediction has " +
                       std::to_string(pair.pred.size()));
    }
    for (std::size_t t = 0; t < pair.gold.size(); ++t) {
      const bool g = pair.gold.labels[t] == 1;
      const bool p = pair.pred.labels[t] == 1;
      c.gold += g;
      c.pred += p;
      c.intersection += g && p;
    }
  }
  return c;
}

EvalReport token_prf(const std::vector<EvalPair>& pairs) {
  EvalReport r;
  r.counts = token_counts(pairs);
  r.micro_precision = r.counts.precision();
  r.micro_recall = r.counts.recall();
  r.micro_f1 = r.counts.f1();
  r.samples = pairs.size();
  return r;
}

std::map<HalluType, double> recall_by_type(const std::vector<EvalPair>& pairs) {
  std::map<HalluType, std::pair<std::size_t, std::size_t>> tally;  // hit, total
  for (const auto& pair : pairs) {
    if (pair.gold.types.empty()) continue;
    if (pair.gold.size() != pair.pred.size() || pair.gold.types.size() != pair.gold.size()) {
      throw ShapeError("sample '" + pair.sample_id + "': type tags not aligned with labels");
    }
    for (std::size_t t = 0; t < pair.gold.size(); ++t) {
      if (pair.gold.labels[t] != 1 || !pair.gold.types[t]) continue;
      auto& [hit, total] = tally[*pair.gold.types[t]];
      ++total;
      hit += pair.pred.labels[t] == 1;
    }
  }
  std::map<HalluType, double> out;
  for (const auto& [type, ht] : tally) {
    out[type] = static_cast<double>(ht.first) / static_cast<double>(ht.second);
  }
  return out;
}

std::map<std::string, double> f1_by_ratio_bin(const std::vector<EvalPair>& pairs) {
  std::map<std::string, std::vector<EvalPair>> bins;
  for (const auto& pair : pairs) {
    if (auto bin = ratio_bin(pair.gold)) bins[*bin].push_back(pair);
  }
  std::map<std::string, double> out;
  for (const auto& [label, members] : bins) out[label] = token_counts(members).f1();
  return out;
}

EvalReport evaluate(const std::vector<EvalPair>& pairs) {
  EvalReport r = token_prf(pairs);
  r.per_type_recall = recall_by_type(pairs);
  r.per_bin_f1 = f1_by_ratio_bin(pairs);
  return r;
}

nlohmann::json to_json(const EvalReport& r) {
  nlohmann::json j;
  j["micro_precision"] = r.micro_precision;
  j["micro_recall"] = r.micro_recall;
  j["micro_f1"] = r.micro_f1;
  j["samples"] = r.samples;
  j["counts"] = {{"gold", r.counts.gold},
                 {"pred", r.counts.pred},
                 {"intersection", r.counts.intersection}};
  nlohmann::json types = nlohmann::json::object();
  for (const auto& [type, recall] : r.per_type_recall) types[std::string(to_string(type))] = recall;
  j["per_type_recall"] = std::move(types);
  nlohmann::json bins = nlohmann::json::object();
  for (const auto& [label, f1] : r.per_bin_f1) bins[label] = f1;
  j["per_bin_f1"] = std::move(bins);
  return j;
}

namespace {
std::string pct(double v) {
  std::ostringstream os;
  os << std::fixed << std::setprecision(1) << 100.0 * v;
  return os.str();
}
}  // namespace

std::string to_text(const EvalReport& r) {
  std::ostringstream os;
  const int w = 8;
  os << std::left << std::setw(w) << "Prec" << std::setw(w) << "Rec" << std::setw(w) << "F1"
     << "\n"
     << std::setw(w) << pct(r.micro_precision) << std::setw(w) << pct(r.micro_recall)
     << std::setw(w) << pct(r.micro_f1) << "\n\n";

  os << "Recall by hallucination type\n";
  for (HalluType t : kAllHalluTypes) os << std::setw(w) << to_string(t);
  os << "\n";
  for (HalluType t : kAllHalluTypes) {
    auto it = r.per_type_recall.find(t);
    os << std::setw(w) << (it == r.per_type_recall.end() ? std::string("-") : pct(it->second));
  }
  os << "\n\nF1 by hallucination ratio (%)\n";
  for (const auto& label : ratio_bin_labels()) os << std::setw(w) << label;
  os << "\n";
  for (const auto& label : ratio_bin_labels()) {
    auto it = r.per_bin_f1.find(label);
    os << std::setw(w) << (it == r.per_bin_f1.end() ? std::string("-") : pct(it->second));
  }
  os << "\n";
  return os.str();
}

}  // namespace halospan
