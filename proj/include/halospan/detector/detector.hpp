#pragma once

#include <cstdint>
#include <functional>
#include <span>
#include <string>
#include <vector>

#include "halospan/detector/config.hpp"
#include "halospan/detector/network.hpp"
#include "halospan/detector/standardiser.hpp"
#include "halospan/eval.hpp"
#include "halospan/features.hpp"

namespace halospan {

/// Features plus gold labels of one training/evaluation sample.
struct LabeledSample {
  std::string sample_id;
  RowMatrix features;
  std::vector<int> labels;
};

struct DetectorModel {
  TrainConfig config;
  FeatureOptions feature_options;
  Standardiser standardiser;
  Network network;
  std::vector<double> params;

  DetectorModel(TrainConfig config, FeatureOptions options, std::size_t input_width);

  std::size_t input_width() const { return network.architecture().input_width; }
};

/// Emission scores after standardisation. Throws StateError if the
/// standardiser is unfitted, ShapeError on a width mismatch.
RowMatrix forward(const DetectorModel& model, const RowMatrix& features, bool train_mode = false,
                  std::mt19937_64* dropout_rng = nullptr);

/// standardise -> forward (eval) -> Viterbi.
LabelSequence predict(const DetectorModel& model, const RowMatrix& features);

/// Rounds every stored value to the nearest f32 so the model is exactly
/// representable in the model file.
void snap_to_f32(DetectorModel& model);

struct EpochLog {
  int epoch = 0;
  double loss = 0.0;
  double precision = 0.0;
  double recall = 0.0;
  double f1 = 0.0;
  double wall_seconds = 0.0;
};

struct TrainResult {
  DetectorModel model;
  std::vector<EpochLog> log;
  int best_epoch = 0;
  double best_f1 = 0.0;
};

using EpochCallback = std::function<void(const EpochLog&)>;

/// Minimises mean per-sample CRF NLL with AdamW over shuffled mini-batches,
/// keeps the parameters with the best validation token F1 and stops after
/// `patience` epochs without improvement. Deterministic for a fixed seed,
/// independent of HALOSPAN_THREADS.
TrainResult train(const std::vector<LabeledSample>& train_set,
                  const std::vector<LabeledSample>& valid_set, const TrainConfig& config,
                  const FeatureOptions& feature_options = {}, const EpochCallback& on_epoch = {});

/// Token-level report of `model` on labelled samples.
EvalReport evaluate_model(const DetectorModel& model, const std::vector<LabeledSample>& samples);

struct SearchResult {
  TrainConfig best_config;
  TrainResult best;
  std::vector<std::pair<TrainConfig, double>> trials;  // config, best validation F1
};

/// Random search drawing each hyperparameter uniformly from `space`; the
/// remaining fields come from `base`.
SearchResult random_search(const std::vector<LabeledSample>& train_set,
                           const std::vector<LabeledSample>& valid_set, const TrainConfig& base,
                           int trials, std::uint64_t seed, const SearchSpace& space = {},
                           const FeatureOptions& feature_options = {});

// Model file (ASPM envelope): metadata holds the config, its hash, the
// parameter count and a payload checksum; the payload is f32
// [mean(F), std(F), params(N)] in layout order.
std::vector<std::byte> encode_model(const DetectorModel& model);
DetectorModel decode_model(std::span<const std::byte> bytes);
void save_model(const DetectorModel& model, const std::string& path);
DetectorModel load_model(const std::string& path);

}  // namespace halospan
