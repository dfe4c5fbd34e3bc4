#pragma once

#include <string>
#include <vector>

#include "halospan/detector/detector.hpp"
#include "halospan/synth.hpp"

namespace halospan::testing {

inline std::vector<LabeledSample> synth_corpus(const SynthConfig& config, std::size_t first,
                                               std::size_t count,
                                               const FeatureOptions& options = {}) {
  std::vector<LabeledSample> out;
  for (std::size_t k = first; k < first + count; ++k) {
    const SynthSample s = generate_indexed(config, k, "s" + std::to_string(k));
    out.push_back({s.dump.sample_id, build_feature_matrix(s.dump, options).values, s.labels.labels});
  }
  return out;
}

inline SynthConfig small_synth() {
  SynthConfig c;
  c.S = 40;
  c.C = 16;
  c.L = 1;
  c.H = 2;
  return c;
}

inline TrainConfig small_train() {
  TrainConfig c;
  c.d_model = 16;
  c.n_layers = 1;
  c.n_heads = 2;
  c.dropout = 0.1;
  c.learning_rate = 3e-3;
  c.weight_decay = 1e-4;
  c.batch_size = 8;
  c.max_epochs = 25;
  c.patience = 5;
  c.seed = 3;
  return c;
}

}  // namespace halospan::testing
