#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include <json.hpp>

#include "halospan/features.hpp"

namespace halospan {

struct TrainConfig {
  double learning_rate = 1e-4;
  int n_layers = 4;
  int n_heads = 8;
  double dropout = 0.2;
  double weight_decay = 1e-4;
  int d_model = 512;
  int ffn_multiplier = 4;  // feed-forward width = ffn_multiplier * d_model
  int batch_size = 64;
  int max_epochs = 150;
  int patience = 10;
  std::uint64_t seed = 0;
  bool range_check = false;

  bool operator==(const TrainConfig&) const = default;
};

/// Hyperparameter space the tuned detector was searched over.
struct SearchSpace {
  double lr_min = 1e-5, lr_max = 1e-3;
  std::vector<int> layers = {2, 4, 6, 8, 10, 12, 14, 16};
  std::vector<int> heads = {4, 8, 16, 32};
  double dropout_min = 0.1, dropout_max = 0.5;
  double wd_min = 1e-6, wd_max = 1e-2;
  std::vector<int> d_models = {256, 512, 1024};
};

/// Structural checks always; with range_check also the SearchSpace bounds.
/// Throws ConfigError naming the offending field and its bound.
void validate(const TrainConfig& config, const SearchSpace& space = {});

nlohmann::json to_json(const TrainConfig& config);
/// Missing keys keep their current values; unknown keys are rejected.
void update_from_json(TrainConfig& config, const nlohmann::json& j);

}  // namespace halospan
