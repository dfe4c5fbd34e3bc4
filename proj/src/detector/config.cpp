#include "halospan/detector/config.hpp"

#include <algorithm>
#include <sstream>

#include "halospan/errors.hpp"

namespace halospan {

namespace {

template <typename T>
std::string list(const std::vector<T>& values) {
  std::ostringstream os;
  os << '{';
  for (std::size_t k = 0; k < values.size(); ++k) os << (k ? "," : "") << values[k];
  os << '}';
  return os.str();
}

void check_range(const char* name, double v, double lo, double hi) {
  if (!(v >= lo && v <= hi)) {
    std::ostringstream os;
    os << name << " = " << v << " is outside the tuned search range [" << lo << ", " << hi << "]";
    throw ConfigError(os.str());
  }
}

void check_choice(const char* name, int v, const std::vector<int>& choices) {
  if (std::find(choices.begin(), choices.end(), v) == choices.end()) {
    throw ConfigError(std::string(name) + " = " + std::to_string(v) +
                      " is not in the tuned search set " + list(choices));
  }
}

}  // namespace

void validate(const TrainConfig& c, const SearchSpace& space) {
  if (!(c.learning_rate >= 0.0)) throw ConfigError("learning_rate must be >= 0");
  if (c.n_layers < 1) throw ConfigError("n_layers must be >= 1");
  if (c.n_heads < 1) throw ConfigError("n_heads must be >= 1");
  if (c.d_model < 1 || c.d_model % c.n_heads != 0) {
    throw ConfigError("d_model (" + std::to_string(c.d_model) + ") must be divisible by n_heads (" +
                      std::to_string(c.n_heads) + ")");
  }
  if (!(c.dropout >= 0.0 && c.dropout < 1.0)) throw ConfigError("dropout must be in [0, 1)");
  if (!(c.weight_decay >= 0.0)) throw ConfigError("weight_decay must be >= 0");
  if (c.ffn_multiplier < 1) throw ConfigError("ffn_multiplier must be >= 1");
  if (c.batch_size < 1) throw ConfigError("batch_size must be >= 1");
  if (c.max_epochs < 1) throw ConfigError("max_epochs must be >= 1");
  if (c.patience < 1) throw ConfigError("patience must be >= 1");
  if (!c.range_check) return;
  check_range("learning_rate", c.learning_rate, space.lr_min, space.lr_max);
  check_choice("n_layers", c.n_layers, space.layers);
  check_choice("n_heads", c.n_heads, space.heads);
  check_range("dropout", c.dropout, space.dropout_min, space.dropout_max);
  check_range("weight_decay", c.weight_decay, space.wd_min, space.wd_max);
  check_choice("d_model", c.d_model, space.d_models);
}

nlohmann::json to_json(const TrainConfig& c) {
  return {{"learning_rate", c.learning_rate}, {"n_layers", c.n_layers},
          {"n_heads", c.n_heads},             {"dropout", c.dropout},
          {"weight_decay", c.weight_decay},   {"d_model", c.d_model},
          {"ffn_multiplier", c.ffn_multiplier}, {"batch_size", c.batch_size},
          {"max_epochs", c.max_epochs},       {"patience", c.patience},
          {"seed", c.seed},                   {"range_check", c.range_check}};
}

void update_from_json(TrainConfig& c, const nlohmann::json& j) {
  try {
    for (const auto& [key, value] : j.items()) {
      if (key == "learning_rate") c.learning_rate = value.get<double>();
      else if (key == "n_layers") c.n_layers = value.get<int>();
      else if (key == "n_heads") c.n_heads = value.get<int>();
      else if (key == "dropout") c.dropout = value.get<double>();
      else if (key == "weight_decay") c.weight_decay = value.get<double>();
      else if (key == "d_model") c.d_model = value.get<int>();
      else if (key == "ffn_multiplier") c.ffn_multiplier = value.get<int>();
      else if (key == "batch_size") c.batch_size = value.get<int>();
      else if (key == "max_epochs") c.max_epochs = value.get<int>();
      else if (key == "patience") c.patience = value.get<int>();
      else if (key == "seed") c.seed = value.get<std::uint64_t>();
      else if (key == "range_check") c.range_check = value.get<bool>();
      else throw ConfigError("unknown train option '" + key + "'");
    }
  } catch (const nlohmann::json::exception& e) {
    throw ConfigError(std::string("bad train option: ") + e.what());
  }
}

}  // namespace halospan
