#pragma once

// Command-line front end. `run` never throws: library errors become exit
// codes (0 ok, 1 validation/configuration, 2 runtime) and a message on `err`.
// Progress and the resolved config are logged to `err` as JSON lines.

#include <cstdint>
#include <iosfwd>
#include <string>
#include <vector>

#include <json.hpp>

#include "halospan/detector/config.hpp"
#include "halospan/features.hpp"
#include "halospan/synth.hpp"

namespace halospan::cli {

/// Everything a command may read from the config file. Flags override it.
struct RunConfig {
  FeatureOptions features;
  TrainConfig train;
  SynthConfig synth;
  std::string method = "detector";  // or "lookback"
  int search_trials = 0;
  std::uint64_t search_seed = 0;
  double lookback_l2 = 1e-3;
  std::size_t synth_train = 200;
  std::size_t synth_valid = 50;
  std::size_t synth_test = 50;
};

nlohmann::json to_json(const RunConfig& config);
/// Missing keys keep their current values; unknown keys are rejected.
void update_from_json(RunConfig& config, const nlohmann::json& j);

int run(int argc, const char* const* argv, std::ostream& out, std::ostream& err);
/// args excludes the program name.
int run(const std::vector<std::string>& args, std::ostream& out, std::ostream& err);

}  // namespace halospan::cli
