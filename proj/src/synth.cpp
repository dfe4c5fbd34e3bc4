#include "halospan/synth.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>
#include <random>

#include "halospan/dataset.hpp"
#include "halospan/errors.hpp"
#include "halospan/features.hpp"
#include "halospan/util.hpp"

namespace halospan {

void validate(const SynthConfig& c) {
  if (c.C < 1 || c.S <= c.C) throw ConfigError("synth: need 1 <= C < S");
  if (c.L < 1 || c.H < 1) throw ConfigError("synth: need L >= 1 and H >= 1");
  auto in_unit = [](double v) { return v >= 0.0 && v <= 1.0; };
  if (!in_unit(c.hallucination_rate)) throw ConfigError("synth: hallucination_rate outside [0, 1]");
  if (!in_unit(c.irregularity.incoming_bias)) throw ConfigError("synth: incoming_bias outside [0, 1]");
  if (!in_unit(c.irregularity.entropy_drop)) throw ConfigError("synth: entropy_drop outside [0, 1]");
  if (c.concentration <= 0.0) throw ConfigError("synth: concentration must be > 0");
  if (c.norm_sigma < 0.0) throw ConfigError("synth: norm_sigma must be >= 0");
  if (c.max_spans < 1) throw ConfigError("synth: max_spans must be >= 1");
  const std::size_t T = c.S - c.C;
  if (c.hallucination_rate > 0.0 && T == 1) {
    throw ConfigError("synth: a positive hallucination_rate needs more than one output token");
  }
}

namespace {

using Rng = std::mt19937_64;

std::vector<int> plant_spans(const SynthConfig& c, Rng& rng) {
  const std::size_t T = c.S - c.C;
  std::vector<int> labels(T, 0);
  if (c.hallucination_rate == 0.0) return labels;
  std::size_t n_h = static_cast<std::size_t>(std::llround(c.hallucination_rate * static_cast<double>(T)));
  n_h = std::clamp<std::size_t>(n_h, 1, T - 1);
  const std::size_t free = T - n_h;
  std::size_t k = std::min({c.max_spans, n_h, free + 1});

  // Span lengths: random composition of n_h into k positive parts.
  std::vector<std::size_t> lengths(k, 1);
  for (std::size_t r = k; r < n_h; ++r) {
    lengths[std::uniform_int_distribution<std::size_t>(0, k - 1)(rng)]++;
  }
  // Gaps: k + 1 parts summing to `free`, internal gaps >= 1 so spans never touch.
  std::vector<std::size_t> gaps(k + 1, 0);
  for (std::size_t g = 1; g < k; ++g) gaps[g] = 1;
  for (std::size_t r = k - 1; r < free; ++r) {
    gaps[std::uniform_int_distribution<std::size_t>(0, k)(rng)]++;
  }
  std::size_t pos = 0;
  for (std::size_t s = 0; s < k; ++s) {
    pos += gaps[s];
    for (std::size_t t = 0; t < lengths[s]; ++t) labels[pos + t] = 1;
    pos += lengths[s];
  }
  return labels;
}

std::vector<double> dirichlet(std::size_t n, double concentration, Rng& rng) {
  std::gamma_distribution<double> gamma(concentration, 1.0);
  std::vector<double> p(n);
  double total = 0.0;
  for (auto& v : p) total += (v = gamma(rng));
  for (auto& v : p) v /= total;
  return p;
}

double entropy_of(const std::vector<double>& p) { return normalised_entropy(p); }

// Moves mass inside [begin, end) so that its total is `target_total` again.
void rescale_block(std::vector<double>& row, std::size_t begin, std::size_t end, double target_total) {
  double total = 0.0;
  for (std::size_t j = begin; j < end; ++j) total += row[j];
  if (total <= 0.0) return;
  for (std::size_t j = begin; j < end; ++j) row[j] *= target_total / total;
}

// Mixes the row toward a two-point distribution (one context key, one
// generated key) with the same context/generated split, choosing the mixing
// weight by bisection so normalised entropy falls by `drop`.
// Targets are drawn even when drop is 0 so the random stream does not depend
// on the irregularity strength.
void sharpen(std::vector<double>& row, std::size_t C, double drop, Rng& rng) {
  const std::size_t n = row.size();
  double ctx_mass = 0.0;
  for (std::size_t j = 0; j < C; ++j) ctx_mass += row[j];
  const double new_mass = 1.0 - ctx_mass;
  std::vector<double> spike(n, 0.0);
  spike[std::uniform_int_distribution<std::size_t>(0, C - 1)(rng)] = ctx_mass;
  spike[std::uniform_int_distribution<std::size_t>(C, n - 1)(rng)] += new_mass;
  if (drop <= 0.0) return;

  const std::vector<double> base = row;
  const double target = entropy_of(base) - drop;
  auto mix = [&](double lambda) {
    std::vector<double> m(n);
    for (std::size_t j = 0; j < n; ++j) m[j] = (1.0 - lambda) * base[j] + lambda * spike[j];
    return m;
  };
  double lo = 0.0;
  double hi = 1.0;
  if (entropy_of(mix(1.0)) >= target) {
    row = mix(1.0);
    return;
  }
  for (int it = 0; it < 60; ++it) {
    const double mid = 0.5 * (lo + hi);
    if (entropy_of(mix(mid)) > target) {
      lo = mid;
    } else {
      hi = mid;
    }
  }
  row = mix(hi);
}

}  // namespace

SynthSample generate(const SynthConfig& c, const std::string& sample_id) {
  validate(c);
  Rng rng(c.seed);
  const std::size_t T = c.S - c.C;
  SynthSample out;
  out.labels.labels = plant_spans(c, rng);

  AttentionDump d = make_empty_dump(sample_id, c.S, c.C, c.L, c.H, /*with_norms=*/true);
  d.task = Task::Other;

  // Tokens: pseudo-words separated by spaces; offsets in characters.
  std::string text;
  std::uniform_int_distribution<int> word(0, 999);
  for (std::size_t t = 0; t < T; ++t) {
    std::string tok = (t == 0 ? "w" : " w") + std::to_string(word(rng));
    d.tokens[t] = {tok, text.size(), text.size() + tok.size()};
    text += tok;
  }
  d.output_text = text;

  // Gold spans with a random type each; label types follow.
  std::uniform_int_distribution<std::size_t> type_pick(0, kAllHalluTypes.size() - 1);
  std::vector<CharSpan> spans;
  for (std::size_t t = 0; t < T; ++t) {
    if (out.labels.labels[t] != 1) continue;
    if (t > 0 && out.labels.labels[t - 1] == 1) {
      spans.back().end = d.tokens[t].char_end;
    } else {
      spans.push_back({d.tokens[t].char_start, d.tokens[t].char_end, kAllHalluTypes[type_pick(rng)]});
    }
  }
  d.gold_spans = spans;
  out.labels = labels_from_dump(d);

  const auto& planted = out.labels.labels;
  std::lognormal_distribution<double> norm_dist(0.0, c.norm_sigma);
  for (std::size_t l = 0; l < c.L; ++l) {
    for (std::size_t h = 0; h < c.H; ++h) {
      for (std::size_t r = 0; r < T; ++r) {
        const std::size_t n = c.C + r + 1;
        std::vector<double> row = dirichlet(n, c.concentration, rng);

        double new_mass = 0.0;
        for (std::size_t j = c.C; j < n; ++j) new_mass += row[j];
        bool suppressed = false;
        for (std::size_t m = 0; m <= r; ++m) {
          if (planted[m] == 1) {
            row[c.C + m] *= 1.0 - c.irregularity.incoming_bias;
            suppressed = true;
          }
        }
        if (suppressed) rescale_block(row, c.C, n, new_mass);
        if (planted[r] == 1) sharpen(row, c.C, c.irregularity.entropy_drop, rng);

        auto dst = d.row(l, h, c.C + r + 1);
        for (std::size_t j = 0; j < n; ++j) dst[j] = static_cast<float>(row[j]);
      }
      for (std::size_t j = 0; j < c.S; ++j) {
        d.value_norms[(l * c.H + h) * c.S + j] = static_cast<float>(norm_dist(rng));
      }
    }
  }
  out.dump = std::move(d);
  return out;
}

SynthSample generate_indexed(const SynthConfig& config, std::size_t index,
                             const std::string& sample_id) {
  SynthConfig c = config;
  c.seed = mix_seed(config.seed, index);
  return generate(c, sample_id);
}

nlohmann::json to_json(const SynthConfig& c) {
  return {{"S", c.S},
          {"C", c.C},
          {"L", c.L},
          {"H", c.H},
          {"hallucination_rate", c.hallucination_rate},
          {"incoming_bias", c.irregularity.incoming_bias},
          {"entropy_drop", c.irregularity.entropy_drop},
          {"concentration", c.concentration},
          {"norm_sigma", c.norm_sigma},
          {"max_spans", c.max_spans},
          {"seed", c.seed}};
}

void update_from_json(SynthConfig& c, const nlohmann::json& j) {
  for (const auto& [key, value] : j.items()) {
    if (key == "S") c.S = value.get<std::size_t>();
    else if (key == "C") c.C = value.get<std::size_t>();
    else if (key == "L") c.L = value.get<std::size_t>();
    else if (key == "H") c.H = value.get<std::size_t>();
    else if (key == "hallucination_rate") c.hallucination_rate = value.get<double>();
    else if (key == "incoming_bias") c.irregularity.incoming_bias = value.get<double>();
    else if (key == "entropy_drop") c.irregularity.entropy_drop = value.get<double>();
    else if (key == "concentration") c.concentration = value.get<double>();
    else if (key == "norm_sigma") c.norm_sigma = value.get<double>();
    else if (key == "max_spans") c.max_spans = value.get<std::size_t>();
    else if (key == "seed") c.seed = value.get<std::uint64_t>();
    else throw ConfigError("unknown synth option '" + key + "'");
  }
}

}  // namespace halospan
