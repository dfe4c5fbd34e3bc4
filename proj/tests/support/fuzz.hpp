#pragma once

// Random valid dumps for property tests.

#include <random>
#include <string>

#include "halospan/attn_io.hpp"

namespace halospan::testing {

struct DumpShape {
  std::size_t S = 6, C = 2, L = 1, H = 1;
  bool norms = true;
};

/// Rows are normalised exponential draws; a fraction of entries is zeroed.
inline AttentionDump random_dump(const DumpShape& shape, std::mt19937_64& rng,
                                 double zero_fraction = 0.1) {
  AttentionDump d = make_empty_dump("fuzz", shape.S, shape.C, shape.L, shape.H, shape.norms);
  std::exponential_distribution<double> expo(1.0);
  std::bernoulli_distribution drop(zero_fraction);
  for (std::size_t l = 0; l < shape.L; ++l)
    for (std::size_t h = 0; h < shape.H; ++h)
      for (std::size_t i = shape.C + 1; i <= shape.S; ++i) {
        auto row = d.row(l, h, i);
        std::vector<double> w(row.size());
        double total = 0.0;
        for (auto& x : w) {
          x = drop(rng) ? 0.0 : expo(rng);
          total += x;
        }
        if (total == 0.0) {
          w.back() = 1.0;
          total = 1.0;
        }
        for (std::size_t j = 0; j < row.size(); ++j) row[j] = static_cast<float>(w[j] / total);
      }
  std::lognormal_distribution<double> ln(0.0, 0.5);
  for (auto& v : d.value_norms) v = static_cast<float>(ln(rng));
  for (std::size_t t = 0; t < d.T(); ++t) {
    d.tokens[t] = {" w" + std::to_string(t), 3 * t, 3 * t + 3};
  }
  return d;
}

inline DumpShape random_shape(std::mt19937_64& rng, std::size_t max_T, std::size_t max_lh) {
  auto pick = [&](std::size_t lo, std::size_t hi) {
    return std::uniform_int_distribution<std::size_t>(lo, hi)(rng);
  };
  DumpShape s;
  s.C = pick(1, 8);
  s.S = s.C + pick(1, max_T);
  s.L = pick(1, 4);
  s.H = pick(1, std::max<std::size_t>(1, max_lh / s.L));
  return s;
}

}  // namespace halospan::testing
