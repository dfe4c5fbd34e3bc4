#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <algorithm>
#include <cmath>
#include <numeric>

#include "halospan/attn_io.hpp"
#include "halospan/errors.hpp"
#include "halospan/eval.hpp"
#include "halospan/synth.hpp"
#include "support/oracles.hpp"

using namespace halospan;

namespace {

// Per output token: outgoing entropy averaged over heads, from the oracle.
std::vector<double> mean_gamma(const AttentionDump& d) {
  std::vector<double> out(d.T(), 0.0);
  for (std::size_t l = 0; l < d.L; ++l)
    for (std::size_t h = 0; h < d.H; ++h) {
      const auto f = testing::oracle_features(d, l, h, false);
      for (std::size_t t = 0; t < d.T(); ++t) out[t] += f.gamma[t] / static_cast<double>(d.L * d.H);
    }
  return out;
}

double context_mass(std::span<const float> row, std::size_t C) {
  return std::accumulate(row.begin(), row.begin() + static_cast<long>(C), 0.0);
}

}  // namespace

TEST_CASE("zero rate gives clean near-uniform rows") {
  SynthConfig c;
  c.hallucination_rate = 0.0;
  for (std::size_t k = 0; k < 5; ++k) {
    const SynthSample s = generate_indexed(c, k, "z");
    CHECK(std::all_of(s.labels.labels.begin(), s.labels.labels.end(), [](int v) { return v == 0; }));
    const auto g = mean_gamma(s.dump);
    CHECK(std::accumulate(g.begin(), g.end(), 0.0) / static_cast<double>(g.size()) >= 0.9);
  }
}

TEST_CASE("planted tokens have lower outgoing entropy") {
  const SynthConfig c;
  double planted = 0.0, clean = 0.0;
  std::size_t n_planted = 0, n_clean = 0;
  for (std::size_t k = 0; k < 20; ++k) {
    const SynthSample s = generate_indexed(c, k, "p");
    const auto g = mean_gamma(s.dump);
    for (std::size_t t = 0; t < g.size(); ++t) {
      if (s.labels.labels[t] == 1) {
        planted += g[t];
        ++n_planted;
      } else {
        clean += g[t];
        ++n_clean;
      }
    }
  }
  REQUIRE(n_planted > 0);
  const double gap = clean / double(n_clean) - planted / double(n_planted);
  MESSAGE("mean gamma gap " << gap);
  CHECK(gap >= 0.3);
  const double rate = double(n_planted) / double(n_planted + n_clean);
  CHECK(rate == doctest::Approx(c.hallucination_rate).epsilon(0.5));
}

TEST_CASE("generation is deterministic and valid") {
  const SynthConfig c;
  const SynthSample a = generate(c, "x");
  const SynthSample b = generate(c, "x");
  CHECK(encode_dump(a.dump) == encode_dump(b.dump));
  CHECK(a.labels == b.labels);
  SynthConfig other = c;
  other.seed = 8;
  CHECK(encode_dump(generate(other, "x").dump) != encode_dump(a.dump));

  for (std::size_t k = 0; k < 30; ++k) {
    SynthConfig v;
    v.S = 10 + 7 * k;
    v.C = 1 + 3 * k;
    v.L = 1 + k % 3;
    v.H = 1 + k % 4;
    v.hallucination_rate = 0.05 * double(k % 6);
    v.irregularity.incoming_bias = 0.1 * double(k % 10);
    v.irregularity.entropy_drop = 0.08 * double(k % 10);
    const SynthSample s = generate_indexed(v, k, "v" + std::to_string(k));
    const auto violations = validate_dump(s.dump, default_tolerance(Precision::F32));
    CHECK_MESSAGE(violations.empty(), (violations.empty() ? "" : describe(violations[0])));
    CHECK(s.labels.size() == s.dump.T());
    CHECK(std::all_of(s.dump.value_norms.begin(), s.dump.value_norms.end(), [](float x) { return x > 0; }));
  }
}

TEST_CASE("planted edits keep context and generated mass per row") {
  const SynthConfig planted;
  SynthConfig clean = planted;
  clean.irregularity = {0.0, 0.0};
  for (std::size_t k = 0; k < 5; ++k) {
    const SynthSample a = generate_indexed(planted, k, "m");
    const SynthSample b = generate_indexed(clean, k, "m");
    REQUIRE(a.labels == b.labels);
    for (std::size_t l = 0; l < a.dump.L; ++l)
      for (std::size_t h = 0; h < a.dump.H; ++h)
        for (std::size_t i = a.dump.C + 1; i <= a.dump.S; ++i) {
          CHECK(std::abs(context_mass(a.dump.row(l, h, i), a.dump.C) -
                         context_mass(b.dump.row(l, h, i), b.dump.C)) <= 1e-5);
        }
  }
}

TEST_CASE("a threshold on mean outgoing entropy separates the classes") {
  const SynthConfig c;
  std::vector<std::pair<double, int>> fit, held;
  for (std::size_t k = 0; k < 40; ++k) {
    const SynthSample s = generate_indexed(c, k, "t");
    const auto g = mean_gamma(s.dump);
    for (std::size_t t = 0; t < g.size(); ++t) (k < 20 ? fit : held).push_back({g[t], s.labels.labels[t]});
  }
  auto f1_at = [](const std::vector<std::pair<double, int>>& data, double cut) {
    EvalPair p{"all", {}, {}};
    for (const auto& [g, y] : data) {
      p.gold.labels.push_back(y);
      p.pred.labels.push_back(g < cut ? 1 : 0);
    }
    return token_prf({p}).micro_f1;
  };
  double best_cut = 0.0, best = -1.0;
  for (double cut = 0.0; cut <= 1.0; cut += 0.005) {
    const double f = f1_at(fit, cut);
    if (f > best) {
      best = f;
      best_cut = cut;
    }
  }
  const double f1 = f1_at(held, best_cut);
  MESSAGE("held-out threshold F1 " << f1 << " at " << best_cut);
  CHECK(f1 >= 0.8);
}

TEST_CASE("infeasible configurations") {
  SynthConfig c;
  c.S = c.C + 1;
  CHECK_THROWS_AS(validate(c), ConfigError);
  c.hallucination_rate = 0.0;
  CHECK_NOTHROW(validate(c));
  c = SynthConfig{};
  c.hallucination_rate = 1.5;
  CHECK_THROWS_AS(validate(c), ConfigError);
  c = SynthConfig{};
  c.C = 0;
  CHECK_THROWS_AS(generate(c), ConfigError);
  c = SynthConfig{};
  c.irregularity.incoming_bias = -0.1;
  CHECK_THROWS_AS(validate(c), ConfigError);
}

TEST_CASE("config json round trip") {
  SynthConfig c;
  c.S = 50;
  c.irregularity.entropy_drop = 0.3;
  SynthConfig back;
  update_from_json(back, to_json(c));
  CHECK(to_json(back) == to_json(c));
  CHECK_THROWS_AS(update_from_json(back, nlohmann::json{{"bogus", 1}}), ConfigError);
}
