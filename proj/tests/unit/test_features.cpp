#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <cmath>
#include <random>

#include "halospan/errors.hpp"
#include "halospan/features.hpp"
#include "support/fuzz.hpp"
#include "support/oracles.hpp"

using namespace halospan;

namespace {

Triangle random_triangle(std::size_t T, std::mt19937_64& rng) {
  std::uniform_real_distribution<double> u(0.0, 1.0);
  Triangle t(T);
  for (std::size_t r = 0; r < T; ++r) {
    t[r].resize(r + 1);
    for (double& x : t[r]) x = u(rng);
  }
  return t;
}

// S=3, C=1: output rows [[1.0], [0.5, 0.5]] with no context mass.
AttentionDump toy_dump() {
  AttentionDump d = make_empty_dump("toy", 3, 1, 1, 1, true);
  d.row(0, 0, 2)[1] = 1.0f;
  d.row(0, 0, 3)[1] = 0.5f;
  d.row(0, 0, 3)[2] = 0.5f;
  d.tokens = {{"a", 0, 1}, {"b", 1, 2}};
  return d;
}

}  // namespace

TEST_CASE("scale_attention multiplies each row by its position") {
  const Triangle in = {{1.0}, {0.5, 0.5}};
  const Triangle out = scale_attention(in);
  CHECK(out == Triangle{{1.0}, {1.0, 1.0}});
  CHECK(in == Triangle{{1.0}, {0.5, 0.5}});
  CHECK(scale_attention(in, 3) == Triangle{{4.0}, {2.5, 2.5}});

  std::mt19937_64 rng(1);
  const Triangle r = random_triangle(5, rng);
  const Triangle s = scale_attention(r);
  for (std::size_t i = 0; i < 5; ++i)
    for (std::size_t j = 0; j <= i; ++j) CHECK(s[i][j] == r[i][j] * static_cast<double>(i + 1));
}

TEST_CASE("avg_incoming_attention") {
  CHECK(avg_incoming_attention({{1.0}, {1.0, 1.0}}) == std::vector<double>{1.0, 1.0});
  CHECK(avg_incoming_attention({{0.7}}) == std::vector<double>{0.7});

  std::mt19937_64 rng(2);
  const Triangle t = random_triangle(6, rng);
  const auto mu = avg_incoming_attention(t);
  for (std::size_t j = 0; j < 6; ++j) {
    double sum = 0.0;
    for (std::size_t i = j; i < 6; ++i) sum += t[i][j];
    CHECK(std::abs(mu[j] - sum / static_cast<double>(6 - j)) <= 1e-12);
  }
}

TEST_CASE("incoming_attention_entropy hand example") {
  const auto beta = incoming_attention_entropy(scale_attention({{1.0}, {0.5, 0.5}}));
  CHECK(beta[0] == doctest::Approx(0.5).epsilon(1e-14));
  CHECK(beta[1] == 0.0);
}

TEST_CASE("incoming entropy on uniform output rows follows the column formula") {
  // Row i uniform over its i output columns: kappa_ij = 1/i, so
  // beta_j = sum_{i>=j} log(i)/i / log(T-j+1).
  for (std::size_t T : {2u, 3u, 5u, 9u}) {
    Triangle rows(T);
    for (std::size_t r = 0; r < T; ++r) rows[r].assign(r + 1, 1.0 / static_cast<double>(r + 1));
    const auto beta = incoming_attention_entropy(scale_attention(rows));
    for (std::size_t j = 1; j < T; ++j) {
      double expect = 0.0;
      for (std::size_t i = j; i <= T; ++i) expect += std::log(double(i)) / double(i);
      expect /= std::log(double(T - j + 1));
      CHECK(std::abs(beta[j - 1] - expect) <= 1e-12);
    }
    CHECK(beta[T - 1] == 0.0);
  }
}

TEST_CASE("incoming entropy is not clamped above one") {
  // T=3 uniform rows: beta_2 = (log2/2 + log3/3) / log2 ~ 1.028.
  const Triangle rows = {{1.0}, {0.5, 0.5}, {1.0 / 3, 1.0 / 3, 1.0 / 3}};
  const auto beta = incoming_attention_entropy(scale_attention(rows));
  CHECK(beta[1] == doctest::Approx((std::log(2.0) / 2 + std::log(3.0) / 3) / std::log(2.0)));
  CHECK(beta[1] > 1.0);
}

TEST_CASE("kappa equals row-normalised raw attention") {
  std::mt19937_64 rng(4);
  for (int trial = 0; trial < 50; ++trial) {
    const Triangle raw = random_triangle(1 + trial % 9, rng);
    const Triangle kappa = incoming_kappa(scale_attention(raw));
    for (std::size_t i = 0; i < raw.size(); ++i) {
      double total = 0.0;
      for (double x : raw[i]) total += x;
      for (std::size_t j = 0; j <= i; ++j) CHECK(std::abs(kappa[i][j] - raw[i][j] / total) <= 1e-12);
    }
  }
  CHECK(incoming_kappa({{0.0}, {0.0, 0.0}}) == Triangle{{0.0}, {0.0, 0.0}});
}

TEST_CASE("normalised entropy") {
  const std::vector<double> half = {0.5, 0.5};
  CHECK(normalised_entropy(half) == doctest::Approx(1.0).epsilon(1e-15));
  const std::vector<double> one_hot = {0.0, 0.0, 0.0, 1.0};
  CHECK(normalised_entropy(one_hot) == 0.0);
  const std::vector<double> single = {1.0};
  CHECK(normalised_entropy(single) == 0.0);

  std::mt19937_64 rng(5);
  std::uniform_real_distribution<double> u(0.0, 1.0);
  std::vector<double> row(7);
  double total = 0.0;
  for (double& x : row) total += (x = u(rng));
  for (double& x : row) x /= total;
  double h = 0.0;
  for (double x : row) h -= x * std::log(x);
  CHECK(std::abs(normalised_entropy(row) - h / std::log(7.0)) <= 1e-12);
}

TEST_CASE("outgoing entropy uses full rows and absolute length") {
  const AttentionDump d = toy_dump();
  const auto g = outgoing_attention_entropy(attention_view(d, 0, 0));
  CHECK(g[0] == 0.0);
  CHECK(g[1] == doctest::Approx(std::log(2.0) / std::log(3.0)).epsilon(1e-14));
}

TEST_CASE("norm adjustment") {
  AttentionDump d = make_empty_dump("n", 3, 2, 1, 1, true);
  auto row = d.row(0, 0, 3);
  row[0] = 0.3f;
  row[1] = 0.3f;
  row[2] = 0.4f;
  d.tokens = {{"x", 0, 1}};
  const AttentionView unit = apply_norm_adjustment(d, 0, 0);
  CHECK(unit.rows == attention_view(d, 0, 0).rows);

  d.value_norms = {2.0f, 0.0f, 1.0f};
  const AttentionView v = apply_norm_adjustment(d, 0, 0);
  CHECK(v.mode == AttentionMode::Norm);
  CHECK(v.rows[0][0] == doctest::Approx(0.6));
  CHECK(v.rows[0][1] == 0.0);
  CHECK(v.rows[0][2] == doctest::Approx(0.4));

  std::mt19937_64 rng(6);
  const AttentionDump r = testing::random_dump({4, 1, 1, 1, true}, rng);
  const AttentionView rv = apply_norm_adjustment(r, 0, 0);
  for (std::size_t i = 2; i <= 4; ++i)
    for (std::size_t j = 1; j <= i; ++j)
      CHECK(rv.rows[i - 2][j - 1] == testing::weight(r, 0, 0, i, j, true));

  d.value_norms.clear();
  CHECK_THROWS_AS(apply_norm_adjustment(d, 0, 0), CapabilityError);
  CHECK_THROWS_AS(build_feature_matrix(d, {AttentionMode::Norm}), CapabilityError);
}

TEST_CASE("toy feature matrix composes the single-op results") {
  const FeatureMatrix fm = build_feature_matrix(toy_dump());
  REQUIRE(fm.width() == 3);
  CHECK(fm.values(0, 0) == doctest::Approx(1.0));
  CHECK(fm.values(1, 0) == doctest::Approx(1.0));
  CHECK(fm.values(0, 1) == doctest::Approx(0.5));
  CHECK(fm.values(1, 1) == 0.0);
  CHECK(fm.values(0, 2) == 0.0);
  CHECK(fm.values(1, 2) == doctest::Approx(std::log(2.0) / std::log(3.0)));
}

TEST_CASE("width is 3LH") {
  std::mt19937_64 rng(7);
  const FeatureMatrix fm = build_feature_matrix(testing::random_dump({10, 4, 2, 3, true}, rng));
  CHECK(fm.width() == 18);
  CHECK(fm.rows() == 6);
  CHECK(fm.beta_column(1, 2) == 11);
  CHECK(fm.gamma_column(0, 0) == 12);
}

TEST_CASE("features match the brute-force oracle") {
  std::mt19937_64 rng(8);
  for (int trial = 0; trial < 60; ++trial) {
    const auto shape = testing::random_shape(rng, 16, 8);
    const AttentionDump d = testing::random_dump(shape, rng, 0.2);
    for (const bool norm : {false, true}) {
      for (const bool absolute : {false, true}) {
        FeatureOptions opt{norm ? AttentionMode::Norm : AttentionMode::Raw,
                           absolute ? RowIndex::Absolute : RowIndex::OutputRelative};
        const FeatureMatrix fm = build_feature_matrix(d, opt);
        for (std::size_t l = 0; l < d.L; ++l)
          for (std::size_t h = 0; h < d.H; ++h) {
            const auto o = testing::oracle_features(d, l, h, norm, absolute);
            for (std::size_t t = 0; t < d.T(); ++t) {
              const auto r = static_cast<Eigen::Index>(t);
              CHECK(std::abs(fm.values(r, fm.mu_column(l, h)) - o.mu[t]) <= 1e-10);
              CHECK(std::abs(fm.values(r, fm.beta_column(l, h)) - o.beta[t]) <= 1e-10);
              CHECK(std::abs(fm.values(r, fm.gamma_column(l, h)) - o.gamma[t]) <= 1e-10);
            }
          }
      }
    }
  }
}

TEST_CASE("swapping two heads swaps their feature columns") {
  std::mt19937_64 rng(9);
  const AttentionDump d = testing::random_dump({11, 3, 2, 3, true}, rng);
  AttentionDump p = d;
  const std::size_t block = d.block_size();
  auto swap_block = [&](std::vector<float>& v, std::size_t size, std::size_t a, std::size_t b) {
    std::swap_ranges(v.begin() + static_cast<long>(a * size), v.begin() + static_cast<long>((a + 1) * size),
                     v.begin() + static_cast<long>(b * size));
  };
  swap_block(p.attention, block, 1 * 3 + 0, 1 * 3 + 2);
  swap_block(p.value_norms, d.S, 1 * 3 + 0, 1 * 3 + 2);
  for (const auto mode : {AttentionMode::Raw, AttentionMode::Norm}) {
    const FeatureMatrix a = build_feature_matrix(d, {mode});
    const FeatureMatrix b = build_feature_matrix(p, {mode});
    for (std::size_t l = 0; l < 2; ++l)
      for (std::size_t h = 0; h < 3; ++h) {
        const std::size_t src = (l == 1 && h == 0) ? 2 : (l == 1 && h == 2) ? 0 : h;
        CHECK(a.values.col(a.mu_column(l, src)) == b.values.col(b.mu_column(l, h)));
        CHECK(a.values.col(a.beta_column(l, src)) == b.values.col(b.beta_column(l, h)));
        CHECK(a.values.col(a.gamma_column(l, src)) == b.values.col(b.gamma_column(l, h)));
      }
  }
}

TEST_CASE("unit norms make norm mode equal raw mode") {
  std::mt19937_64 rng(10);
  AttentionDump d = testing::random_dump({14, 5, 2, 2, true}, rng);
  std::fill(d.value_norms.begin(), d.value_norms.end(), 1.0f);
  const auto raw = build_feature_matrix(d, {AttentionMode::Raw});
  const auto norm = build_feature_matrix(d, {AttentionMode::Norm});
  CHECK((raw.values - norm.values).cwiseAbs().maxCoeff() <= 1e-9);
}

TEST_CASE("repeat runs are bit-identical") {
  std::mt19937_64 rng(11);
  const AttentionDump d = testing::random_dump({20, 6, 2, 2, true}, rng);
  CHECK(build_feature_matrix(d).values == build_feature_matrix(d).values);
}

TEST_CASE("feature cache round trip") {
  std::mt19937_64 rng(12);
  const AttentionDump d = testing::random_dump({9, 2, 1, 2, true}, rng);
  const FeatureMatrix fm = build_feature_matrix(d, {AttentionMode::Norm});
  const auto bytes = encode_features(fm, "abc");
  CHECK(std::string(reinterpret_cast<const char*>(bytes.data()), 4) == "ASPF");
  std::string id;
  const FeatureMatrix back = decode_features(bytes, &id);
  CHECK(id == "abc");
  CHECK(back.L == 1);
  CHECK(back.H == 2);
  CHECK(back.options == fm.options);
  CHECK((back.values - fm.values).cwiseAbs().maxCoeff() <= 1e-6);
  CHECK(encode_features(back, "abc") == bytes);

  auto cut = bytes;
  cut.resize(cut.size() - 4);
  CHECK_THROWS_AS(decode_features(cut), LengthMismatchError);
}

TEST_CASE("non-finite attention is an internal error naming the position") {
  AttentionDump d = toy_dump();
  d.row(0, 0, 3)[1] = std::nanf("");
  try {
    build_feature_matrix(d);
    FAIL("expected an internal error");
  } catch (const InternalError& e) {
    CHECK(std::string(e.what()).find("l=0,h=0") != std::string::npos);
  }
}
