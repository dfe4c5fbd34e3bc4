#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <cmath>
#include <limits>
#include <cstring>
#include <random>

#include "halospan/detector/detector.hpp"
#include "halospan/errors.hpp"
#include "support/corpus.hpp"

using namespace halospan;

namespace {

RowMatrix random_matrix(Eigen::Index rows, Eigen::Index cols, std::mt19937_64& rng) {
  std::normal_distribution<double> n(2.0, 3.0);
  RowMatrix m(rows, cols);
  for (Eigen::Index r = 0; r < rows; ++r)
    for (Eigen::Index c = 0; c < cols; ++c) m(r, c) = n(rng);
  return m;
}

const std::vector<LabeledSample>& train_set() {
  static const auto s = testing::synth_corpus(testing::small_synth(), 0, 40);
  return s;
}
const std::vector<LabeledSample>& valid_set() {
  static const auto s = testing::synth_corpus(testing::small_synth(), 40, 12);
  return s;
}

}  // namespace

TEST_CASE("standardiser examples") {
  RowMatrix a(2, 2);
  a << 3.0, -1.0, 3.0, 1.0;
  const RowMatrix* mats[] = {&a};
  const Standardiser s = fit_standardiser(mats);
  CHECK(s.mean(0) == 3.0);
  CHECK(s.std(0) == kStdFloor);
  CHECK(s.mean(1) == 0.0);
  CHECK(s.std(1) == 1.0);
  const RowMatrix z = s.apply(a);
  CHECK(z(0, 0) == 0.0);
  CHECK(z(1, 0) == 0.0);
  CHECK(z(0, 1) == -1.0);
  CHECK(z(1, 1) == 1.0);
}

TEST_CASE("standardised columns have zero mean and unit variance") {
  std::mt19937_64 rng(1);
  const RowMatrix a = random_matrix(30, 5, rng), b = random_matrix(17, 5, rng);
  const RowMatrix* mats[] = {&a, &b};
  const Standardiser s = fit_standardiser(mats);
  RowMatrix all(47, 5);
  all << s.apply(a), s.apply(b);
  for (Eigen::Index c = 0; c < 5; ++c) {
    const double mean = all.col(c).mean();
    const double var = (all.col(c).array() - mean).square().mean();
    CHECK(std::abs(mean) <= 1e-9);
    CHECK(std::abs(std::sqrt(var) - 1.0) <= 1e-9);
    // monotone per column
    for (Eigen::Index r = 1; r < 30; ++r) {
      CHECK((a(r, c) < a(r - 1, c)) == (s.apply(a)(r, c) < s.apply(a)(r - 1, c)));
    }
  }
}

TEST_CASE("standardiser errors") {
  CHECK_THROWS_AS(fit_standardiser(std::span<const RowMatrix* const>{}), ConfigError);
  const RowMatrix one = RowMatrix::Ones(1, 3);
  const RowMatrix* single[] = {&one};
  CHECK_THROWS_AS(fit_standardiser(single), ConfigError);
  Standardiser unfitted;
  CHECK_THROWS_AS(unfitted.apply(one), StateError);
  const RowMatrix two = RowMatrix::Ones(2, 3);
  const RowMatrix* ok[] = {&two};
  CHECK_THROWS_AS(fit_standardiser(ok).apply(RowMatrix::Ones(2, 4)), ShapeError);
}

TEST_CASE("config range checking") {
  TrainConfig c;
  CHECK_NOTHROW(validate(c));
  c.range_check = true;
  CHECK_NOTHROW(validate(c));
  c.learning_rate = 1e-2;
  try {
    validate(c);
    FAIL("expected rejection");
  } catch (const ConfigError& e) {
    const std::string msg = e.what();
    CHECK(msg.find("learning_rate") != std::string::npos);
    CHECK(msg.find("1e-05") != std::string::npos);
    CHECK(msg.find("0.001") != std::string::npos);
  }
  c = TrainConfig{};
  c.range_check = true;
  c.n_layers = 3;
  CHECK_THROWS_AS(validate(c), ConfigError);
  c.n_layers = 4;
  c.d_model = 128;
  CHECK_THROWS_AS(validate(c), ConfigError);

  TrainConfig structural;
  structural.d_model = 30;
  structural.n_heads = 4;
  CHECK_THROWS_AS(validate(structural), ConfigError);
}

TEST_CASE("config json round trip rejects unknown keys") {
  TrainConfig c = testing::small_train();
  TrainConfig back;
  update_from_json(back, to_json(c));
  CHECK(back == c);
  CHECK_THROWS_AS(update_from_json(back, nlohmann::json{{"lr", 1.0}}), ConfigError);
}

TEST_CASE("forward shapes and evaluation determinism") {
  std::mt19937_64 rng(2);
  DetectorModel m(testing::small_train(), {}, 6);
  m.params = m.network.initial_parameters(1);
  const RowMatrix x = random_matrix(4, 6, rng);
  const RowMatrix* mats[] = {&x};
  m.standardiser = fit_standardiser(mats);

  const RowMatrix one = forward(m, x.topRows(1));
  CHECK(one.rows() == 1);
  CHECK(one.cols() == 2);
  CHECK(one.allFinite());
  CHECK(forward(m, x) == forward(m, x));
  CHECK(predict(m, x).labels.size() == 4);
  CHECK(predict(m, x) == predict(m, x));
  CHECK_THROWS_AS(forward(m, RowMatrix::Zero(3, 5)), ShapeError);

  const auto& w = m.network.layout().find("emission.weight");
  std::fill_n(m.params.begin() + static_cast<long>(w.offset), w.size(), 0.0);
  const RowMatrix e = forward(m, RowMatrix::Zero(3, 6));
  for (Eigen::Index t = 0; t < 3; ++t) CHECK(e(t, 0) == e(t, 1));

  DetectorModel unfitted(testing::small_train(), {}, 6);
  CHECK_THROWS_AS(predict(unfitted, x), StateError);
}

TEST_CASE("training learns the synthetic task and is deterministic") {
  const TrainConfig c = testing::small_train();
  std::vector<EpochLog> seen;
  const TrainResult a = train(train_set(), valid_set(), c, {}, [&](const EpochLog& e) { seen.push_back(e); });
  CHECK(seen.size() == a.log.size());
  CHECK(a.best_f1 >= 0.9);
  CHECK(a.log[static_cast<std::size_t>(a.best_epoch - 1)].f1 == a.best_f1);
  CHECK(a.log.size() <= static_cast<std::size_t>(a.best_epoch + c.patience));
  CHECK(evaluate_model(a.model, valid_set()).micro_f1 == doctest::Approx(a.best_f1));
  for (double p : a.model.params) CHECK(static_cast<double>(static_cast<float>(p)) == p);

  const TrainResult b = train(train_set(), valid_set(), c);
  CHECK(a.model.params == b.model.params);
  CHECK(encode_model(a.model) == encode_model(b.model));
}

TEST_CASE("flat validation F1 stops after patience epochs") {
  std::vector<LabeledSample> valid = valid_set();
  for (auto& s : valid) std::fill(s.labels.begin(), s.labels.end(), 0);
  TrainConfig c = testing::small_train();
  c.patience = 3;
  const TrainResult r = train(train_set(), valid, c);
  CHECK(r.best_epoch == 1);
  CHECK(r.log.size() == 4);
}

TEST_CASE("training errors") {
  const TrainConfig c = testing::small_train();
  CHECK_THROWS_AS(train(train_set(), {}, c), ConfigError);
  CHECK_THROWS_AS(train({}, valid_set(), c), ConfigError);

  std::vector<LabeledSample> bad = train_set();
  bad[5].features(2, 1) = std::numeric_limits<double>::quiet_NaN();
  try {
    train(bad, valid_set(), c);
    FAIL("expected divergence");
  } catch (const DivergenceError& e) {
    CHECK(e.epoch() == 1);
    CHECK(std::string(e.what()).find("epoch 1") != std::string::npos);
  }

  std::vector<LabeledSample> ragged = train_set();
  ragged[0].labels.pop_back();
  CHECK_THROWS_AS(train(ragged, valid_set(), c), ShapeError);
}

TEST_CASE("model file round trip and corruption") {
  TrainConfig c = testing::small_train();
  c.max_epochs = 2;
  const TrainResult r = train(train_set(), valid_set(), c, {AttentionMode::Raw, RowIndex::Absolute});
  const auto bytes = encode_model(r.model);
  CHECK(std::string(reinterpret_cast<const char*>(bytes.data()), 4) == "ASPM");
  const DetectorModel back = decode_model(bytes);
  CHECK(back.config == r.model.config);
  CHECK(back.feature_options == r.model.feature_options);
  CHECK(back.params == r.model.params);
  for (const auto& s : valid_set()) CHECK(predict(back, s.features) == predict(r.model, s.features));
  CHECK(encode_model(back) == bytes);

  auto cut = bytes;
  cut.resize(cut.size() - 4);
  CHECK_THROWS_AS(decode_model(cut), LengthMismatchError);

  auto flipped = bytes;
  flipped.back() ^= std::byte{0x40};
  CHECK_THROWS_AS(decode_model(flipped), IntegrityError);

  // Rewrite the metadata with a different width but the old hash.
  const std::uint32_t meta_len = static_cast<std::uint32_t>(bytes[8]) |
                                 static_cast<std::uint32_t>(bytes[9]) << 8 |
                                 static_cast<std::uint32_t>(bytes[10]) << 16 |
                                 static_cast<std::uint32_t>(bytes[11]) << 24;
  std::string meta(reinterpret_cast<const char*>(bytes.data()) + 12, meta_len);
  const auto pos = meta.find("\"d_model\":16");
  REQUIRE(pos != std::string::npos);
  meta.replace(pos, 12, "\"d_model\":32");
  auto tampered = bytes;
  std::memcpy(tampered.data() + 12, meta.data(), meta.size());
  CHECK_THROWS_AS(decode_model(tampered), IntegrityError);

  auto future = bytes;
  future[4] = std::byte{2};
  try {
    decode_model(future);
    FAIL("expected version error");
  } catch (const VersionError& e) {
    CHECK(std::string(e.what()).find("upgrade") != std::string::npos);
  }
}

TEST_CASE("random search picks the best trial from the space") {
  SearchSpace space;
  space.lr_min = 1e-3;
  space.lr_max = 5e-3;
  space.layers = {1};
  space.heads = {2};
  space.dropout_min = 0.0;
  space.dropout_max = 0.2;
  space.wd_min = 0.0;
  space.wd_max = 1e-3;
  space.d_models = {8, 16};
  TrainConfig base = testing::small_train();
  base.max_epochs = 3;
  const SearchResult r = random_search(train_set(), valid_set(), base, 3, 11, space);
  REQUIRE(r.trials.size() == 3);
  double best = -1.0;
  for (const auto& [cfg, f1] : r.trials) {
    CHECK(cfg.learning_rate >= 1e-3);
    CHECK(cfg.learning_rate <= 5e-3);
    CHECK(cfg.n_layers == 1);
    best = std::max(best, f1);
  }
  CHECK(r.best.best_f1 == best);
  CHECK(r.best.model.config == r.best_config);
}
