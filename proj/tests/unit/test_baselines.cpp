#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <cmath>
#include <random>

#include "halospan/baselines.hpp"
#include "halospan/errors.hpp"
#include "support/fuzz.hpp"

using namespace halospan;

namespace {

AttentionDump single_row(std::vector<float> row, std::size_t C) {
  AttentionDump d = make_empty_dump("r", row.size(), C, 1, 1, false);
  auto r = d.row(0, 0, row.size());
  std::copy(row.begin(), row.end(), r.begin());
  // earlier output rows: uniform
  for (std::size_t i = C + 1; i < row.size(); ++i) {
    auto e = d.row(0, 0, i);
    for (auto& x : e) x = 1.0f / static_cast<float>(i);
  }
  return d;
}

// Non-separable two-feature data with a known direction.
void noisy_data(RowMatrix& X, std::vector<int>& y, std::size_t n, std::mt19937_64& rng) {
  std::normal_distribution<double> g(0.0, 1.0);
  X.resize(static_cast<Eigen::Index>(n), 2);
  y.resize(n);
  for (std::size_t k = 0; k < n; ++k) {
    const auto r = static_cast<Eigen::Index>(k);
    X(r, 0) = g(rng);
    X(r, 1) = g(rng);
    y[k] = (X(r, 0) - 0.5 * X(r, 1) + g(rng) > 0.3) ? 1 : 0;
  }
}

}  // namespace

TEST_CASE("lookback ratio examples") {
  const RowMatrix ctx = lookback_ratio(single_row({0.5f, 0.5f, 0.0f, 0.0f}, 2));
  CHECK(ctx(1, 0) == 1.0);
  const RowMatrix gen = lookback_ratio(single_row({0.0f, 0.0f, 0.5f, 0.5f}, 2));
  CHECK(gen(1, 0) == 0.0);
  const RowMatrix ex = lookback_ratio(single_row({0.2f, 0.2f, 0.6f}, 2));
  CHECK(ex(0, 0) == doctest::Approx(0.25));
}

TEST_CASE("lookback ratio matches the mean-ratio oracle and ignores row scale") {
  std::mt19937_64 rng(1);
  for (int trial = 0; trial < 40; ++trial) {
    const auto shape = testing::random_shape(rng, 10, 6);
    AttentionDump d = testing::random_dump(shape, rng, 0.2);
    const RowMatrix r = lookback_ratio(d);
    REQUIRE(r.rows() == static_cast<Eigen::Index>(d.T()));
    REQUIRE(r.cols() == static_cast<Eigen::Index>(d.L * d.H));
    for (std::size_t l = 0; l < d.L; ++l)
      for (std::size_t h = 0; h < d.H; ++h)
        for (std::size_t i = d.C + 1; i <= d.S; ++i) {
          const auto row = d.row(l, h, i);
          double ctx = 0.0, gen = 0.0;
          for (std::size_t j = 0; j < d.C; ++j) ctx += row[j];
          for (std::size_t j = d.C; j < i; ++j) gen += row[j];
          ctx /= static_cast<double>(d.C);
          gen /= static_cast<double>(i - d.C);
          const double expect = ctx + gen > 0 ? ctx / (ctx + gen) : 1.0;
          const double got = r(static_cast<Eigen::Index>(i - d.C - 1), static_cast<Eigen::Index>(l * d.H + h));
          CHECK(std::abs(got - expect) <= 1e-12);
          CHECK(got >= 0.0);
          CHECK(got <= 1.0);
        }
    AttentionDump scaled = d;
    for (auto& x : scaled.attention) x *= 4.0f;
    CHECK((lookback_ratio(scaled) - r).cwiseAbs().maxCoeff() <= 1e-12);
  }
}

TEST_CASE("separable data is fit perfectly") {
  RowMatrix X(6, 1);
  X << -3, -2, -1, 1, 2, 3;
  const std::vector<int> y = {0, 0, 0, 1, 1, 1};
  const LogRegFit fit = train_logreg(X, y, 0.1);
  CHECK(predict_logreg(fit.model, X).labels == y);
  CHECK(fit.grad_norm <= 1e-6);
}

TEST_CASE("all-zero features recover the class prior") {
  const RowMatrix X = RowMatrix::Zero(10, 3);
  const std::vector<int> y = {1, 1, 1, 0, 0, 0, 0, 0, 0, 0};
  const LogRegFit fit = train_logreg(X, y, 0.0);
  CHECK(fit.model.weights.cwiseAbs().maxCoeff() <= 1e-9);
  // gradient tolerance 1e-6 over curvature p(1-p) = 0.21 bounds the error
  CHECK(std::abs(fit.model.bias - std::log(0.3 / 0.7)) <= 1e-5);
}

TEST_CASE("duplicating the data leaves the unregularised fit unchanged") {
  std::mt19937_64 rng(2);
  RowMatrix X;
  std::vector<int> y;
  noisy_data(X, y, 80, rng);
  RowMatrix X2(160, 2);
  X2 << X, X;
  std::vector<int> y2 = y;
  y2.insert(y2.end(), y.begin(), y.end());
  const LogRegFit a = train_logreg(X, y, 0.0);
  const LogRegFit b = train_logreg(X2, y2, 0.0);
  CHECK((a.model.weights - b.model.weights).cwiseAbs().maxCoeff() <= 1e-6);
  CHECK(std::abs(a.model.bias - b.model.bias) <= 1e-6);
}

TEST_CASE("objective decreases monotonically") {
  std::mt19937_64 rng(3);
  for (int trial = 0; trial < 10; ++trial) {
    RowMatrix X;
    std::vector<int> y;
    noisy_data(X, y, 50 + 10 * static_cast<std::size_t>(trial), rng);
    X *= 1.0 + trial;  // poorly scaled fixtures too
    const LogRegFit fit = train_logreg(X, y, 1e-3 * trial);
    for (std::size_t k = 1; k < fit.loss_history.size(); ++k) {
      CHECK(fit.loss_history[k] <= fit.loss_history[k - 1]);
    }
  }
}

TEST_CASE("logistic regression errors") {
  const RowMatrix X = RowMatrix::Ones(4, 2);
  CHECK_THROWS_AS(train_logreg(X, std::vector<int>{1, 1, 1, 1}, 0.1), ValidationError);
  std::mt19937_64 rng(4);
  RowMatrix Xn;
  std::vector<int> y;
  noisy_data(Xn, y, 40, rng);
  try {
    train_logreg(Xn, y, 0.0, 1, 1e-12);
    FAIL("expected convergence error");
  } catch (const ConvergenceError& e) {
    CHECK(e.grad_norm() > 1e-12);
  }
}

TEST_CASE("threshold rule") {
  LogRegModel zero{Eigen::VectorXd::Zero(2), 0.0};
  CHECK(predict_logreg(zero, RowMatrix::Ones(1, 2)).labels == std::vector<int>{1});
  LogRegModel neg{Eigen::VectorXd::Constant(2, -50.0), 0.0};
  CHECK(predict_logreg(neg, RowMatrix::Ones(1, 2)).labels == std::vector<int>{0});

  std::mt19937_64 rng(5);
  std::normal_distribution<double> g(0.0, 2.0);
  for (int trial = 0; trial < 50; ++trial) {
    LogRegModel m{Eigen::VectorXd(3), g(rng)};
    for (int k = 0; k < 3; ++k) m.weights(k) = g(rng);
    RowMatrix X(10, 3);
    for (Eigen::Index r = 0; r < 10; ++r)
      for (Eigen::Index c = 0; c < 3; ++c) X(r, c) = g(rng);
    const auto labels = predict_logreg(m, X).labels;
    const auto probs = logreg_probability(m, X);
    for (Eigen::Index r = 0; r < 10; ++r) {
      const double z = X.row(r).dot(m.weights) + m.bias;
      const double p = 1.0 / (1.0 + std::exp(-z));
      CHECK(probs[static_cast<std::size_t>(r)] == doctest::Approx(p).epsilon(1e-12));
      CHECK(labels[static_cast<std::size_t>(r)] == (p >= 0.5 ? 1 : 0));
    }
  }
}
