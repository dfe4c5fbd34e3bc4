#include "halospan/detector/crf.hpp"

#include <array>
#include <cmath>
#include <limits>

#include "halospan/errors.hpp"

namespace halospan {

namespace {

double logsumexp2(double a, double b) {
  const double m = std::max(a, b);
  if (m == -std::numeric_limits<double>::infinity()) return m;
  return m + std::log(std::exp(a - m) + std::exp(b - m));
}

void check_shapes(const RowMatrix& emissions, std::size_t n_labels) {
  if (emissions.cols() != kNumLabels) {
    throw ShapeError("emissions must have 2 columns, got " + std::to_string(emissions.cols()));
  }
  if (emissions.rows() == 0) throw ShapeError("empty emission sequence");
  if (static_cast<std::size_t>(emissions.rows()) != n_labels) {
    throw ShapeError("emissions have " + std::to_string(emissions.rows()) + " rows but " +
                     std::to_string(n_labels) + " labels were given");
  }
}

// alpha(t, y): log-sum of all prefixes ending in y at t (emission included).
RowMatrix forward_table(const RowMatrix& e, const CrfParams& crf) {
  const Eigen::Index T = e.rows();
  RowMatrix alpha(T, kNumLabels);
  for (int y = 0; y < kNumLabels; ++y) alpha(0, y) = crf.start(y) + e(0, y);
  for (Eigen::Index t = 1; t < T; ++t) {
    for (int y = 0; y < kNumLabels; ++y) {
      alpha(t, y) = logsumexp2(alpha(t - 1, 0) + crf.transitions(0, y),
                               alpha(t - 1, 1) + crf.transitions(1, y)) +
                    e(t, y);
    }
  }
  return alpha;
}

// beta(t, y): log-sum of all suffixes after t given y at t (end included).
RowMatrix backward_table(const RowMatrix& e, const CrfParams& crf) {
  const Eigen::Index T = e.rows();
  RowMatrix beta(T, kNumLabels);
  for (int y = 0; y < kNumLabels; ++y) beta(T - 1, y) = crf.end(y);
  for (Eigen::Index t = T - 2; t >= 0; --t) {
    for (int y = 0; y < kNumLabels; ++y) {
      beta(t, y) = logsumexp2(crf.transitions(y, 0) + e(t + 1, 0) + beta(t + 1, 0),
                              crf.transitions(y, 1) + e(t + 1, 1) + beta(t + 1, 1));
    }
  }
  return beta;
}

}  // namespace

double path_score(const RowMatrix& e, std::span<const int> labels, const CrfParams& crf) {
  check_shapes(e, labels.size());
  double s = crf.start(labels[0]) + crf.end(labels.back());
  for (std::size_t t = 0; t < labels.size(); ++t) {
    s += e(static_cast<Eigen::Index>(t), labels[t]);
    if (t > 0) s += crf.transitions(labels[t - 1], labels[t]);
  }
  return s;
}

double log_partition(const RowMatrix& e, const CrfParams& crf) {
  check_shapes(e, static_cast<std::size_t>(e.rows()));
  const RowMatrix alpha = forward_table(e, crf);
  const Eigen::Index T = e.rows();
  return logsumexp2(alpha(T - 1, 0) + crf.end(0), alpha(T - 1, 1) + crf.end(1));
}

double crf_neg_log_likelihood(const RowMatrix& e, std::span<const int> labels, const CrfParams& crf) {
  check_shapes(e, labels.size());
  return log_partition(e, crf) - path_score(e, labels, crf);
}

double crf_neg_log_likelihood(const RowMatrix& e, std::span<const int> labels, const CrfParams& crf,
                              CrfGradient& grad) {
  check_shapes(e, labels.size());
  const Eigen::Index T = e.rows();
  const RowMatrix alpha = forward_table(e, crf);
  const RowMatrix beta = backward_table(e, crf);
  const double log_z = logsumexp2(alpha(T - 1, 0) + crf.end(0), alpha(T - 1, 1) + crf.end(1));

  grad.emissions.setZero(T, kNumLabels);
  grad.transitions.setZero();
  grad.start.setZero();
  grad.end.setZero();

  for (Eigen::Index t = 0; t < T; ++t) {
    for (int y = 0; y < kNumLabels; ++y) {
      grad.emissions(t, y) = std::exp(alpha(t, y) + beta(t, y) - log_z);
    }
  }
  for (Eigen::Index t = 0; t + 1 < T; ++t) {
    for (int a = 0; a < kNumLabels; ++a) {
      for (int b = 0; b < kNumLabels; ++b) {
        grad.transitions(a, b) +=
            std::exp(alpha(t, a) + crf.transitions(a, b) + e(t + 1, b) + beta(t + 1, b) - log_z);
      }
    }
  }
  for (int y = 0; y < kNumLabels; ++y) {
    grad.start(y) = grad.emissions(0, y);
    grad.end(y) = grad.emissions(T - 1, y);
  }

  // subtract the gold path's indicator features
  for (Eigen::Index t = 0; t < T; ++t) grad.emissions(t, labels[static_cast<std::size_t>(t)]) -= 1.0;
  for (std::size_t t = 1; t < labels.size(); ++t) grad.transitions(labels[t - 1], labels[t]) -= 1.0;
  grad.start(labels.front()) -= 1.0;
  grad.end(labels.back()) -= 1.0;

  return log_z - path_score(e, labels, crf);
}

LabelSequence viterbi_decode(const RowMatrix& e, const CrfParams& crf) {
  check_shapes(e, static_cast<std::size_t>(e.rows()));
  const Eigen::Index T = e.rows();
  std::vector<std::array<int, kNumLabels>> back(static_cast<std::size_t>(T));
  std::array<double, kNumLabels> score{};
  for (int y = 0; y < kNumLabels; ++y) score[y] = crf.start(y) + e(0, y);

  for (Eigen::Index t = 1; t < T; ++t) {
    std::array<double, kNumLabels> next{};
    for (int y = 0; y < kNumLabels; ++y) {
      int best_prev = 0;
      double best = score[0] + crf.transitions(0, y);
      for (int p = 1; p < kNumLabels; ++p) {
        const double s = score[p] + crf.transitions(p, y);
        if (s > best) {  // strict: ties keep the lower label
          best = s;
          best_prev = p;
        }
      }
      next[y] = best + e(t, y);
      back[static_cast<std::size_t>(t)][y] = best_prev;
    }
    score = next;
  }

  int last = 0;
  double best = score[0] + crf.end(0);
  for (int y = 1; y < kNumLabels; ++y) {
    if (score[y] + crf.end(y) > best) {
      best = score[y] + crf.end(y);
      last = y;
    }
  }
  LabelSequence out;
  out.labels.assign(static_cast<std::size_t>(T), 0);
  out.labels.back() = last;
  for (Eigen::Index t = T - 1; t > 0; --t) {
    const auto ut = static_cast<std::size_t>(t);
    out.labels[ut - 1] = back[ut][out.labels[ut]];
  }
  return out;
}

}  // namespace halospan
