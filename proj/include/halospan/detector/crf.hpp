#pragma once

// Two-label linear-chain CRF over per-token emission scores.
//
//   score(y) = start[y_1] + sum_t emit[t, y_t] + sum_t trans[y_t, y_t+1] + end[y_T]
//   nll(y)   = log Z - score(y)

#include <span>
#include <vector>

#include <Eigen/Dense>

#include "halospan/features.hpp"
#include "halospan/types.hpp"

namespace halospan {

inline constexpr int kNumLabels = 2;

struct CrfParams {
  Eigen::Matrix2d transitions = Eigen::Matrix2d::Zero();  // (from, to)
  Eigen::Vector2d start = Eigen::Vector2d::Zero();
  Eigen::Vector2d end = Eigen::Vector2d::Zero();
};

struct CrfGradient {
  RowMatrix emissions;  // T x 2
  Eigen::Matrix2d transitions = Eigen::Matrix2d::Zero();
  Eigen::Vector2d start = Eigen::Vector2d::Zero();
  Eigen::Vector2d end = Eigen::Vector2d::Zero();
};

double path_score(const RowMatrix& emissions, std::span<const int> labels, const CrfParams& crf);

/// Forward algorithm in log space. Requires T >= 1.
double log_partition(const RowMatrix& emissions, const CrfParams& crf);

/// Throws ShapeError if lengths differ or T == 0.
double crf_neg_log_likelihood(const RowMatrix& emissions, std::span<const int> labels,
                              const CrfParams& crf);

/// NLL plus its gradient (marginals minus path indicators) via forward-backward.
double crf_neg_log_likelihood(const RowMatrix& emissions, std::span<const int> labels,
                              const CrfParams& crf, CrfGradient& grad);

/// Highest-scoring label path. Ties resolve toward label 0.
LabelSequence viterbi_decode(const RowMatrix& emissions, const CrfParams& crf);

}  // namespace halospan
