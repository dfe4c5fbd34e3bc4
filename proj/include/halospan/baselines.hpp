#pragma once

// Lookback-ratio baseline: per-token ratio of mean attention on the context
// to mean attention on previously generated tokens, one column per
// (layer, head), classified by L2-regularised logistic regression.

#include <span>
#include <vector>

#include "halospan/attn_io.hpp"
#include "halospan/features.hpp"

namespace halospan {

/// T x (L*H); column l*H + h. Entries in [0, 1]. The generated side averages
/// over keys C+1..i, including the query token. A row with no mass at all
/// gets ratio 1.
RowMatrix lookback_ratio(const AttentionDump& dump);

struct LogRegModel {
  Eigen::VectorXd weights;
  double bias = 0.0;
};

struct LogRegFit {
  LogRegModel model;
  std::vector<double> loss_history;  // objective after each accepted iterate
  double grad_norm = 0.0;
  int iterations = 0;
};

/// Minimises mean log-loss + (l2 / 2) |w|^2 (bias unpenalised) by damped
/// Newton steps with backtracking, to gradient norm <= tol. Throws
/// ValidationError if either class is missing, ConvergenceError on hitting
/// the iteration cap.
LogRegFit train_logreg(const RowMatrix& features, std::span<const int> labels, double l2,
                       int max_iterations = 200, double tol = 1e-6);

/// Probability sigmoid(w.x + b) per row.
std::vector<double> logreg_probability(const LogRegModel& model, const RowMatrix& features);

/// Label 1 iff probability >= 0.5.
LabelSequence predict_logreg(const LogRegModel& model, const RowMatrix& features);

}  // namespace halospan
