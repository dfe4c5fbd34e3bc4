#pragma once

#include <span>

#include <Eigen/Dense>

#include "halospan/features.hpp"

namespace halospan {

inline constexpr double kStdFloor = 1e-6;

/// Column-wise z-scoring with population statistics pooled over all tokens.
struct Standardiser {
  Eigen::VectorXd mean;
  Eigen::VectorXd std;
  bool fitted = false;

  std::size_t width() const { return static_cast<std::size_t>(mean.size()); }
  /// Throws StateError if unfitted, ShapeError on width mismatch.
  RowMatrix apply(const RowMatrix& features) const;
};

/// Throws ConfigError for fewer than two tokens in total or mixed widths.
Standardiser fit_standardiser(std::span<const RowMatrix* const> train_features);

}  // namespace halospan
