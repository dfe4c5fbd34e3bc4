#include "halospan/detector/standardiser.hpp"

#include <cmath>

#include "halospan/errors.hpp"

namespace halospan {

RowMatrix Standardiser::apply(const RowMatrix& x) const {
  if (!fitted) throw StateError("standardiser has not been fitted");
  if (x.cols() != mean.size()) {
    throw ShapeError("feature width mismatch: expected " + std::to_string(mean.size()) + ", got " +
                     std::to_string(x.cols()));
  }
  RowMatrix out = x;
  out.rowwise() -= mean.transpose();
  out.array().rowwise() /= std.transpose().array();
  return out;
}

Standardiser fit_standardiser(std::span<const RowMatrix* const> train) {
  if (train.empty()) throw ConfigError("cannot fit standardiser on an empty training set");
  const Eigen::Index width = train.front()->cols();
  Eigen::Index tokens = 0;
  Eigen::VectorXd sum = Eigen::VectorXd::Zero(width);
  for (const RowMatrix* m : train) {
    if (m->cols() != width) throw ConfigError("training features have inconsistent widths");
    tokens += m->rows();
    sum += m->colwise().sum().transpose();
  }
  if (tokens < 2) throw ConfigError("standardiser needs at least two training tokens");
  Standardiser s;
  s.mean = sum / static_cast<double>(tokens);
  // two-pass variance
  Eigen::VectorXd sq = Eigen::VectorXd::Zero(width);
  for (const RowMatrix* m : train) {
    sq += (m->rowwise() - s.mean.transpose()).array().square().colwise().sum().matrix().transpose();
  }
  s.std = (sq / static_cast<double>(tokens)).array().sqrt().max(kStdFloor).matrix();
  s.fitted = true;
  return s;
}

}  // namespace halospan
