#include "halospan/baselines.hpp"

#include <cmath>

#include "halospan/errors.hpp"

namespace halospan {

RowMatrix lookback_ratio(const AttentionDump& dump) {
  const std::size_t T = dump.T();
  RowMatrix out(static_cast<Eigen::Index>(T), static_cast<Eigen::Index>(dump.L * dump.H));
  for (std::size_t l = 0; l < dump.L; ++l) {
    for (std::size_t h = 0; h < dump.H; ++h) {
      for (std::size_t t = 0; t < T; ++t) {
        const std::size_t i = dump.C + 1 + t;
        const auto row = dump.row(l, h, i);
        double ctx = 0.0;
        for (std::size_t j = 0; j < dump.C; ++j) ctx += row[j];
        ctx /= static_cast<double>(dump.C);
        // generated keys C+1..i, the query token itself included
        double fresh = 0.0;
        const std::size_t n_new = i - dump.C;
        for (std::size_t j = dump.C; j < i; ++j) fresh += row[j];
        fresh = n_new > 0 ? fresh / static_cast<double>(n_new) : 0.0;
        const double denom = ctx + fresh;
        out(static_cast<Eigen::Index>(t), static_cast<Eigen::Index>(l * dump.H + h)) =
            denom > 0.0 ? ctx / denom : 1.0;
      }
    }
  }
  return out;
}

namespace {

double sigmoid(double z) {
  if (z >= 0.0) return 1.0 / (1.0 + std::exp(-z));
  const double e = std::exp(z);
  return e / (1.0 + e);
}

// log(1 + exp(z)) without overflow
double softplus(double z) { return z > 0.0 ? z + std::log1p(std::exp(-z)) : std::log1p(std::exp(z)); }

struct Objective {
  const RowMatrix& X;
  const Eigen::VectorXd& y;
  double l2;

  // theta = [w; b]
  double value(const Eigen::VectorXd& theta) const {
    const Eigen::Index d = X.cols();
    const Eigen::VectorXd z = (X * theta.head(d)).array() + theta(d);
    double loss = 0.0;
    for (Eigen::Index k = 0; k < z.size(); ++k) loss += softplus(z(k)) - y(k) * z(k);
    return loss / static_cast<double>(X.rows()) + 0.5 * l2 * theta.head(d).squaredNorm();
  }

  void derivatives(const Eigen::VectorXd& theta, Eigen::VectorXd& grad, Eigen::MatrixXd& hess) const {
    const Eigen::Index d = X.cols();
    const Eigen::Index n = X.rows();
    Eigen::MatrixXd Xb(n, d + 1);
    Xb.leftCols(d) = X;
    Xb.col(d).setOnes();
    const Eigen::VectorXd z = Xb * theta;
    Eigen::VectorXd p(n);
    Eigen::VectorXd w(n);
    for (Eigen::Index k = 0; k < n; ++k) {
      p(k) = sigmoid(z(k));
      w(k) = p(k) * (1.0 - p(k));
    }
    const double inv_n = 1.0 / static_cast<double>(n);
    grad = Xb.transpose() * (p - y) * inv_n;
    hess = Xb.transpose() * w.asDiagonal() * Xb * inv_n;
    grad.head(d) += l2 * theta.head(d);
    hess.topLeftCorner(d, d).diagonal().array() += l2;
  }
};

}  // namespace

LogRegFit train_logreg(const RowMatrix& features, std::span<const int> labels, double l2,
                       int max_iterations, double tol) {
  if (static_cast<std::size_t>(features.rows()) != labels.size()) {
    throw ShapeError("feature rows " + std::to_string(features.rows()) + " != labels " +
                     std::to_string(labels.size()));
  }
  std::size_t positives = 0;
  for (int v : labels) positives += v == 1;
  if (positives == 0 || positives == labels.size()) {
    throw ValidationError("logistic regression needs at least one token of each class");
  }
  const Eigen::Index d = features.cols();
  Eigen::VectorXd y(static_cast<Eigen::Index>(labels.size()));
  for (std::size_t k = 0; k < labels.size(); ++k) y(static_cast<Eigen::Index>(k)) = labels[k];

  const Objective f{features, y, l2};
  Eigen::VectorXd theta = Eigen::VectorXd::Zero(d + 1);
  Eigen::VectorXd grad;
  Eigen::MatrixXd hess;
  double current = f.value(theta);

  LogRegFit fit;
  fit.loss_history.push_back(current);
  for (int it = 0;; ++it) {
    f.derivatives(theta, grad, hess);
    fit.grad_norm = grad.norm();
    fit.iterations = it;
    if (fit.grad_norm <= tol) break;
    if (it >= max_iterations) {
      throw ConvergenceError("logistic regression did not converge in " +
                                 std::to_string(max_iterations) + " iterations (gradient norm " +
                                 std::to_string(fit.grad_norm) + ")",
                             fit.grad_norm);
    }
    // Minimum-norm Newton direction; rank-deficient Hessians (constant
    // features with l2 = 0) leave those coordinates untouched.
    Eigen::VectorXd step = hess.completeOrthogonalDecomposition().solve(grad);
    if (!step.allFinite() || step.dot(grad) <= 0.0) step = grad;
    double t = 1.0;
    Eigen::VectorXd next;
    double next_value = current;
    for (int k = 0; k < 60; ++k, t *= 0.5) {
      next = theta - t * step;
      next_value = f.value(next);
      if (next_value <= current - 1e-4 * t * step.dot(grad)) break;
    }
    if (!(next_value < current)) {
      // Line search stalled at machine precision; accept only if already near optimum.
      if (fit.grad_norm <= 1e3 * tol) break;
      throw ConvergenceError("logistic regression line search stalled (gradient norm " +
                                 std::to_string(fit.grad_norm) + ")",
                             fit.grad_norm);
    }
    theta = next;
    current = next_value;
    fit.loss_history.push_back(current);
  }
  fit.model.weights = theta.head(d);
  fit.model.bias = theta(d);
  return fit;
}

std::vector<double> logreg_probability(const LogRegModel& model, const RowMatrix& features) {
  if (features.cols() != model.weights.size()) {
    throw ShapeError("logistic regression expects " + std::to_string(model.weights.size()) +
                     " features, got " + std::to_string(features.cols()));
  }
  const Eigen::VectorXd z = (features * model.weights).array() + model.bias;
  std::vector<double> p(static_cast<std::size_t>(z.size()));
  for (Eigen::Index k = 0; k < z.size(); ++k) p[static_cast<std::size_t>(k)] = sigmoid(z(k));
  return p;
}

LabelSequence predict_logreg(const LogRegModel& model, const RowMatrix& features) {
  LabelSequence seq;
  for (double p : logreg_probability(model, features)) seq.labels.push_back(p >= 0.5 ? 1 : 0);
  return seq;
}

}  // namespace halospan
