#include "jnr/multitask_loss.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <stdexcept>

#include "jnr/errors.hpp"

namespace jnr {

std::string LossWeights::to_string() const {
  char buf[96];
  std::snprintf(buf, sizeof buf, "(%.6g, %.6g, %.6g)", alpha_, beta_, gamma_);
  return buf;
}

LossWeights validate_weights(double alpha, double beta, double gamma) {
  const double sum = alpha + beta + gamma;
  const bool finite =
      std::isfinite(alpha) && std::isfinite(beta) && std::isfinite(gamma);
  if (!finite || alpha < 0.0 || beta < 0.0 || gamma < 0.0) {
    throw WeightSimplexError("loss weights must be finite and non-negative", sum);
  }
  if (std::abs(sum - 1.0) > kWeightSumTolerance) {
    char buf[128];
    std::snprintf(buf, sizeof buf,
                  "loss weights must sum to 1, got %.12g (alpha+beta+gamma)", sum);
    throw WeightSimplexError(buf, sum);
  }
  return LossWeights(alpha, beta, gamma);
}

namespace {

double cross_entropy_at(const Eigen::Ref<const Eigen::VectorXd>& p,
                        const Eigen::Ref<const Eigen::VectorXd>& y,
                        const char* what) {
  if (p.size() != y.size() || p.size() == 0) {
    throw ShapeError(std::string(what) + ": distribution and target sizes differ");
  }
  const auto target = one_hot_index(y);
  if (!target) throw InputError(std::string(what) + ": target is not one-hot");
  return -std::log(std::max(p[*target], kProbabilityFloor));
}

}  // namespace

double holistic_loss(const Eigen::Ref<const Eigen::VectorXd>& p,
                     const Eigen::Ref<const Eigen::VectorXd>& y) {
  return cross_entropy_at(p, y, "holistic_loss");
}

double digit_loss(const Eigen::Ref<const Eigen::VectorXd>& p,
                  const Eigen::Ref<const Eigen::VectorXd>& y) {
  if (p.size() != kDigitClasses) {
    throw ShapeError("digit_loss: expected 11 digit classes");
  }
  return cross_entropy_at(p, y, "digit_loss");
}

LossBreakdown total_loss(double holistic, double digit1, double digit2,
                         const LossWeights& w) {
  if (!(holistic >= 0.0) || !(digit1 >= 0.0) || !(digit2 >= 0.0) ||
      !std::isfinite(holistic) || !std::isfinite(digit1) || !std::isfinite(digit2)) {
    throw std::invalid_argument("total_loss: losses must be finite and >= 0");
  }
  LossBreakdown b;
  b.holistic = holistic;
  b.digit1 = digit1;
  b.digit2 = digit2;
  b.digitwise = w.beta() * digit1 + w.gamma() * digit2;
  b.total = w.alpha() * holistic + b.digitwise;
  return b;
}

}  // namespace jnr
