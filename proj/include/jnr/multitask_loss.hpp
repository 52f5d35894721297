#ifndef JNR_MULTITASK_LOSS_HPP_
#define JNR_MULTITASK_LOSS_HPP_

#include <Eigen/Core>

#include <span>
#include <string>
#include <vector>

#include "jnr/label_codec.hpp"
#include "jnr/ops.hpp"

namespace jnr {

/// Convex weights (alpha, beta, gamma) for the holistic, first-digit and
/// second-digit losses. Only constructible through validate_weights().
class LossWeights {
 public:
  double alpha() const { return alpha_; }
  double beta() const { return beta_; }
  double gamma() const { return gamma_; }
  std::string to_string() const;

  friend bool operator==(const LossWeights&, const LossWeights&) = default;
  friend LossWeights validate_weights(double alpha, double beta, double gamma);

 private:
  LossWeights(double a, double b, double g) : alpha_(a), beta_(b), gamma_(g) {}
  double alpha_;
  double beta_;
  double gamma_;
};

inline constexpr double kWeightSumTolerance = 1e-9;

/// Accepts iff every weight is >= 0 and the sum is within 1e-9 of 1.
/// Throws WeightSimplexError otherwise; no renormalisation.
LossWeights validate_weights(double alpha, double beta, double gamma);

struct LossBreakdown {
  double holistic = 0.0;
  double digit1 = 0.0;
  double digit2 = 0.0;
  double total = 0.0;
  double digitwise = 0.0;
};

/// Floor applied to the target probability before taking its log.
inline constexpr double kProbabilityFloor = 1e-12;

/// -sum_i y_i log p_i over the class set, evaluated as -log p[target].
double holistic_loss(const Eigen::Ref<const Eigen::VectorXd>& p,
                     const Eigen::Ref<const Eigen::VectorXd>& y);

/// Same as holistic_loss over the 11 digit classes.
double digit_loss(const Eigen::Ref<const Eigen::VectorXd>& p,
                  const Eigen::Ref<const Eigen::VectorXd>& y);

LossBreakdown total_loss(double holistic, double digit1, double digit2,
                         const LossWeights& w);

/// Pre-softmax outputs of the three heads: [N,|classes|], [N,11], [N,11].
template <typename Scalar>
struct HeadLogits {
  Tensor<Scalar> holistic;
  Tensor<Scalar> digit1;
  Tensor<Scalar> digit2;
};

template <typename Scalar>
struct MultiTaskLoss {
  Tensor<Scalar> total;
  LossBreakdown breakdown;
};

/// Batch-mean weighted loss alpha*L + beta*L1 + gamma*L2, each term a fused
/// softmax cross-entropy on the head logits.
template <typename Scalar>
MultiTaskLoss<Scalar> multitask_loss(const HeadLogits<Scalar>& logits,
                                     std::span<const TargetIndices> targets,
                                     const LossWeights& w,
                                     Tape<Scalar>* tape = nullptr) {
  std::vector<int> h, d1, d2;
  h.reserve(targets.size());
  d1.reserve(targets.size());
  d2.reserve(targets.size());
  for (const auto& t : targets) {
    h.push_back(t.holistic);
    d1.push_back(t.digit1);
    d2.push_back(t.digit2);
  }
  Tensor<Scalar> lh = softmax_cross_entropy<Scalar>(logits.holistic, h, tape);
  Tensor<Scalar> l1 = softmax_cross_entropy<Scalar>(logits.digit1, d1, tape);
  Tensor<Scalar> l2 = softmax_cross_entropy<Scalar>(logits.digit2, d2, tape);
  Tensor<Scalar> total =
      add(add(scale(lh, Scalar(w.alpha()), tape), scale(l1, Scalar(w.beta()), tape),
              tape),
          scale(l2, Scalar(w.gamma()), tape), tape);
  MultiTaskLoss<Scalar> out{total,
                            total_loss(static_cast<double>(lh.item()),
                                       static_cast<double>(l1.item()),
                                       static_cast<double>(l2.item()), w)};
  return out;
}

}  // namespace jnr

#endif  // JNR_MULTITASK_LOSS_HPP_
