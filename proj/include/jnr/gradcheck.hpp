#ifndef JNR_GRADCHECK_HPP_
#define JNR_GRADCHECK_HPP_

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <functional>
#include <string>
#include <utility>
#include <vector>

#include "jnr/ops.hpp"
#include "jnr/random.hpp"
#include "jnr/tensor.hpp"

namespace jnr {

struct GradCheckReport {
  double max_rel_error = 0.0;
  std::size_t worst_tensor = 0;
  Index worst_coord = -1;
  std::size_t coords_checked = 0;
  // Coordinates whose +-epsilon evaluations took a different relu/maxpool
  // branch than the unperturbed point; central differences are meaningless
  // there, so they are skipped (and, when sampling, redrawn).
  std::size_t kink_crossings = 0;
  bool finite = true;
  std::string failure;

  bool passed(double tolerance) const {
    return finite && failure.empty() && max_rel_error < tolerance;
  }
};

template <typename Scalar>
using LossFn = std::function<Tensor<Scalar>(Tape<Scalar>*)>;

/// Records the relu/maxpool branch fingerprint of everything evaluated
/// while alive on this thread.
class BranchProbe {
 public:
  BranchProbe() : previous_(detail::branch_fingerprint) {
    detail::branch_fingerprint = &value_;
  }
  ~BranchProbe() { detail::branch_fingerprint = previous_; }
  BranchProbe(const BranchProbe&) = delete;
  BranchProbe& operator=(const BranchProbe&) = delete;

  std::uint64_t value() const { return value_; }

 private:
  std::uint64_t value_ = 0;
  std::uint64_t* previous_;
};

/// Compares tape gradients of `loss` against central differences
/// (f(x+e) - f(x-e)) / 2e, coordinate by coordinate, perturbing the
/// tensors in place. The error per coordinate is
/// |analytic - numeric| / max(1, |numeric|).
///
/// samples == 0 checks every coordinate; otherwise `samples` coordinates
/// are drawn uniformly (with replacement) over all parameters, redrawing
/// any that cross a kink, up to 20 * samples draws.
template <typename Scalar>
GradCheckReport check_gradients(const LossFn<Scalar>& loss,
                                const std::vector<Tensor<Scalar>>& params,
                                Scalar epsilon, std::size_t samples = 0,
                                std::uint64_t seed = 0) {
  for (const auto& p : params) p.grad().setZero();
  std::uint64_t base_branch;
  {
    BranchProbe probe;
    Tape<Scalar> tape;
    Tensor<Scalar> value = loss(&tape);
    // An empty tape means the loss does not depend on any parameter.
    if (tape.size() > 0) tape.backward(value);
    base_branch = probe.value();
  }
  std::vector<VectorX<Scalar>> analytic;
  analytic.reserve(params.size());
  for (const auto& p : params) analytic.push_back(p.grad());

  Index total = 0;
  for (const auto& p : params) total += p.size();
  Rng rng(seed);
  auto locate = [&](Index flat) {
    std::size_t t = 0;
    while (flat >= params[t].size()) flat -= params[t++].size();
    return std::pair{t, flat};
  };
  auto evaluate = [&](Tensor<Scalar>& p, Index i, Scalar value, bool& same_branch) {
    BranchProbe probe;
    p[i] = value;
    const Scalar out = loss(nullptr).item();
    same_branch = same_branch && probe.value() == base_branch;
    return out;
  };

  GradCheckReport report;
  const std::size_t target = samples == 0 ? static_cast<std::size_t>(total) : samples;
  const std::size_t max_draws = samples == 0 ? target : 20 * samples;
  for (std::size_t draw = 0; draw < max_draws && report.coords_checked < target; ++draw) {
    const auto [t, i] = locate(samples == 0 ? static_cast<Index>(draw)
                                            : static_cast<Index>(rng.below(
                                                  static_cast<std::uint64_t>(total))));
    Tensor<Scalar> p = params[t];
    const Scalar saved = p[i];
    bool same_branch = true;
    const Scalar up = evaluate(p, i, saved + epsilon, same_branch);
    const Scalar down = evaluate(p, i, saved - epsilon, same_branch);
    p[i] = saved;
    if (!std::isfinite(up) || !std::isfinite(down)) {
      report.finite = false;
      report.worst_tensor = t;
      report.worst_coord = i;
      report.failure = "non-finite loss when perturbing tensor " +
                       std::to_string(t) + " coordinate " + std::to_string(i);
      return report;
    }
    if (!same_branch) {
      ++report.kink_crossings;
      continue;
    }
    ++report.coords_checked;
    const double numeric = (static_cast<double>(up) - static_cast<double>(down)) /
                           (2.0 * static_cast<double>(epsilon));
    const double err = std::abs(static_cast<double>(analytic[t][i]) - numeric) /
                       std::max(1.0, std::abs(numeric));
    if (err > report.max_rel_error || report.worst_coord < 0) {
      report.max_rel_error = std::max(report.max_rel_error, err);
      report.worst_tensor = t;
      report.worst_coord = i;
    }
  }
  if (report.coords_checked < target && samples != 0) {
    report.failure = "only " + std::to_string(report.coords_checked) + " of " +
                     std::to_string(target) + " sampled coordinates were kink-free";
  }
  return report;
}

/// Single-tensor form: f maps `point` to a scalar.
template <typename Scalar>
GradCheckReport finite_difference_check(
    const std::function<Tensor<Scalar>(const Tensor<Scalar>&, Tape<Scalar>*)>& f,
    const Tensor<Scalar>& point, Scalar epsilon) {
  Tensor<Scalar> x = point.clone(/*requires_grad=*/true);
  return check_gradients<Scalar>([&](Tape<Scalar>* tape) { return f(x, tape); },
                                 {x}, epsilon);
}

}  // namespace jnr

#endif  // JNR_GRADCHECK_HPP_
