#ifndef JNR_TRAINER_HPP_
#define JNR_TRAINER_HPP_

#include <cstdint>
#include <functional>
#include <iosfwd>
#include <optional>
#include <string>
#include <vector>

#include "jnr/evaluator.hpp"
#include "jnr/model.hpp"
#include "jnr/multitask_loss.hpp"
#include "jnr/synth_data.hpp"

namespace jnr {

/// Milestones at 20%, 40%, 60% and 70% of `total_iterations` (floored).
std::vector<int> proportional_milestones(int total_iterations);

/// The prediction mode that scores a run trained with `w`: digit
/// composition when the holistic head is untrained (alpha == 0), the
/// holistic head otherwise.
PredictionMode validation_mode_for(const LossWeights& w);

struct TrainConfig {
  int total_iterations = 10000;
  int batch_size = 100;
  double base_lr = 0.001;
  double lr_decay_factor = 0.33;
  std::vector<int> lr_milestones = proportional_milestones(10000);
  double weight_decay = 0.001;
  LossWeights loss_weights = validate_weights(0.3, 0.35, 0.35);
  std::uint64_t seed = 0;
  int validation_interval = 500;
  double hue_jitter = AugmentationPolicy::kDefaultHueJitter;
  /// Defaults to validation_mode_for(loss_weights).
  std::optional<PredictionMode> validation_mode;

  /// Sets total_iterations and rescales the milestones proportionally.
  TrainConfig& with_iterations(int total);
  PredictionMode resolved_validation_mode() const {
    return validation_mode.value_or(validation_mode_for(loss_weights));
  }

  /// Throws ConfigError.
  void validate() const;

  friend bool operator==(const TrainConfig&, const TrainConfig&) = default;
};

/// base_lr * decay^(number of milestones <= iteration), by repeated
/// multiplication. Precondition 0 <= iteration < total_iterations.
double lr_at(int iteration, const TrainConfig& cfg);

/// Adam moments for one parameter list (shapes fixed on first step).
template <typename Scalar>
struct AdamState {
  static constexpr double kBeta1 = 0.9;
  static constexpr double kBeta2 = 0.999;
  static constexpr double kEpsilon = 1e-8;

  std::vector<VectorX<Scalar>> m;
  std::vector<VectorX<Scalar>> v;
  std::int64_t step = 0;
};

/// One Adam update with coupled L2: g <- grad + weight_decay * p before the
/// moment updates, then p -= lr * m_hat / (sqrt(v_hat) + eps).
/// Throws NonFiniteError naming the parameter if a gradient is not finite
/// (nothing is updated), ShapeError if shapes changed since the first step.
template <typename Scalar>
void adam_step(std::vector<NamedTensor<Scalar>>& params, AdamState<Scalar>& state,
               double lr, double weight_decay);

struct HistoryRecord {
  int iteration = 0;  // optimizer steps completed
  double lr = 0.0;    // rate used by the last of those steps
  LossBreakdown train_loss;  // mean over the steps since the previous record
  double val_accuracy = 0.0;
};

struct TrainingHistory {
  std::vector<HistoryRecord> records;

  /// iteration,lr,loss_total,loss_holistic,loss_digit1,loss_digit2,val_accuracy
  void write_csv(std::ostream& os) const;
  static TrainingHistory read_csv(std::istream& is);
};

template <typename Scalar>
struct TrainResult {
  JerseyNet<Scalar> best;  // parameters at the best validation point
  int best_iteration = 0;
  double best_val_accuracy = 0.0;
  TrainingHistory history;
  LossBreakdown initial_loss;  // loss of the first batch before any update
};

/// Called after each validation point; for progress reporting.
using TrainObserver = std::function<void(const HistoryRecord&)>;

/// Mini-batch training on the train split: batches are drawn uniformly
/// with replacement from cfg.seed, augmented with hue jitter, and the
/// model is validated every validation_interval steps and after the last.
/// Ties in validation accuracy keep the earliest checkpoint.
/// Throws ConfigError if the model and dataset disagree (class set or
/// input size) or a split needed for training is empty.
template <typename Scalar>
TrainResult<Scalar> train(JerseyNet<Scalar> model, const Dataset& data,
                          const TrainConfig& cfg, const TrainObserver& observer = {});

/// Accuracy on a split under the config's validation mode; no augmentation
/// and no side effects.
template <typename Scalar>
double validate(const JerseyNet<Scalar>& model, const Dataset& data, Split split,
                PredictionMode mode);

}  // namespace jnr

#endif  // JNR_TRAINER_HPP_
