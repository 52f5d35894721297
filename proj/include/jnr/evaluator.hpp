#ifndef JNR_EVALUATOR_HPP_
#define JNR_EVALUATOR_HPP_

#include <Eigen/Core>

#include <cstdint>
#include <iosfwd>
#include <span>
#include <string>
#include <string_view>
#include <vector>

#include "jnr/label_codec.hpp"
#include "jnr/model.hpp"
#include "jnr/synth_data.hpp"

namespace jnr {

/// How a PredictionTriple becomes a label.
///   Holistic, MultiTaskDefault: classes[argmax p]
///   DigitWise: compose_digits(argmax p1, argmax p2)
///   Fused: argmax over classes n of log p[n] + log p1[d1(n)] + log p2[d2(n)]
enum class PredictionMode { Holistic, DigitWise, MultiTaskDefault, Fused };

std::string_view mode_name(PredictionMode mode);
/// Accepts holistic, digitwise, multitask, fused; throws InputError.
PredictionMode parse_mode(std::string_view name);

/// Index of the largest entry; ties go to the lowest index.
int argmax(const Eigen::Ref<const Eigen::VectorXd>& v);

/// May return a label outside `classes` in DigitWise mode.
JerseyLabel predict_label(const PredictionTriple& pred, PredictionMode mode,
                          const ClassSet& classes);

/// Both digit heads individually correct under the codec decomposition.
bool digitwise_correct(const PredictionTriple& pred, JerseyLabel truth);

/// Rows are truth, columns prediction, both indexed by the class set.
/// `outside[r]` counts predictions for truth row r that fell outside the
/// class set (only under UnknownPrediction::CountAsMiss); they are errors
/// for row r and false positives for no class.
struct ConfusionMatrix {
  ClassSet classes = ClassSet::first_numbers(2);
  Eigen::Matrix<std::int64_t, Eigen::Dynamic, Eigen::Dynamic> counts;
  std::vector<std::int64_t> outside;
  std::int64_t total = 0;

  std::int64_t correct() const { return counts.trace(); }
  double accuracy() const;
};

enum class UnknownPrediction { Reject, CountAsMiss };

/// Throws InputError on empty input, a length mismatch, an unknown truth
/// label, or (under Reject) an unknown predicted label.
ConfusionMatrix confusion(std::span<const JerseyLabel> preds,
                          std::span<const JerseyLabel> truths, const ClassSet& classes,
                          UnknownPrediction policy = UnknownPrediction::Reject);

struct MetricsReport {
  double accuracy = 0.0;
  double macro_precision = 0.0;
  double macro_recall = 0.0;
  double macro_f1 = 0.0;
  Eigen::VectorXd precision;  // per class
  Eigen::VectorXd recall;
  Eigen::VectorXd f1;
  std::vector<bool> present;  // class has at least one true instance

  /// "method,accuracy,precision,recall,f1"
  static std::string csv_header();
  std::string csv_row(std::string_view method) const;
};

/// Per-class P = TP/(TP+FP), R = TP/(TP+FN), F1 their harmonic mean, each 0
/// on a zero denominator; macro values average over present classes only.
/// Throws InputError on an empty matrix.
MetricsReport macro_metrics(const ConfusionMatrix& cm);

struct Evaluation {
  std::vector<JerseyLabel> predictions;
  std::vector<JerseyLabel> truths;
  ConfusionMatrix confusion;
  MetricsReport metrics;
};

/// Runs the model over a whole split (no augmentation) in batches of
/// `batch_size` and scores it; out-of-set predictions count as misses.
/// Throws ConfigError if the split is empty or the class sets differ.
template <typename Scalar>
Evaluation evaluate(const JerseyNet<Scalar>& model, const Dataset& data, Split split,
                    PredictionMode mode, int batch_size = 100);

}  // namespace jnr

#endif  // JNR_EVALUATOR_HPP_
