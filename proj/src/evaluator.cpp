#include "jnr/evaluator.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <limits>
#include <numeric>

#include "jnr/errors.hpp"
#include "jnr/multitask_loss.hpp"

namespace jnr {

std::string_view mode_name(PredictionMode mode) {
  switch (mode) {
    case PredictionMode::Holistic: return "holistic";
    case PredictionMode::DigitWise: return "digitwise";
    case PredictionMode::MultiTaskDefault: return "multitask";
    case PredictionMode::Fused: return "fused";
  }
  return "?";
}

PredictionMode parse_mode(std::string_view name) {
  for (auto m : {PredictionMode::Holistic, PredictionMode::DigitWise,
                 PredictionMode::MultiTaskDefault, PredictionMode::Fused}) {
    if (name == mode_name(m)) return m;
  }
  throw InputError("unknown prediction mode '" + std::string(name) +
                   "' (expected holistic, digitwise, multitask or fused)");
}

int argmax(const Eigen::Ref<const Eigen::VectorXd>& v) {
  if (v.size() == 0) throw std::invalid_argument("argmax of an empty vector");
  int best = 0;
  for (Eigen::Index i = 1; i < v.size(); ++i) {
    if (v[i] > v[best]) best = static_cast<int>(i);
  }
  return best;
}

JerseyLabel predict_label(const PredictionTriple& pred, PredictionMode mode,
                          const ClassSet& classes) {
  switch (mode) {
    case PredictionMode::Holistic:
    case PredictionMode::MultiTaskDefault:
      return classes[static_cast<std::size_t>(argmax(pred.p))];
    case PredictionMode::DigitWise:
      return compose_digits(DigitClass::from_index(argmax(pred.p1)),
                            DigitClass::from_index(argmax(pred.p2)));
    case PredictionMode::Fused: {
      auto lp = [](double p) { return std::log(std::max(p, kProbabilityFloor)); };
      std::size_t best = 0;
      double best_score = -std::numeric_limits<double>::infinity();
      for (std::size_t n = 0; n < classes.size(); ++n) {
        const auto [d1, d2] = decompose_digits(classes[n]);
        const double score = lp(pred.p[static_cast<Eigen::Index>(n)]) + lp(pred.p1[d1.index()]) +
                             lp(pred.p2[d2.index()]);
        if (score > best_score) {
          best = n;
          best_score = score;
        }
      }
      return classes[best];
    }
  }
  throw std::logic_error("unhandled prediction mode");
}

bool digitwise_correct(const PredictionTriple& pred, JerseyLabel truth) {
  const auto [d1, d2] = decompose_digits(truth);
  return argmax(pred.p1) == d1.index() && argmax(pred.p2) == d2.index();
}

double ConfusionMatrix::accuracy() const {
  if (total == 0) throw InputError("accuracy of an empty confusion matrix");
  return static_cast<double>(correct()) / static_cast<double>(total);
}

ConfusionMatrix confusion(std::span<const JerseyLabel> preds,
                          std::span<const JerseyLabel> truths, const ClassSet& classes,
                          UnknownPrediction policy) {
  if (preds.size() != truths.size()) {
    throw InputError("confusion: " + std::to_string(preds.size()) + " predictions but " +
                     std::to_string(truths.size()) + " truths");
  }
  if (preds.empty()) throw InputError("confusion: no samples");
  const auto k = static_cast<Eigen::Index>(classes.size());
  ConfusionMatrix cm;
  cm.classes = classes;
  cm.counts.setZero(k, k);
  cm.outside.assign(classes.size(), 0);
  for (std::size_t i = 0; i < preds.size(); ++i) {
    if (!classes.contains(truths[i])) {
      throw InputError("confusion: truth label '" + truths[i].token() +
                       "' is not in the class set");
    }
    const int r = classes.index_of(truths[i]);
    if (classes.contains(preds[i])) {
      ++cm.counts(r, classes.index_of(preds[i]));
    } else if (policy == UnknownPrediction::CountAsMiss) {
      ++cm.outside[static_cast<std::size_t>(r)];
    } else {
      throw InputError("confusion: predicted label '" + preds[i].token() +
                       "' is not in the class set");
    }
    ++cm.total;
  }
  return cm;
}

MetricsReport macro_metrics(const ConfusionMatrix& cm) {
  if (cm.total <= 0 || cm.counts.size() == 0) {
    throw InputError("macro_metrics: empty confusion matrix");
  }
  const Eigen::Index k = cm.counts.rows();
  MetricsReport r;
  r.accuracy = cm.accuracy();
  r.precision.setZero(k);
  r.recall.setZero(k);
  r.f1.setZero(k);
  r.present.assign(static_cast<std::size_t>(k), false);
  int present = 0;
  for (Eigen::Index c = 0; c < k; ++c) {
    const double tp = static_cast<double>(cm.counts(c, c));
    const double predicted = static_cast<double>(cm.counts.col(c).sum());
    const double actual = static_cast<double>(cm.counts.row(c).sum()) +
                          static_cast<double>(cm.outside[static_cast<std::size_t>(c)]);
    r.precision[c] = predicted > 0 ? tp / predicted : 0.0;
    r.recall[c] = actual > 0 ? tp / actual : 0.0;
    const double pr = r.precision[c] + r.recall[c];
    r.f1[c] = pr > 0 ? 2 * r.precision[c] * r.recall[c] / pr : 0.0;
    if (actual > 0) {
      r.present[static_cast<std::size_t>(c)] = true;
      r.macro_precision += r.precision[c];
      r.macro_recall += r.recall[c];
      r.macro_f1 += r.f1[c];
      ++present;
    }
  }
  r.macro_precision /= present;
  r.macro_recall /= present;
  r.macro_f1 /= present;
  return r;
}

std::string MetricsReport::csv_header() { return "method,accuracy,precision,recall,f1"; }

std::string MetricsReport::csv_row(std::string_view method) const {
  char buf[128];
  std::snprintf(buf, sizeof buf, ",%.6f,%.6f,%.6f,%.6f", accuracy, macro_precision,
                macro_recall, macro_f1);
  return std::string(method) + buf;
}

template <typename Scalar>
Evaluation evaluate(const JerseyNet<Scalar>& model, const Dataset& data, Split split,
                    PredictionMode mode, int batch_size) {
  if (!(model.classes() == data.classes())) {
    throw ConfigError("model class set differs from the dataset's");
  }
  const auto& members = data.split(split);
  if (members.empty()) {
    throw ConfigError("cannot evaluate on the empty " + std::string(split_name(split)) +
                      " split");
  }
  if (batch_size < 1) throw ConfigError("batch size must be positive");
  Evaluation ev;
  ev.predictions.reserve(members.size());
  ev.truths.reserve(members.size());
  Rng unused(0);
  const AugmentationPolicy none = AugmentationPolicy::none();
  std::vector<std::size_t> positions;
  for (std::size_t start = 0; start < members.size(); start += static_cast<std::size_t>(batch_size)) {
    const std::size_t end = std::min(members.size(), start + static_cast<std::size_t>(batch_size));
    positions.resize(end - start);
    std::iota(positions.begin(), positions.end(), start);
    const Batch<Scalar> batch = load_batch<Scalar>(data, split, positions, none, unused);
    const auto preds = model.forward(batch.images);
    for (std::size_t i = 0; i < preds.size(); ++i) {
      ev.predictions.push_back(predict_label(preds[i], mode, data.classes()));
      ev.truths.push_back(batch.labels[i]);
    }
  }
  ev.confusion = confusion(ev.predictions, ev.truths, data.classes(),
                           UnknownPrediction::CountAsMiss);
  ev.metrics = macro_metrics(ev.confusion);
  return ev;
}

template Evaluation evaluate<float>(const JerseyNet<float>&, const Dataset&, Split,
                                   PredictionMode, int);
template Evaluation evaluate<double>(const JerseyNet<double>&, const Dataset&, Split,
                                    PredictionMode, int);

}  // namespace jnr
