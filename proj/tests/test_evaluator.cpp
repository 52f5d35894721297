#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include "doctest.h"

#include <cmath>
#include <numeric>

#include "jnr/errors.hpp"
#include "jnr/evaluator.hpp"
#include "jnr/random.hpp"

using namespace jnr;

namespace {

Eigen::VectorXd peaked(Index size, Index at) {
  Eigen::VectorXd v = Eigen::VectorXd::Constant(size, 0.1 / static_cast<double>(size - 1));
  v[at] = 0.9;
  return v;
}

PredictionTriple triple(Index k, Index holistic, int d1, int d2) {
  return {peaked(k, holistic), peaked(kDigitClasses, d1), peaked(kDigitClasses, d2)};
}

struct BruteMetrics {
  double accuracy = 0, precision = 0, recall = 0, f1 = 0;
};

// Per-class counts straight from the label lists, not from a matrix.
BruteMetrics brute_force(const std::vector<int>& preds, const std::vector<int>& truths, int k) {
  BruteMetrics m;
  int correct = 0;
  for (std::size_t i = 0; i < preds.size(); ++i) correct += preds[i] == truths[i];
  m.accuracy = static_cast<double>(correct) / static_cast<double>(preds.size());
  int present = 0;
  for (int c = 0; c < k; ++c) {
    int tp = 0, fp = 0, fn = 0;
    for (std::size_t i = 0; i < preds.size(); ++i) {
      if (preds[i] == c && truths[i] == c) ++tp;
      if (preds[i] == c && truths[i] != c) ++fp;
      if (preds[i] != c && truths[i] == c) ++fn;
    }
    if (tp + fn == 0) continue;
    ++present;
    const double p = tp + fp > 0 ? double(tp) / (tp + fp) : 0.0;
    const double r = double(tp) / (tp + fn);
    m.precision += p;
    m.recall += r;
    m.f1 += p + r > 0 ? 2 * p * r / (p + r) : 0.0;
  }
  m.precision /= present;
  m.recall /= present;
  m.f1 /= present;
  return m;
}

}  // namespace

TEST_CASE("predict_label follows each mode") {
  const ClassSet classes = ClassSet::first_numbers(81);
  const Index k = 81;
  const Index at72 = classes.index_of(JerseyLabel::number(72));
  CHECK(predict_label(triple(k, at72, 0, 0), PredictionMode::Holistic, classes) ==
        JerseyLabel::number(72));
  CHECK(predict_label(triple(k, at72, 0, 0), PredictionMode::MultiTaskDefault, classes) ==
        JerseyLabel::number(72));
  CHECK(predict_label(triple(k, 0, 7, 7), PredictionMode::DigitWise, classes) ==
        JerseyLabel::number(77));
  CHECK(predict_label(triple(k, 0, 3, kAbsentDigit), PredictionMode::DigitWise, classes) ==
        JerseyLabel::null());
  CHECK(predict_label(triple(k, 0, kAbsentDigit, 5), PredictionMode::DigitWise, classes) ==
        JerseyLabel::number(5));
  // 90 is outside the first-81 set; digit-wise can still produce it.
  CHECK(predict_label(triple(k, 0, 9, 0), PredictionMode::DigitWise, classes) ==
        JerseyLabel::number(90));
}

TEST_CASE("fused mode maximises the summed log-probabilities") {
  const ClassSet classes = ClassSet::first_numbers(81);
  Rng rng(4);
  for (int trial = 0; trial < 200; ++trial) {
    PredictionTriple t;
    t.p = Eigen::VectorXd::NullaryExpr(81, [&] { return rng.uniform() + 1e-3; });
    t.p1 = Eigen::VectorXd::NullaryExpr(kDigitClasses, [&] { return rng.uniform() + 1e-3; });
    t.p2 = Eigen::VectorXd::NullaryExpr(kDigitClasses, [&] { return rng.uniform() + 1e-3; });
    t.p /= t.p.sum();
    t.p1 /= t.p1.sum();
    t.p2 /= t.p2.sum();
    double best = -1;
    std::size_t best_n = 0;
    for (std::size_t n = 0; n < classes.size(); ++n) {
      const auto [a, b] = decompose_digits(classes[n]);
      const double prod = t.p[static_cast<Index>(n)] * t.p1[a.index()] * t.p2[b.index()];
      if (prod > best) {
        best = prod;
        best_n = n;
      }
    }
    CHECK(predict_label(t, PredictionMode::Fused, classes) == classes[best_n]);
  }
}

TEST_CASE("argmax ties go to the lowest index") {
  Eigen::VectorXd v(5);
  v << 0.1, 0.3, 0.2, 0.3, 0.1;
  CHECK(argmax(v) == 1);
  CHECK(argmax(Eigen::VectorXd::Constant(4, 0.25)) == 0);
  CHECK_THROWS(argmax(Eigen::VectorXd()));
}

TEST_CASE("predictions are invariant under monotone score transforms") {
  const ClassSet classes = ClassSet::first_numbers(30);
  Rng rng(8);
  auto softmax_of = [](const Eigen::VectorXd& s) {
    const Eigen::VectorXd e = (s.array() - s.maxCoeff()).exp();
    return Eigen::VectorXd(e / e.sum());
  };
  for (int trial = 0; trial < 100; ++trial) {
    const Eigen::VectorXd s = Eigen::VectorXd::NullaryExpr(30, [&] { return rng.normal(); });
    const Eigen::VectorXd s1 =
        Eigen::VectorXd::NullaryExpr(kDigitClasses, [&] { return rng.normal(); });
    const Eigen::VectorXd s2 =
        Eigen::VectorXd::NullaryExpr(kDigitClasses, [&] { return rng.normal(); });
    auto f = [](const Eigen::VectorXd& x) {
      return Eigen::VectorXd((x.array() * 3 + 1).exp().log1p() + x.array().pow(3));
    };
    const PredictionTriple a{softmax_of(s), softmax_of(s1), softmax_of(s2)};
    const PredictionTriple b{softmax_of(f(s)), softmax_of(f(s1)), softmax_of(f(s2))};
    for (auto mode : {PredictionMode::Holistic, PredictionMode::DigitWise,
                      PredictionMode::MultiTaskDefault}) {
      CHECK(predict_label(a, mode, classes) == predict_label(b, mode, classes));
    }
  }
}

TEST_CASE("digitwise_correct requires both digits") {
  const ClassSet classes = ClassSet::first_numbers(81);
  CHECK(digitwise_correct(triple(81, 0, 7, 2), JerseyLabel::number(72)));
  CHECK_FALSE(digitwise_correct(triple(81, 0, 7, 7), JerseyLabel::number(72)));
  CHECK(digitwise_correct(triple(81, 0, kAbsentDigit, kAbsentDigit), JerseyLabel::null()));
  CHECK_FALSE(digitwise_correct(triple(81, 0, 3, kAbsentDigit), JerseyLabel::null()));

  // Digit-wise prediction is right exactly when both digits are, for every
  // digit pair some label decomposes into.
  for (int d1 = 0; d1 < kDigitClasses; ++d1) {
    for (int d2 = 0; d2 < kDigitClasses; ++d2) {
      const DigitPair pair{DigitClass::from_index(d1), DigitClass::from_index(d2)};
      // Skips (digit, Absent) and leading zeros, which no label produces.
      if (decompose_digits(compose_digits(pair.first, pair.second)) != pair) continue;
      const PredictionTriple t = triple(81, 0, d1, d2);
      for (const JerseyLabel truth : classes.labels()) {
        CHECK_MESSAGE((predict_label(t, PredictionMode::DigitWise, classes) == truth) ==
              digitwise_correct(t, truth), d1 << "," << d2 << " truth " << truth.token());
      }
    }
  }
}

TEST_CASE("confusion matches a pairwise tally") {
  const ClassSet classes = ClassSet::first_numbers(20);
  Rng rng(12);
  std::vector<JerseyLabel> preds, truths;
  for (int i = 0; i < 500; ++i) {
    preds.push_back(classes[rng.below(20)]);
    truths.push_back(classes[rng.below(20)]);
  }
  const ConfusionMatrix cm = confusion(preds, truths, classes);
  CHECK(cm.total == 500);
  CHECK(cm.counts.sum() == 500);
  int diag = 0;
  for (std::size_t r = 0; r < 20; ++r) {
    for (std::size_t c = 0; c < 20; ++c) {
      std::int64_t n = 0;
      for (std::size_t i = 0; i < 500; ++i) n += truths[i] == classes[r] && preds[i] == classes[c];
      CHECK(cm.counts(static_cast<Index>(r), static_cast<Index>(c)) == n);
      if (r == c) diag += static_cast<int>(n);
    }
  }
  CHECK(cm.accuracy() == static_cast<double>(diag) / 500.0);

  const ConfusionMatrix perfect = confusion(truths, truths, classes);
  CHECK(perfect.accuracy() == 1.0);
  CHECK(perfect.counts.sum() == perfect.counts.trace());

  CHECK_THROWS_AS(confusion({}, {}, classes), InputError);
  CHECK_THROWS_AS(confusion(std::vector<JerseyLabel>(2, classes[1]),
                            std::vector<JerseyLabel>(3, classes[1]), classes),
                  InputError);
  const std::vector<JerseyLabel> stray{JerseyLabel::number(55)};
  const std::vector<JerseyLabel> one{classes[1]};
  CHECK_THROWS_AS(confusion(stray, one, classes), InputError);
  CHECK_THROWS_AS(confusion(one, stray, classes), InputError);
  CHECK_THROWS_AS(confusion(one, stray, classes, UnknownPrediction::CountAsMiss), InputError);
}

TEST_CASE("out-of-set predictions count as misses when allowed") {
  const ClassSet classes = ClassSet::first_numbers(3);
  const std::vector<JerseyLabel> truths{classes[1], classes[1], classes[2]};
  const std::vector<JerseyLabel> preds{classes[1], JerseyLabel::number(90), classes[2]};
  const ConfusionMatrix cm = confusion(preds, truths, classes, UnknownPrediction::CountAsMiss);
  CHECK(cm.total == 3);
  CHECK(cm.correct() == 2);
  CHECK(cm.outside[1] == 1);
  const MetricsReport m = macro_metrics(cm);
  CHECK(m.recall[1] == 0.5);
  CHECK(m.precision[1] == 1.0);
  CHECK(m.accuracy == doctest::Approx(2.0 / 3.0));
}

TEST_CASE("two-class worked example") {
  ConfusionMatrix cm;
  cm.classes = ClassSet::first_numbers(2);
  cm.counts.resize(2, 2);
  cm.counts << 8, 2, 3, 7;
  cm.outside = {0, 0};
  cm.total = 20;
  const MetricsReport m = macro_metrics(cm);
  CHECK(m.precision[0] == doctest::Approx(8.0 / 11.0).epsilon(1e-14));
  CHECK(m.recall[0] == doctest::Approx(0.8).epsilon(1e-14));
  CHECK(m.precision[1] == doctest::Approx(7.0 / 9.0).epsilon(1e-14));
  CHECK(m.recall[1] == doctest::Approx(0.7).epsilon(1e-14));
  // Per-class F1 are 16/21 and 14/19; macro-F1 is their mean.
  const double expected = (16.0 / 21.0 + 14.0 / 19.0) / 2.0;
  CHECK(std::abs(m.macro_f1 - expected) < 1e-15);
  CHECK(std::abs(m.macro_f1 - 0.7497) < 5e-4);
  CHECK(m.accuracy == 0.75);
}

TEST_CASE("absent classes are excluded from macro averages") {
  const ClassSet classes = ClassSet::first_numbers(4);
  // Class 3 is never true and never predicted.
  const std::vector<JerseyLabel> truths{classes[0], classes[1], classes[2], classes[2]};
  const std::vector<JerseyLabel> preds{classes[0], classes[1], classes[2], classes[2]};
  const MetricsReport m = macro_metrics(confusion(preds, truths, classes));
  CHECK(m.macro_f1 == 1.0);
  CHECK(m.macro_precision == 1.0);
  CHECK(m.macro_recall == 1.0);
  CHECK_FALSE(m.present[3]);

  // Class 3 predicted but never true: precision 0, still excluded.
  const std::vector<JerseyLabel> preds2{classes[0], classes[1], classes[2], classes[3]};
  const MetricsReport m2 = macro_metrics(confusion(preds2, truths, classes));
  CHECK(m2.precision[3] == 0.0);
  CHECK(m2.macro_recall == doctest::Approx((1 + 1 + 0.5) / 3.0).epsilon(1e-14));

  ConfusionMatrix empty;
  CHECK_THROWS_AS(macro_metrics(empty), InputError);
}

TEST_CASE("metrics match a brute-force reference on random matrices") {
  Rng rng(2024);
  for (int trial = 0; trial < 100; ++trial) {
    const int k = 2 + static_cast<int>(rng.below(80));
    const ClassSet classes = ClassSet::first_numbers(k);
    const int n = 1 + static_cast<int>(rng.below(2000));
    // Skewed toward the diagonal so precision and recall vary.
    std::vector<int> p(static_cast<std::size_t>(n)), t(static_cast<std::size_t>(n));
    std::vector<JerseyLabel> pl, tl;
    for (int i = 0; i < n; ++i) {
      t[i] = static_cast<int>(rng.below(static_cast<std::uint64_t>(k)));
      p[i] = rng.uniform() < 0.5 ? t[i] : static_cast<int>(rng.below(static_cast<std::uint64_t>(k)));
      pl.push_back(classes[static_cast<std::size_t>(p[i])]);
      tl.push_back(classes[static_cast<std::size_t>(t[i])]);
    }
    const MetricsReport m = macro_metrics(confusion(pl, tl, classes));
    const BruteMetrics ref = brute_force(p, t, k);
    CHECK(std::abs(m.accuracy - ref.accuracy) < 1e-12);
    CHECK(std::abs(m.macro_precision - ref.precision) < 1e-12);
    CHECK(std::abs(m.macro_recall - ref.recall) < 1e-12);
    CHECK(std::abs(m.macro_f1 - ref.f1) < 1e-12);
  }
}

TEST_CASE("metrics CSV row") {
  MetricsReport m;
  m.accuracy = 0.896;
  m.macro_precision = 0.5;
  m.macro_recall = 0.25;
  m.macro_f1 = 1.0 / 3.0;
  CHECK(MetricsReport::csv_header() == "method,accuracy,precision,recall,f1");
  CHECK(m.csv_row("multitask") == "multitask,0.896000,0.500000,0.250000,0.333333");
}

TEST_CASE("mode names round trip") {
  for (auto mode : {PredictionMode::Holistic, PredictionMode::DigitWise,
                    PredictionMode::MultiTaskDefault, PredictionMode::Fused}) {
    CHECK(parse_mode(mode_name(mode)) == mode);
  }
  CHECK_THROWS_AS(parse_mode("best"), InputError);
}
