#include "jnr/trainer.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <istream>
#include <ostream>
#include <sstream>

#include "jnr/errors.hpp"

namespace jnr {

std::vector<int> proportional_milestones(int total_iterations) {
  std::vector<int> out;
  for (int pct : {20, 40, 60, 70}) {
    const int m = static_cast<int>(static_cast<std::int64_t>(total_iterations) * pct / 100);
    // Very short runs would otherwise repeat a milestone or decay at step 0.
    if (m > 0 && (out.empty() || m > out.back())) out.push_back(m);
  }
  return out;
}

PredictionMode validation_mode_for(const LossWeights& w) {
  return w.alpha() == 0.0 ? PredictionMode::DigitWise : PredictionMode::MultiTaskDefault;
}

TrainConfig& TrainConfig::with_iterations(int total) {
  total_iterations = total;
  lr_milestones = proportional_milestones(total);
  return *this;
}

void TrainConfig::validate() const {
  if (total_iterations < 1) throw ConfigError("total_iterations must be positive");
  if (batch_size < 1) throw ConfigError("batch_size must be positive");
  if (!(base_lr > 0.0) || !std::isfinite(base_lr)) throw ConfigError("base_lr must be positive");
  if (!(lr_decay_factor > 0.0 && lr_decay_factor <= 1.0)) {
    throw ConfigError("lr_decay_factor must be in (0, 1]");
  }
  if (!(weight_decay >= 0.0) || !std::isfinite(weight_decay)) {
    throw ConfigError("weight_decay must be non-negative");
  }
  if (validation_interval < 1) throw ConfigError("validation_interval must be positive");
  if (!(hue_jitter >= 0.0 && hue_jitter <= 0.5)) {
    throw ConfigError("hue_jitter must be in [0, 0.5]");
  }
  for (std::size_t i = 0; i < lr_milestones.size(); ++i) {
    if (lr_milestones[i] < 0 || lr_milestones[i] >= total_iterations) {
      throw ConfigError("lr milestone " + std::to_string(lr_milestones[i]) +
                        " outside [0, total_iterations)");
    }
    if (i > 0 && lr_milestones[i] <= lr_milestones[i - 1]) {
      throw ConfigError("lr milestones must be strictly increasing");
    }
  }
}

double lr_at(int iteration, const TrainConfig& cfg) {
  if (iteration < 0 || iteration >= cfg.total_iterations) {
    throw std::out_of_range("lr_at: iteration " + std::to_string(iteration) +
                            " outside [0, " + std::to_string(cfg.total_iterations) + ")");
  }
  double lr = cfg.base_lr;
  for (int m : cfg.lr_milestones) {
    if (m <= iteration) lr *= cfg.lr_decay_factor;
  }
  return lr;
}

template <typename Scalar>
void adam_step(std::vector<NamedTensor<Scalar>>& params, AdamState<Scalar>& state,
               double lr, double weight_decay) {
  if (!(lr > 0.0)) throw std::invalid_argument("adam_step: lr must be positive");
  if (state.step == 0 && state.m.empty()) {
    for (const auto& p : params) {
      state.m.push_back(VectorX<Scalar>::Zero(p.tensor.size()));
      state.v.push_back(VectorX<Scalar>::Zero(p.tensor.size()));
    }
  }
  if (state.m.size() != params.size()) {
    throw ShapeError("adam_step: parameter list changed since the first step");
  }
  for (std::size_t i = 0; i < params.size(); ++i) {
    const auto& p = params[i];
    if (state.m[i].size() != p.tensor.size()) {
      throw ShapeError("adam_step: parameter '" + p.name + "' changed size");
    }
    if (p.tensor.has_grad() && !p.tensor.grad().allFinite()) {
      Index bad = 0;
      while (std::isfinite(p.tensor.grad()[bad])) ++bad;
      throw NonFiniteError("non-finite gradient in parameter '" + p.name + "' at index " +
                           std::to_string(bad) + " (step " +
                           std::to_string(state.step + 1) + ")");
    }
  }
  ++state.step;
  const double t = static_cast<double>(state.step);
  const Scalar b1 = Scalar(AdamState<Scalar>::kBeta1);
  const Scalar b2 = Scalar(AdamState<Scalar>::kBeta2);
  const Scalar c1 = Scalar(1.0 - std::pow(AdamState<Scalar>::kBeta1, t));
  const Scalar c2 = Scalar(1.0 - std::pow(AdamState<Scalar>::kBeta2, t));
  const Scalar eps = Scalar(AdamState<Scalar>::kEpsilon);
  const Scalar rate = Scalar(lr);
  const Scalar wd = Scalar(weight_decay);
  for (std::size_t i = 0; i < params.size(); ++i) {
    Tensor<Scalar> p = params[i].tensor;
    VectorX<Scalar>& m = state.m[i];
    VectorX<Scalar>& v = state.v[i];
    const bool has_grad = p.has_grad();
    Scalar* x = p.data().data();
    for (Index j = 0; j < p.size(); ++j) {
      const Scalar g = (has_grad ? p.grad()[j] : Scalar(0)) + wd * x[j];
      m[j] = b1 * m[j] + (Scalar(1) - b1) * g;
      v[j] = b2 * v[j] + (Scalar(1) - b2) * g * g;
      const Scalar m_hat = m[j] / c1;
      const Scalar v_hat = v[j] / c2;
      x[j] -= rate * m_hat / (std::sqrt(v_hat) + eps);
    }
  }
}

void TrainingHistory::write_csv(std::ostream& os) const {
  os << "iteration,lr,loss_total,loss_holistic,loss_digit1,loss_digit2,val_accuracy\n";
  char buf[256];
  for (const auto& r : records) {
    std::snprintf(buf, sizeof buf, "%d,%.9g,%.8f,%.8f,%.8f,%.8f,%.6f\n", r.iteration, r.lr,
                  r.train_loss.total, r.train_loss.holistic, r.train_loss.digit1,
                  r.train_loss.digit2, r.val_accuracy);
    os << buf;
  }
}

TrainingHistory TrainingHistory::read_csv(std::istream& is) {
  TrainingHistory h;
  std::string line;
  std::size_t line_no = 0;
  if (!std::getline(is, line)) throw ParseError("empty history file", 1);
  ++line_no;
  if (!line.empty() && line.back() == '\r') line.pop_back();
  if (line != "iteration,lr,loss_total,loss_holistic,loss_digit1,loss_digit2,val_accuracy") {
    throw ParseError("not a training history header", line_no);
  }
  while (std::getline(is, line)) {
    ++line_no;
    if (line.empty()) continue;
    std::replace(line.begin(), line.end(), ',', ' ');
    std::istringstream ls(line);
    HistoryRecord r;
    ls >> r.iteration >> r.lr >> r.train_loss.total >> r.train_loss.holistic >>
        r.train_loss.digit1 >> r.train_loss.digit2 >> r.val_accuracy;
    if (ls.fail()) throw ParseError("malformed history row", line_no);
    if (!h.records.empty() && r.iteration <= h.records.back().iteration) {
      throw ParseError("history iterations must increase", line_no);
    }
    h.records.push_back(r);
  }
  return h;
}

template <typename Scalar>
double validate(const JerseyNet<Scalar>& model, const Dataset& data, Split split,
                PredictionMode mode) {
  return evaluate(model, data, split, mode).metrics.accuracy;
}

template <typename Scalar>
TrainResult<Scalar> train(JerseyNet<Scalar> model, const Dataset& data,
                          const TrainConfig& cfg, const TrainObserver& observer) {
  cfg.validate();
  if (!(model.classes() == data.classes())) {
    throw ConfigError("model class set (" + std::to_string(model.classes().size()) +
                      " labels) differs from the dataset's (" +
                      std::to_string(data.classes().size()) + " labels)");
  }
  if (model.config().input_height != data.height() ||
      model.config().input_width != data.width()) {
    throw ConfigError("model input " + std::to_string(model.config().input_height) + "x" +
                      std::to_string(model.config().input_width) +
                      " does not match dataset images " + std::to_string(data.height()) +
                      "x" + std::to_string(data.width()));
  }
  const auto& members = data.split(Split::Train);
  if (members.empty()) throw ConfigError("the train split is empty");
  if (data.split(Split::Val).empty()) throw ConfigError("the val split is empty");

  const AugmentationPolicy policy(cfg.hue_jitter);
  const PredictionMode mode = cfg.resolved_validation_mode();
  Rng sampler(mix_seed(cfg.seed, 0x73616d70));
  Rng augment(mix_seed(cfg.seed, 0x61756720));
  AdamState<Scalar> adam;

  TrainResult<Scalar> result{model.clone(), 0, -1.0, {}, {}};
  LossBreakdown window{};
  int window_steps = 0;
  std::vector<std::size_t> positions(static_cast<std::size_t>(cfg.batch_size));
  for (int it = 0; it < cfg.total_iterations; ++it) {
    for (auto& pos : positions) pos = static_cast<std::size_t>(sampler.below(members.size()));
    const Batch<Scalar> batch = load_batch<Scalar>(data, Split::Train, positions, policy, augment);
    for (auto& p : model.parameters()) p.tensor.zero_grad();
    MultiTaskLoss<Scalar> loss;
    {
      Tape<Scalar> tape;
      loss = multitask_loss(model.logits(batch.images, &tape), batch.target_indices,
                            cfg.loss_weights, &tape);
      tape.backward(loss.total);
    }
    if (it == 0) result.initial_loss = loss.breakdown;
    const double lr = lr_at(it, cfg);
    adam_step(model.parameters(), adam, lr, cfg.weight_decay);

    window.total += loss.breakdown.total;
    window.holistic += loss.breakdown.holistic;
    window.digit1 += loss.breakdown.digit1;
    window.digit2 += loss.breakdown.digit2;
    window.digitwise += loss.breakdown.digitwise;
    ++window_steps;

    if ((it + 1) % cfg.validation_interval == 0 || it + 1 == cfg.total_iterations) {
      HistoryRecord rec;
      rec.iteration = it + 1;
      rec.lr = lr;
      const double n = window_steps;
      rec.train_loss = {window.holistic / n, window.digit1 / n, window.digit2 / n,
                        window.total / n, window.digitwise / n};
      rec.val_accuracy = validate(model, data, Split::Val, mode);
      result.history.records.push_back(rec);
      if (rec.val_accuracy > result.best_val_accuracy) {
        result.best = model.clone();
        result.best_iteration = rec.iteration;
        result.best_val_accuracy = rec.val_accuracy;
      }
      window = {};
      window_steps = 0;
      if (observer) observer(rec);
    }
  }
  return result;
}

template void adam_step<float>(std::vector<NamedTensor<float>>&, AdamState<float>&, double,
                               double);
template void adam_step<double>(std::vector<NamedTensor<double>>&, AdamState<double>&,
                                double, double);
template double validate<float>(const JerseyNet<float>&, const Dataset&, Split,
                                PredictionMode);
template double validate<double>(const JerseyNet<double>&, const Dataset&, Split,
                                 PredictionMode);
template TrainResult<float> train<float>(JerseyNet<float>, const Dataset&, const TrainConfig&,
                                         const TrainObserver&);
template TrainResult<double> train<double>(JerseyNet<double>, const Dataset&,
                                           const TrainConfig&, const TrainObserver&);

}  // namespace jnr
