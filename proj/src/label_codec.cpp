#include "jnr/label_codec.hpp"

#include <charconv>
#include <istream>
#include <ostream>
#include <stdexcept>

#include "jnr/errors.hpp"

namespace jnr {

JerseyLabel JerseyLabel::number(int value) {
  if (value < 0 || value > 99) {
    throw std::out_of_range("jersey number " + std::to_string(value) +
                            " outside [0, 99]");
  }
  return JerseyLabel(value);
}

int JerseyLabel::value() const {
  if (is_null()) throw std::logic_error("value() of the null label");
  return value_;
}

std::string JerseyLabel::token() const {
  return is_null() ? "null" : std::to_string(value_);
}

JerseyLabel JerseyLabel::parse(std::string_view token) {
  if (token == "null") return null();
  int v = -1;
  auto [ptr, ec] = std::from_chars(token.data(), token.data() + token.size(), v);
  if (token.empty() || ec != std::errc() || ptr != token.data() + token.size() ||
      v < 0 || v > 99 || (token.size() > 1 && token[0] == '0')) {
    throw InputError("invalid jersey label token '" + std::string(token) + "'");
  }
  return JerseyLabel(v);
}

DigitClass DigitClass::digit(int d) {
  if (d < 0 || d > 9) {
    throw std::out_of_range("digit " + std::to_string(d) + " outside [0, 9]");
  }
  return DigitClass(d);
}

DigitClass DigitClass::from_index(int index) {
  if (index == kAbsentDigit) return absent();
  return digit(index);
}

int DigitClass::digit() const {
  if (is_absent()) throw std::logic_error("digit() of the absent class");
  return digit_;
}

DigitPair decompose_digits(JerseyLabel label) {
  if (label.is_null()) return {DigitClass::absent(), DigitClass::absent()};
  const int n = label.value();
  if (n < 10) return {DigitClass::absent(), DigitClass::digit(n)};
  return {DigitClass::digit(n / 10), DigitClass::digit(n % 10)};
}

JerseyLabel compose_digits(DigitClass first, DigitClass second) {
  if (second.is_absent()) return JerseyLabel::null();
  if (first.is_absent()) return JerseyLabel::number(second.digit());
  return JerseyLabel::number(10 * first.digit() + second.digit());
}

namespace {
int slot(JerseyLabel label) { return label.is_null() ? 100 : label.value(); }
}  // namespace

ClassSet::ClassSet(std::vector<JerseyLabel> labels) : labels_(std::move(labels)) {
  if (labels_.size() < 2 || labels_.size() > 101) {
    throw ConfigError("class set needs between 2 and 101 labels, got " +
                      std::to_string(labels_.size()));
  }
  if (!labels_.front().is_null()) {
    throw ConfigError("class set must start with the null label");
  }
  index_.fill(-1);
  for (std::size_t i = 0; i < labels_.size(); ++i) {
    int& entry = index_[static_cast<std::size_t>(slot(labels_[i]))];
    if (entry >= 0) {
      throw ConfigError("duplicate label '" + labels_[i].token() +
                        "' in class set");
    }
    entry = static_cast<int>(i);
  }
}

ClassSet ClassSet::first_numbers(int count) {
  std::vector<JerseyLabel> labels{JerseyLabel::null()};
  for (int n = 1; n < count; ++n) labels.push_back(JerseyLabel::number(n));
  return ClassSet(std::move(labels));
}

bool ClassSet::contains(JerseyLabel label) const {
  return index_[static_cast<std::size_t>(slot(label))] >= 0;
}

int ClassSet::index_of(JerseyLabel label) const {
  const int i = index_[static_cast<std::size_t>(slot(label))];
  if (i < 0) {
    throw UnknownClassError("label '" + label.token() + "' is not in the class set");
  }
  return i;
}

void ClassSet::save(std::ostream& os) const {
  for (const auto& label : labels_) os << label.token() << '\n';
}

ClassSet ClassSet::load(std::istream& is) {
  std::vector<JerseyLabel> labels;
  std::string line;
  while (std::getline(is, line)) {
    if (!line.empty() && line.back() == '\r') line.pop_back();
    if (line.empty()) continue;
    labels.push_back(JerseyLabel::parse(line));
  }
  return ClassSet(std::move(labels));
}

int holistic_index(JerseyLabel label, const ClassSet& classes) {
  return classes.index_of(label);
}

std::optional<int> one_hot_index(const Eigen::Ref<const Eigen::VectorXd>& v) {
  std::optional<int> hot;
  for (Eigen::Index i = 0; i < v.size(); ++i) {
    if (v[i] == 1.0) {
      if (hot) return std::nullopt;
      hot = static_cast<int>(i);
    } else if (v[i] != 0.0) {
      return std::nullopt;
    }
  }
  return hot;
}

TargetIndices TargetTriple::indices() const {
  auto h = one_hot_index(y), d1 = one_hot_index(y1), d2 = one_hot_index(y2);
  if (!h || !d1 || !d2) throw InputError("target vectors are not one-hot");
  return {*h, *d1, *d2};
}

TargetIndices encode_indices(JerseyLabel label, const ClassSet& classes) {
  const auto [first, second] = decompose_digits(label);
  return {classes.index_of(label), first.index(), second.index()};
}

TargetTriple encode_targets(JerseyLabel label, const ClassSet& classes) {
  const TargetIndices idx = encode_indices(label, classes);
  TargetTriple t;
  t.y = Eigen::VectorXd::Zero(static_cast<Eigen::Index>(classes.size()));
  t.y1 = Eigen::VectorXd::Zero(kDigitClasses);
  t.y2 = Eigen::VectorXd::Zero(kDigitClasses);
  t.y[idx.holistic] = 1.0;
  t.y1[idx.digit1] = 1.0;
  t.y2[idx.digit2] = 1.0;
  return t;
}

JerseyLabel decode_targets(const TargetTriple& targets, const ClassSet& classes) {
  auto h = one_hot_index(targets.y);
  if (!h || static_cast<std::size_t>(targets.y.size()) != classes.size()) {
    throw InputError("holistic target is not a one-hot over the class set");
  }
  return classes[static_cast<std::size_t>(*h)];
}

}  // namespace jnr
