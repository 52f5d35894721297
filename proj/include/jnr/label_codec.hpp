#ifndef JNR_LABEL_CODEC_HPP_
#define JNR_LABEL_CODEC_HPP_

#include <Eigen/Core>

#include <array>
#include <compare>
#include <cstddef>
#include <iosfwd>
#include <optional>
#include <string>
#include <string_view>
#include <utility>
#include <vector>

namespace jnr {

/// Number of digit classes per digit head: 0-9 plus "absent".
inline constexpr int kDigitClasses = 11;
inline constexpr int kAbsentDigit = 10;

/// A jersey number in [0, 99], or Null ("not visible").
class JerseyLabel {
 public:
  constexpr JerseyLabel() = default;

  static constexpr JerseyLabel null() { return JerseyLabel(); }
  /// Throws std::out_of_range outside [0, 99].
  static JerseyLabel number(int value);

  bool is_null() const { return value_ < 0; }
  /// The jersey number; precondition !is_null().
  int value() const;

  /// "null" or the decimal number.
  std::string token() const;
  /// Inverse of token(); throws InputError on anything else.
  static JerseyLabel parse(std::string_view token);

  friend bool operator==(JerseyLabel, JerseyLabel) = default;
  friend auto operator<=>(JerseyLabel, JerseyLabel) = default;

 private:
  explicit constexpr JerseyLabel(int v) : value_(v) {}
  int value_ = -1;
};

/// A digit 0-9 or Absent; index() maps Absent to 10.
class DigitClass {
 public:
  constexpr DigitClass() = default;
  static constexpr DigitClass absent() { return DigitClass(); }
  static DigitClass digit(int d);
  static DigitClass from_index(int index);

  bool is_absent() const { return digit_ < 0; }
  int digit() const;
  int index() const { return is_absent() ? kAbsentDigit : digit_; }

  friend bool operator==(DigitClass, DigitClass) = default;

 private:
  explicit constexpr DigitClass(int d) : digit_(d) {}
  int digit_ = -1;
};

using DigitPair = std::pair<DigitClass, DigitClass>;

/// Null -> (Absent, Absent); 10..99 -> (tens, units); 0..9 -> (Absent, n).
DigitPair decompose_digits(JerseyLabel label);

/// Inverse of decompose_digits on its image. (digit, Absent) never arises
/// from a label and collapses to Null; a leading zero (0, d) reads as d.
JerseyLabel compose_digits(DigitClass first, DigitClass second);

/// Ordered set of holistic classes; index 0 is always Null.
class ClassSet {
 public:
  /// Throws ConfigError on duplicates, a missing/misplaced Null, or a size
  /// outside [2, 101].
  explicit ClassSet(std::vector<JerseyLabel> labels);

  /// Null followed by 1..(count-1).
  static ClassSet first_numbers(int count);

  std::size_t size() const { return labels_.size(); }
  const JerseyLabel& operator[](std::size_t i) const { return labels_.at(i); }
  const std::vector<JerseyLabel>& labels() const { return labels_; }

  bool contains(JerseyLabel label) const;
  /// Throws UnknownClassError naming the label.
  int index_of(JerseyLabel label) const;

  /// One label token per line, Null first.
  void save(std::ostream& os) const;
  static ClassSet load(std::istream& is);

  friend bool operator==(const ClassSet&, const ClassSet&) = default;

 private:
  std::vector<JerseyLabel> labels_;
  std::array<int, 101> index_{};  // slot 100 is Null
};

int holistic_index(JerseyLabel label, const ClassSet& classes);

/// Class indices for the three heads; the form used by the training loop.
struct TargetIndices {
  int holistic = 0;
  int digit1 = kAbsentDigit;
  int digit2 = kAbsentDigit;

  friend bool operator==(const TargetIndices&, const TargetIndices&) = default;
};

/// One-hot ground truth for the holistic head and both digit heads.
struct TargetTriple {
  Eigen::VectorXd y;
  Eigen::VectorXd y1;
  Eigen::VectorXd y2;

  TargetIndices indices() const;
};

TargetIndices encode_indices(JerseyLabel label, const ClassSet& classes);
TargetTriple encode_targets(JerseyLabel label, const ClassSet& classes);
/// Label from the holistic one-hot; throws InputError if y is not one-hot.
JerseyLabel decode_targets(const TargetTriple& targets, const ClassSet& classes);

/// Index of the unique 1 in a one-hot vector, or nullopt if it is not one.
std::optional<int> one_hot_index(const Eigen::Ref<const Eigen::VectorXd>& v);

}  // namespace jnr

#endif  // JNR_LABEL_CODEC_HPP_
