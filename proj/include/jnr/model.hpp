#ifndef JNR_MODEL_HPP_
#define JNR_MODEL_HPP_

#include <Eigen/Core>

#include <cmath>
#include <cstdint>
#include <optional>
#include <string>
#include <utility>
#include <vector>

#include "jnr/label_codec.hpp"
#include "jnr/multitask_loss.hpp"
#include "jnr/ops.hpp"
#include "jnr/random.hpp"

namespace jnr {

/// Shape of the convolutional backbone.
///
/// The stem is a stride-2 3x3 convolution to channels[0]. Stage s holds
/// blocks[s] basic blocks (two 3x3 convolutions) of width channels[s]; the
/// first block of every stage downsamples by 2, with a 1x1 projection on
/// the shortcut. A final 1x1 convolution widens to feature_dim before
/// global average pooling.
struct BackboneConfig {
  int input_height = 64;
  int input_width = 64;
  std::vector<int> channels{16, 32, 64};
  std::vector<int> blocks{2, 2, 2};
  bool residual = true;
  int feature_dim = 128;

  /// Throws ConfigError.
  void validate() const;

  friend bool operator==(const BackboneConfig&, const BackboneConfig&) = default;
};

/// Softmax outputs of the three heads for one image.
struct PredictionTriple {
  Eigen::VectorXd p;
  Eigen::VectorXd p1;
  Eigen::VectorXd p2;
};

template <typename Scalar>
struct NamedTensor {
  std::string name;
  Tensor<Scalar> tensor;
};

/// Three-head jersey number classifier: shared backbone feature, then
/// holistic (|classes|-way) and two digit (11-way) linear heads.
template <typename Scalar>
class JerseyNet {
 public:
  static constexpr double kHeadGain = 0.1;

  JerseyNet(BackboneConfig config, ClassSet classes, std::uint64_t seed);

  const BackboneConfig& config() const { return config_; }
  const ClassSet& classes() const { return classes_; }

  /// images [N,3,H,W] -> features [N,feature_dim].
  Tensor<Scalar> extract_features(const Tensor<Scalar>& images,
                                  Tape<Scalar>* tape = nullptr) const;
  HeadLogits<Scalar> heads(const Tensor<Scalar>& features,
                           Tape<Scalar>* tape = nullptr) const;
  HeadLogits<Scalar> logits(const Tensor<Scalar>& images,
                            Tape<Scalar>* tape = nullptr) const {
    return heads(extract_features(images, tape), tape);
  }
  std::vector<PredictionTriple> forward(const Tensor<Scalar>& images) const;

  std::vector<NamedTensor<Scalar>>& parameters() { return params_; }
  const std::vector<NamedTensor<Scalar>>& parameters() const { return params_; }
  std::vector<Tensor<Scalar>> parameter_tensors() const;
  /// Throws std::out_of_range for unknown names.
  const Tensor<Scalar>& parameter(const std::string& name) const;
  Index parameter_count() const;

  /// Deep copy (no shared storage with this network).
  JerseyNet clone() const { return cast<Scalar>(); }

  template <typename To>
  JerseyNet<To> cast() const;

 private:
  template <typename>
  friend class JerseyNet;

  struct Conv {
    std::size_t weight = 0;
    std::size_t bias = 0;
    Index stride = 1;
    Index padding = 0;
  };
  struct Block {
    Conv first;
    Conv second;
    std::optional<Conv> projection;
  };
  struct Head {
    std::size_t weight = 0;
    std::size_t bias = 0;
  };

  JerseyNet() = default;

  Conv add_conv(const std::string& name, int in, int out, int k, int stride,
                Rng& rng);
  Head add_head(const std::string& name, int in, int out, Rng& rng);
  Tensor<Scalar> apply(const Conv& c, const Tensor<Scalar>& x,
                       Tape<Scalar>* tape) const;
  Tensor<Scalar> apply(const Head& h, const Tensor<Scalar>& x,
                       Tape<Scalar>* tape) const;

  BackboneConfig config_;
  ClassSet classes_{std::vector<JerseyLabel>{JerseyLabel::null(),
                                             JerseyLabel::number(0)}};
  std::vector<NamedTensor<Scalar>> params_;
  Conv stem_;
  std::vector<Block> blocks_;
  Conv widen_;
  Head holistic_;
  Head digit1_;
  Head digit2_;
};

template <typename Scalar>
JerseyNet<Scalar>::JerseyNet(BackboneConfig config, ClassSet classes,
                             std::uint64_t seed)
    : config_(std::move(config)), classes_(std::move(classes)) {
  config_.validate();
  Rng rng(mix_seed(seed, 0x6e6574));
  stem_ = add_conv("stem", 3, config_.channels[0], 3, 2, rng);
  int in = config_.channels[0];
  for (std::size_t s = 0; s < config_.channels.size(); ++s) {
    const int out = config_.channels[s];
    for (int b = 0; b < config_.blocks[s]; ++b) {
      const std::string name =
          "stage" + std::to_string(s) + ".block" + std::to_string(b);
      const int stride = b == 0 ? 2 : 1;
      Block block;
      block.first = add_conv(name + ".conv1", in, out, 3, stride, rng);
      block.second = add_conv(name + ".conv2", out, out, 3, 1, rng);
      if (config_.residual && (in != out || stride != 1)) {
        block.projection = add_conv(name + ".shortcut", in, out, 1, stride, rng);
      }
      blocks_.push_back(block);
      in = out;
    }
  }
  widen_ = add_conv("widen", in, config_.feature_dim, 1, 1, rng);
  holistic_ = add_head("head.holistic", config_.feature_dim,
                       static_cast<int>(classes_.size()), rng);
  digit1_ = add_head("head.digit1", config_.feature_dim, kDigitClasses, rng);
  digit2_ = add_head("head.digit2", config_.feature_dim, kDigitClasses, rng);
}

template <typename Scalar>
typename JerseyNet<Scalar>::Conv JerseyNet<Scalar>::add_conv(
    const std::string& name, int in, int out, int k, int stride, Rng& rng) {
  const double std_dev = std::sqrt(2.0 / (in * k * k));
  Tensor<Scalar> w({out, in, k, k}, /*requires_grad=*/true);
  for (Index i = 0; i < w.size(); ++i) w[i] = Scalar(std_dev * rng.normal());
  Conv c;
  c.weight = params_.size();
  params_.push_back({name + ".weight", w});
  c.bias = params_.size();
  params_.push_back({name + ".bias", Tensor<Scalar>({out}, true)});
  c.stride = stride;
  c.padding = k / 2;
  return c;
}

template <typename Scalar>
typename JerseyNet<Scalar>::Head JerseyNet<Scalar>::add_head(
    const std::string& name, int in, int out, Rng& rng) {
  // He fan-in scaled by kHeadGain so the heads start near uniform: the
  // unnormalised residual stack leaves features with rms of several units.
  const double std_dev = kHeadGain * std::sqrt(2.0 / in);
  Tensor<Scalar> w({in, out}, /*requires_grad=*/true);
  for (Index i = 0; i < w.size(); ++i) w[i] = Scalar(std_dev * rng.normal());
  Head h;
  h.weight = params_.size();
  params_.push_back({name + ".weight", w});
  h.bias = params_.size();
  params_.push_back({name + ".bias", Tensor<Scalar>({out}, true)});
  return h;
}

template <typename Scalar>
Tensor<Scalar> JerseyNet<Scalar>::apply(const Conv& c, const Tensor<Scalar>& x,
                                        Tape<Scalar>* tape) const {
  return conv2d(x, params_[c.weight].tensor, params_[c.bias].tensor, c.stride,
                c.padding, tape);
}

template <typename Scalar>
Tensor<Scalar> JerseyNet<Scalar>::apply(const Head& h, const Tensor<Scalar>& x,
                                        Tape<Scalar>* tape) const {
  return linear(x, params_[h.weight].tensor, params_[h.bias].tensor, tape);
}

template <typename Scalar>
Tensor<Scalar> JerseyNet<Scalar>::extract_features(const Tensor<Scalar>& images,
                                                   Tape<Scalar>* tape) const {
  if (images.rank() != 4 || images.dim(1) != 3 ||
      images.dim(2) != config_.input_height ||
      images.dim(3) != config_.input_width) {
    throw ShapeError("expected images [N,3," + std::to_string(config_.input_height) +
                     "," + std::to_string(config_.input_width) + "], got " +
                     shape_string(images.shape()));
  }
  Tensor<Scalar> x = relu(apply(stem_, images, tape), tape);
  for (const Block& b : blocks_) {
    Tensor<Scalar> y = apply(b.second, relu(apply(b.first, x, tape), tape), tape);
    if (config_.residual) {
      y = add(y, b.projection ? apply(*b.projection, x, tape) : x, tape);
    }
    x = relu(y, tape);
  }
  x = relu(apply(widen_, x, tape), tape);
  return global_avg_pool(x, tape);
}

template <typename Scalar>
HeadLogits<Scalar> JerseyNet<Scalar>::heads(const Tensor<Scalar>& features,
                                            Tape<Scalar>* tape) const {
  if (features.rank() != 2 || features.dim(1) != config_.feature_dim) {
    throw ShapeError("expected features [N," + std::to_string(config_.feature_dim) +
                     "], got " + shape_string(features.shape()));
  }
  return {apply(holistic_, features, tape), apply(digit1_, features, tape),
          apply(digit2_, features, tape)};
}

template <typename Scalar>
std::vector<PredictionTriple> JerseyNet<Scalar>::forward(
    const Tensor<Scalar>& images) const {
  const HeadLogits<Scalar> z = logits(images);
  const Tensor<Scalar> p = softmax(z.holistic);
  const Tensor<Scalar> p1 = softmax(z.digit1);
  const Tensor<Scalar> p2 = softmax(z.digit2);
  const Index n = images.dim(0);
  const Index k = p.dim(1);
  std::vector<PredictionTriple> out(static_cast<std::size_t>(n));
  for (Index i = 0; i < n; ++i) {
    auto& t = out[static_cast<std::size_t>(i)];
    t.p = p.data().segment(i * k, k).template cast<double>();
    t.p1 = p1.data().segment(i * kDigitClasses, kDigitClasses).template cast<double>();
    t.p2 = p2.data().segment(i * kDigitClasses, kDigitClasses).template cast<double>();
  }
  return out;
}

template <typename Scalar>
std::vector<Tensor<Scalar>> JerseyNet<Scalar>::parameter_tensors() const {
  std::vector<Tensor<Scalar>> out;
  out.reserve(params_.size());
  for (const auto& p : params_) out.push_back(p.tensor);
  return out;
}

template <typename Scalar>
const Tensor<Scalar>& JerseyNet<Scalar>::parameter(const std::string& name) const {
  for (const auto& p : params_) {
    if (p.name == name) return p.tensor;
  }
  throw std::out_of_range("no parameter named '" + name + "'");
}

template <typename Scalar>
Index JerseyNet<Scalar>::parameter_count() const {
  Index n = 0;
  for (const auto& p : params_) n += p.tensor.size();
  return n;
}

template <typename Scalar>
template <typename To>
JerseyNet<To> JerseyNet<Scalar>::cast() const {
  JerseyNet<To> out;
  out.config_ = config_;
  out.classes_ = classes_;
  for (const auto& p : params_) {
    out.params_.push_back({p.name, p.tensor.template cast<To>(p.tensor.requires_grad())});
  }
  auto conv = [](const Conv& c) {
    return typename JerseyNet<To>::Conv{c.weight, c.bias, c.stride, c.padding};
  };
  out.stem_ = conv(stem_);
  for (const Block& b : blocks_) {
    typename JerseyNet<To>::Block nb;
    nb.first = conv(b.first);
    nb.second = conv(b.second);
    if (b.projection) nb.projection = conv(*b.projection);
    out.blocks_.push_back(nb);
  }
  out.widen_ = conv(widen_);
  out.holistic_ = {holistic_.weight, holistic_.bias};
  out.digit1_ = {digit1_.weight, digit1_.bias};
  out.digit2_ = {digit2_.weight, digit2_.bias};
  return out;
}

}  // namespace jnr

#endif  // JNR_MODEL_HPP_
