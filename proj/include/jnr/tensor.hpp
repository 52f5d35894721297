#ifndef JNR_TENSOR_HPP_
#define JNR_TENSOR_HPP_

#include <Eigen/Core>

#include <functional>
#include <memory>
#include <numeric>
#include <sstream>
#include <string>
#include <utility>
#include <vector>

#include "jnr/errors.hpp"

namespace jnr {

using Index = Eigen::Index;
using Shape = std::vector<Index>;

template <typename Scalar>
using VectorX = Eigen::Matrix<Scalar, Eigen::Dynamic, 1>;

template <typename Scalar>
using RowMatrixX =
    Eigen::Matrix<Scalar, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;

inline Index shape_size(const Shape& shape) {
  return std::accumulate(shape.begin(), shape.end(), Index{1},
                         [](Index a, Index b) { return a * b; });
}

inline std::string shape_string(const Shape& shape) {
  std::ostringstream os;
  os << '[';
  for (std::size_t i = 0; i < shape.size(); ++i) {
    os << (i ? "," : "") << shape[i];
  }
  os << ']';
  return os.str();
}

/// Dense row-major n-dimensional array with an optional gradient buffer.
///
/// Tensor is a handle: copies share storage, which is what lets a Tape
/// write gradients back into the tensors an operation consumed. Use
/// clone() for an independent copy.
template <typename Scalar_>
class Tensor {
 public:
  using Scalar = Scalar_;
  using Vector = VectorX<Scalar>;

  Tensor() : storage_(std::make_shared<Storage>()) {}

  explicit Tensor(Shape shape, bool requires_grad = false)
      : Tensor(shape, Vector::Zero(shape_size(shape)), requires_grad) {}

  Tensor(Shape shape, Vector data, bool requires_grad = false)
      : storage_(std::make_shared<Storage>()) {
    for (Index d : shape) {
      if (d <= 0) {
        throw ShapeError("tensor dimensions must be positive, got " +
                         shape_string(shape));
      }
    }
    if (shape_size(shape) != data.size()) {
      throw ShapeError("shape " + shape_string(shape) + " needs " +
                       std::to_string(shape_size(shape)) + " values, got " +
                       std::to_string(data.size()));
    }
    storage_->shape = std::move(shape);
    storage_->data = std::move(data);
    storage_->requires_grad = requires_grad;
  }

  static Tensor constant(Shape shape, Scalar value, bool requires_grad = false) {
    Index n = shape_size(shape);
    return Tensor(std::move(shape), Vector::Constant(n, value), requires_grad);
  }

  static Tensor scalar(Scalar value, bool requires_grad = false) {
    return constant({1}, value, requires_grad);
  }

  const Shape& shape() const { return storage_->shape; }
  Index dim(std::size_t axis) const { return storage_->shape.at(axis); }
  std::size_t rank() const { return storage_->shape.size(); }
  Index size() const { return storage_->data.size(); }

  Vector& data() { return storage_->data; }
  const Vector& data() const { return storage_->data; }
  Scalar& operator[](Index i) { return storage_->data[i]; }
  Scalar operator[](Index i) const { return storage_->data[i]; }

  Scalar item() const {
    if (size() != 1) {
      throw ShapeError("item() on tensor of shape " + shape_string(shape()));
    }
    return storage_->data[0];
  }

  bool requires_grad() const { return storage_->requires_grad; }
  void set_requires_grad(bool on) { storage_->requires_grad = on; }

  bool has_grad() const { return storage_->grad.size() == size(); }

  /// Gradient buffer, allocated as zeros on first access. Writable through
  /// a const handle, since backward closures hold const copies.
  Vector& grad() const {
    if (!has_grad()) storage_->grad = Vector::Zero(size());
    return storage_->grad;
  }
  void zero_grad() { storage_->grad.resize(0); }

  bool is_same(const Tensor& other) const {
    return storage_ == other.storage_;
  }

  Tensor clone(bool requires_grad = false) const {
    return Tensor(shape(), data(), requires_grad);
  }

  /// Same data, new shape; the result does not share storage.
  Tensor reshaped(Shape shape) const { return Tensor(std::move(shape), data()); }

  template <typename To>
  Tensor<To> cast(bool requires_grad = false) const {
    return Tensor<To>(shape(), data().template cast<To>(), requires_grad);
  }

 private:
  struct Storage {
    Shape shape{1};
    Vector data = Vector::Zero(1);
    mutable Vector grad;
    bool requires_grad = false;
  };
  std::shared_ptr<Storage> storage_;
};

/// Ordered record of executed operations for reverse-mode differentiation.
///
/// Operations append themselves as they execute, so every entry's inputs
/// were produced by earlier entries (or are leaves). A tape is single-use:
/// backward() may be called once.
template <typename Scalar>
class Tape {
 public:
  struct Entry {
    std::string op;
    Tensor<Scalar> output;
    std::function<void()> backward;
  };

  void record(std::string op, Tensor<Scalar> output,
              std::function<void()> backward) {
    if (consumed_) {
      throw StateError("cannot record '" + op + "' on a consumed tape");
    }
    entries_.push_back({std::move(op), std::move(output), std::move(backward)});
  }

  std::size_t size() const { return entries_.size(); }
  const Entry& entry(std::size_t i) const { return entries_.at(i); }
  bool consumed() const { return consumed_; }

  /// Propagates d(loss)/d(.) into the grad buffer of every tensor on the
  /// tape that requires a gradient. Leaf gradients accumulate.
  void backward(Tensor<Scalar> loss) {
    if (consumed_) {
      throw StateError("backward already ran on this tape");
    }
    if (loss.size() != 1) {
      throw std::invalid_argument("backward needs a scalar loss, got shape " +
                                  shape_string(loss.shape()));
    }
    auto last = entries_.end();
    while (last != entries_.begin() && !std::prev(last)->output.is_same(loss)) {
      --last;
    }
    if (last == entries_.begin()) {
      throw std::invalid_argument("loss tensor was not produced on this tape");
    }
    consumed_ = true;
    loss.grad()[0] += Scalar(1);
    for (auto it = std::make_reverse_iterator(last); it != entries_.rend();
         ++it) {
      if (it->output.has_grad()) it->backward();
    }
  }

 private:
  std::vector<Entry> entries_;
  bool consumed_ = false;
};

}  // namespace jnr

#endif  // JNR_TENSOR_HPP_
