#ifndef JNR_OPS_HPP_
#define JNR_OPS_HPP_

#include <Eigen/Core>

#include <algorithm>
#include <cmath>
#include <limits>
#include <span>
#include <stdexcept>
#include <string>
#include <utility>
#include <vector>

#include "jnr/random.hpp"
#include "jnr/tensor.hpp"

// Layer operations over Tensor<Scalar>. Each takes an optional Tape as its
// last argument; when the tape is null (or no input requires a gradient)
// nothing is recorded and the call is a plain forward evaluation.

namespace jnr {

namespace detail {

// While non-null, relu and maxpool fold the branch they take (active mask,
// argmax positions) into this fingerprint. Two evaluations with equal
// fingerprints lie on the same linear piece.
inline thread_local std::uint64_t* branch_fingerprint = nullptr;

inline void fold_branch(std::uint64_t value) {
  if (branch_fingerprint) *branch_fingerprint = mix_seed(*branch_fingerprint, value);
}

template <typename Scalar, typename... Ts>
bool tracking(Tape<Scalar>* tape, const Ts&... inputs) {
  return tape != nullptr && (inputs.requires_grad() || ...);
}

inline void require_rank(const char* op, const Shape& shape, std::size_t rank) {
  if (shape.size() != rank) {
    throw ShapeError(std::string(op) + ": expected rank " +
                     std::to_string(rank) + ", got " + shape_string(shape));
  }
}

// Writes exp(z - max z) to `e` with plain loops and returns (max, sum).
// Vectorised Eigen reductions peel differently with row alignment, so a
// row's result would depend on its position in the batch.
template <typename Scalar>
std::pair<Scalar, Scalar> shifted_exp(const Scalar* z, Scalar* e, Index k) {
  Scalar m = z[0];
  for (Index i = 1; i < k; ++i) m = std::max(m, z[i]);
  Scalar sum = 0;
  for (Index i = 0; i < k; ++i) {
    e[i] = std::exp(z[i] - m);
    sum += e[i];
  }
  return {m, sum};
}

template <typename Scalar>
void accumulate(const Tensor<Scalar>& t, const VectorX<Scalar>& g) {
  if (t.requires_grad()) t.grad() += g;
}

struct ConvGeometry {
  Index batch, channels, height, width;
  Index filters, kh, kw;
  Index stride, padding;
  Index out_h, out_w;

  Index patch() const { return channels * kh * kw; }
  Index pixels() const { return out_h * out_w; }
  bool pointwise() const {
    return kh == 1 && kw == 1 && stride == 1 && padding == 0;
  }
};

// Unfolds one image [C,H,W] into a (C*kh*kw) x (out_h*out_w) patch matrix.
template <typename Scalar>
void im2col(const ConvGeometry& g, const Scalar* image, RowMatrixX<Scalar>& cols) {
  cols.resize(g.patch(), g.pixels());
  for (Index c = 0; c < g.channels; ++c) {
    const Scalar* plane = image + c * g.height * g.width;
    for (Index ki = 0; ki < g.kh; ++ki) {
      for (Index kj = 0; kj < g.kw; ++kj) {
        Scalar* row = cols.row((c * g.kh + ki) * g.kw + kj).data();
        for (Index oh = 0; oh < g.out_h; ++oh) {
          const Index ih = oh * g.stride - g.padding + ki;
          Scalar* dst = row + oh * g.out_w;
          if (ih < 0 || ih >= g.height) {
            std::fill(dst, dst + g.out_w, Scalar(0));
            continue;
          }
          const Scalar* src = plane + ih * g.width;
          for (Index ow = 0; ow < g.out_w; ++ow) {
            const Index iw = ow * g.stride - g.padding + kj;
            dst[ow] = (iw >= 0 && iw < g.width) ? src[iw] : Scalar(0);
          }
        }
      }
    }
  }
}

// Adjoint of im2col: scatters patch-matrix gradients back onto the image.
template <typename Scalar>
void col2im_add(const ConvGeometry& g, const RowMatrixX<Scalar>& cols,
                Scalar* image) {
  for (Index c = 0; c < g.channels; ++c) {
    Scalar* plane = image + c * g.height * g.width;
    for (Index ki = 0; ki < g.kh; ++ki) {
      for (Index kj = 0; kj < g.kw; ++kj) {
        const Scalar* row = cols.row((c * g.kh + ki) * g.kw + kj).data();
        for (Index oh = 0; oh < g.out_h; ++oh) {
          const Index ih = oh * g.stride - g.padding + ki;
          if (ih < 0 || ih >= g.height) continue;
          Scalar* dst = plane + ih * g.width;
          const Scalar* src = row + oh * g.out_w;
          for (Index ow = 0; ow < g.out_w; ++ow) {
            const Index iw = ow * g.stride - g.padding + kj;
            if (iw >= 0 && iw < g.width) dst[iw] += src[ow];
          }
        }
      }
    }
  }
}

}  // namespace detail

/// 2-D cross-correlation with zero padding. input [N,C,H,W], kernel
/// [F,C,kh,kw], bias [F] -> [N,F,H',W'].
template <typename Scalar>
Tensor<Scalar> conv2d(const Tensor<Scalar>& input, const Tensor<Scalar>& kernel,
                      const Tensor<Scalar>& bias, Index stride, Index padding,
                      Tape<Scalar>* tape = nullptr) {
  detail::require_rank("conv2d input", input.shape(), 4);
  detail::require_rank("conv2d kernel", kernel.shape(), 4);
  detail::require_rank("conv2d bias", bias.shape(), 1);
  if (stride < 1) throw std::invalid_argument("conv2d: stride must be >= 1");
  if (padding < 0) throw std::invalid_argument("conv2d: padding must be >= 0");

  detail::ConvGeometry g{};
  g.batch = input.dim(0);
  g.channels = input.dim(1);
  g.height = input.dim(2);
  g.width = input.dim(3);
  g.filters = kernel.dim(0);
  g.kh = kernel.dim(2);
  g.kw = kernel.dim(3);
  g.stride = stride;
  g.padding = padding;
  if (kernel.dim(1) != g.channels) {
    throw ShapeError("conv2d: input has " + std::to_string(g.channels) +
                     " channels but kernel expects " +
                     std::to_string(kernel.dim(1)));
  }
  if (bias.dim(0) != g.filters) {
    throw ShapeError("conv2d: bias length does not match filter count");
  }
  if (g.kh > g.height + 2 * padding || g.kw > g.width + 2 * padding) {
    throw ShapeError("conv2d: kernel larger than padded input");
  }
  g.out_h = (g.height + 2 * padding - g.kh) / stride + 1;
  g.out_w = (g.width + 2 * padding - g.kw) / stride + 1;

  using Mat = RowMatrixX<Scalar>;
  using ConstMap = Eigen::Map<const Mat>;
  using MutMap = Eigen::Map<Mat>;

  Tensor<Scalar> out({g.batch, g.filters, g.out_h, g.out_w});
  const Index in_stride = g.channels * g.height * g.width;
  const Index out_stride = g.filters * g.pixels();
  ConstMap weights(kernel.data().data(), g.filters, g.patch());
  Mat cols;
  for (Index n = 0; n < g.batch; ++n) {
    const Scalar* image = input.data().data() + n * in_stride;
    MutMap y(out.data().data() + n * out_stride, g.filters, g.pixels());
    if (g.pointwise()) {
      y.noalias() = weights * ConstMap(image, g.channels, g.pixels());
    } else {
      detail::im2col(g, image, cols);
      y.noalias() = weights * cols;
    }
    y.colwise() += bias.data();
  }

  if (detail::tracking(tape, input, kernel, bias)) {
    out.set_requires_grad(true);
    tape->record("conv2d", out, [=]() mutable {
      ConstMap w(kernel.data().data(), g.filters, g.patch());
      Mat cols_b;
      Mat dcols;
      for (Index n = 0; n < g.batch; ++n) {
        const Scalar* image = input.data().data() + n * in_stride;
        ConstMap gy(out.grad().data() + n * out_stride, g.filters, g.pixels());
        if (bias.requires_grad()) bias.grad() += gy.rowwise().sum();
        if (g.pointwise()) {
          if (kernel.requires_grad()) {
            MutMap(kernel.grad().data(), g.filters, g.patch()).noalias() +=
                gy * ConstMap(image, g.channels, g.pixels()).transpose();
          }
          if (input.requires_grad()) {
            MutMap(input.grad().data() + n * in_stride, g.channels, g.pixels())
                .noalias() += w.transpose() * gy;
          }
          continue;
        }
        if (kernel.requires_grad()) {
          detail::im2col(g, image, cols_b);
          MutMap(kernel.grad().data(), g.filters, g.patch()).noalias() +=
              gy * cols_b.transpose();
        }
        if (input.requires_grad()) {
          dcols.noalias() = w.transpose() * gy;
          detail::col2im_add(g, dcols, input.grad().data() + n * in_stride);
        }
      }
    });
  }
  return out;
}

/// Max pooling over k x k windows. Gradient flows to the first (lowest
/// flat index) maximum of each window.
template <typename Scalar>
Tensor<Scalar> maxpool2d(const Tensor<Scalar>& input, Index k, Index stride,
                         Tape<Scalar>* tape = nullptr) {
  if (k <= 0) throw std::invalid_argument("maxpool2d: window must be positive");
  if (stride <= 0) throw std::invalid_argument("maxpool2d: stride must be positive");
  detail::require_rank("maxpool2d input", input.shape(), 4);
  const Index N = input.dim(0), C = input.dim(1), H = input.dim(2),
              W = input.dim(3);
  if (k > H || k > W) throw ShapeError("maxpool2d: window larger than input");
  const Index OH = (H - k) / stride + 1, OW = (W - k) / stride + 1;

  Tensor<Scalar> out({N, C, OH, OW});
  std::vector<Index> argmax(static_cast<std::size_t>(out.size()));
  const Scalar* x = input.data().data();
  Index o = 0;
  for (Index plane = 0; plane < N * C; ++plane) {
    const Index base = plane * H * W;
    for (Index oh = 0; oh < OH; ++oh) {
      for (Index ow = 0; ow < OW; ++ow, ++o) {
        Index best = base + (oh * stride) * W + ow * stride;
        for (Index i = 0; i < k; ++i) {
          for (Index j = 0; j < k; ++j) {
            const Index idx = base + (oh * stride + i) * W + ow * stride + j;
            if (x[idx] > x[best]) best = idx;
          }
        }
        argmax[static_cast<std::size_t>(o)] = best;
        out[o] = x[best];
        if (detail::branch_fingerprint) detail::fold_branch(static_cast<std::uint64_t>(best));
      }
    }
  }

  if (detail::tracking(tape, input)) {
    out.set_requires_grad(true);
    tape->record("maxpool2d", out, [=]() mutable {
      auto& gin = input.grad();
      const auto& gout = out.grad();
      for (Index i = 0; i < gout.size(); ++i) {
        gin[argmax[static_cast<std::size_t>(i)]] += gout[i];
      }
    });
  }
  return out;
}

template <typename Scalar>
Tensor<Scalar> relu(const Tensor<Scalar>& input, Tape<Scalar>* tape = nullptr) {
  Tensor<Scalar> out(input.shape(), input.data().cwiseMax(Scalar(0)));
  if (detail::branch_fingerprint) {
    std::uint64_t word = 0;
    for (Index i = 0; i < input.size(); ++i) {
      word = (word << 1) | (input[i] > Scalar(0));
      if (i % 64 == 63) detail::fold_branch(word);
    }
    detail::fold_branch(word);
  }
  if (detail::tracking(tape, input)) {
    out.set_requires_grad(true);
    tape->record("relu", out, [=]() mutable {
      input.grad().array() +=
          (input.data().array() > Scalar(0)).select(out.grad().array(), Scalar(0));
    });
  }
  return out;
}

/// input [N,D] x weight [D,K] + bias [K] -> [N,K].
template <typename Scalar>
Tensor<Scalar> linear(const Tensor<Scalar>& input, const Tensor<Scalar>& weight,
                      const Tensor<Scalar>& bias, Tape<Scalar>* tape = nullptr) {
  detail::require_rank("linear input", input.shape(), 2);
  detail::require_rank("linear weight", weight.shape(), 2);
  detail::require_rank("linear bias", bias.shape(), 1);
  const Index N = input.dim(0), D = input.dim(1), K = weight.dim(1);
  if (weight.dim(0) != D) {
    throw ShapeError("linear: input width " + std::to_string(D) +
                     " does not match weight rows " +
                     std::to_string(weight.dim(0)));
  }
  if (bias.dim(0) != K) throw ShapeError("linear: bias length mismatch");

  using Mat = RowMatrixX<Scalar>;
  using ConstMap = Eigen::Map<const Mat>;
  using MutMap = Eigen::Map<Mat>;
  Tensor<Scalar> out({N, K});
  MutMap y(out.data().data(), N, K);
  const ConstMap x(input.data().data(), N, D);
  const ConstMap w(weight.data().data(), D, K);
  // Row at a time: a batched GEMM may round a row differently depending on
  // its position in the batch, and outputs must not depend on batch layout.
  for (Index n = 0; n < N; ++n) {
    y.row(n).noalias() = x.row(n) * w;
    y.row(n) += bias.data().transpose();
  }

  if (detail::tracking(tape, input, weight, bias)) {
    out.set_requires_grad(true);
    tape->record("linear", out, [=]() mutable {
      ConstMap gy(out.grad().data(), N, K);
      if (input.requires_grad()) {
        MutMap(input.grad().data(), N, D).noalias() +=
            gy * ConstMap(weight.data().data(), D, K).transpose();
      }
      if (weight.requires_grad()) {
        MutMap(weight.grad().data(), D, K).noalias() +=
            ConstMap(input.data().data(), N, D).transpose() * gy;
      }
      if (bias.requires_grad()) bias.grad() += gy.colwise().sum().transpose();
    });
  }
  return out;
}

/// Row-wise softmax of [N,K] logits, max-subtracted.
template <typename Scalar>
Tensor<Scalar> softmax(const Tensor<Scalar>& logits, Tape<Scalar>* tape = nullptr) {
  detail::require_rank("softmax logits", logits.shape(), 2);
  const Index N = logits.dim(0), K = logits.dim(1);
  using Mat = RowMatrixX<Scalar>;
  Tensor<Scalar> out({N, K});
  for (Index n = 0; n < N; ++n) {
    Scalar* row = out.data().data() + n * K;
    const auto [m, sum] = detail::shifted_exp(logits.data().data() + n * K, row, K);
    for (Index i = 0; i < K; ++i) row[i] /= sum;
  }
  if (detail::tracking(tape, logits)) {
    out.set_requires_grad(true);
    tape->record("softmax", out, [=]() mutable {
      Eigen::Map<const Mat> p(out.data().data(), N, K);
      Eigen::Map<const Mat> gy(out.grad().data(), N, K);
      Eigen::Map<Mat> gz(logits.grad().data(), N, K);
      for (Index n = 0; n < N; ++n) {
        const Scalar dot = gy.row(n).dot(p.row(n));
        gz.row(n).array() += p.row(n).array() * (gy.row(n).array() - dot);
      }
    });
  }
  return out;
}

template <typename Scalar>
Tensor<Scalar> add(const Tensor<Scalar>& a, const Tensor<Scalar>& b,
                   Tape<Scalar>* tape = nullptr) {
  if (a.shape() != b.shape()) {
    throw ShapeError("add: shapes " + shape_string(a.shape()) + " and " +
                     shape_string(b.shape()) + " differ");
  }
  Tensor<Scalar> out(a.shape(), a.data() + b.data());
  if (detail::tracking(tape, a, b)) {
    out.set_requires_grad(true);
    tape->record("add", out, [=]() mutable {
      detail::accumulate(a, out.grad());
      detail::accumulate(b, out.grad());
    });
  }
  return out;
}

template <typename Scalar>
Tensor<Scalar> mul(const Tensor<Scalar>& a, const Tensor<Scalar>& b,
                   Tape<Scalar>* tape = nullptr) {
  if (a.shape() != b.shape()) {
    throw ShapeError("mul: shapes " + shape_string(a.shape()) + " and " +
                     shape_string(b.shape()) + " differ");
  }
  Tensor<Scalar> out(a.shape(), a.data().cwiseProduct(b.data()));
  if (detail::tracking(tape, a, b)) {
    out.set_requires_grad(true);
    tape->record("mul", out, [=]() mutable {
      detail::accumulate(a, VectorX<Scalar>(out.grad().cwiseProduct(b.data())));
      detail::accumulate(b, VectorX<Scalar>(out.grad().cwiseProduct(a.data())));
    });
  }
  return out;
}

template <typename Scalar>
Tensor<Scalar> scale(const Tensor<Scalar>& a, Scalar factor,
                     Tape<Scalar>* tape = nullptr) {
  Tensor<Scalar> out(a.shape(), a.data() * factor);
  if (detail::tracking(tape, a)) {
    out.set_requires_grad(true);
    tape->record("scale", out, [=]() mutable {
      detail::accumulate(a, VectorX<Scalar>(out.grad() * factor));
    });
  }
  return out;
}

template <typename Scalar>
Tensor<Scalar> sum(const Tensor<Scalar>& a, Tape<Scalar>* tape = nullptr) {
  Tensor<Scalar> out = Tensor<Scalar>::scalar(a.data().sum());
  if (detail::tracking(tape, a)) {
    out.set_requires_grad(true);
    tape->record("sum", out, [=]() mutable {
      a.grad().array() += out.grad()[0];
    });
  }
  return out;
}

template <typename Scalar>
Tensor<Scalar> reshape(const Tensor<Scalar>& a, Shape shape,
                       Tape<Scalar>* tape = nullptr) {
  Tensor<Scalar> out = a.reshaped(std::move(shape));
  if (detail::tracking(tape, a)) {
    out.set_requires_grad(true);
    tape->record("reshape", out, [=]() mutable {
      detail::accumulate(a, out.grad());
    });
  }
  return out;
}

/// [N,C,H,W] -> [N,C] spatial mean.
template <typename Scalar>
Tensor<Scalar> global_avg_pool(const Tensor<Scalar>& input,
                               Tape<Scalar>* tape = nullptr) {
  detail::require_rank("global_avg_pool input", input.shape(), 4);
  const Index N = input.dim(0), C = input.dim(1);
  const Index P = input.dim(2) * input.dim(3);
  using Mat = RowMatrixX<Scalar>;
  Tensor<Scalar> out({N, C});
  // Plain loop for the same batch-position independence as softmax.
  const Scalar* x = input.data().data();
  for (Index r = 0; r < N * C; ++r) {
    Scalar sum = 0;
    for (Index p = 0; p < P; ++p) sum += x[r * P + p];
    out[r] = sum / Scalar(P);
  }
  if (detail::tracking(tape, input)) {
    out.set_requires_grad(true);
    tape->record("global_avg_pool", out, [=]() mutable {
      Eigen::Map<Mat> gx(input.grad().data(), N * C, P);
      gx.colwise() += out.grad() / Scalar(P);
    });
  }
  return out;
}

/// Mean over rows of -log softmax(logits)[target], fused via log-sum-exp.
template <typename Scalar>
Tensor<Scalar> softmax_cross_entropy(const Tensor<Scalar>& logits,
                                     std::span<const int> targets,
                                     Tape<Scalar>* tape = nullptr) {
  detail::require_rank("softmax_cross_entropy logits", logits.shape(), 2);
  const Index N = logits.dim(0), K = logits.dim(1);
  if (static_cast<Index>(targets.size()) != N) {
    throw ShapeError("softmax_cross_entropy: target count does not match batch");
  }
  using Mat = RowMatrixX<Scalar>;
  Eigen::Map<const Mat> z(logits.data().data(), N, K);
  Mat probs(N, K);
  Scalar total = 0;
  for (Index n = 0; n < N; ++n) {
    const int t = targets[static_cast<std::size_t>(n)];
    if (t < 0 || t >= K) {
      throw std::out_of_range("softmax_cross_entropy: target index out of range");
    }
    Scalar* row = probs.data() + n * K;
    const auto [m, denom] = detail::shifted_exp(z.data() + n * K, row, K);
    for (Index i = 0; i < K; ++i) row[i] /= denom;
    total += m + std::log(denom) - z(n, t);
  }
  Tensor<Scalar> out = Tensor<Scalar>::scalar(total / Scalar(N));
  if (detail::tracking(tape, logits)) {
    out.set_requires_grad(true);
    std::vector<int> tgt(targets.begin(), targets.end());
    tape->record("softmax_cross_entropy", out,
                 [=, probs = std::move(probs), tgt = std::move(tgt)]() mutable {
                   const Scalar g = out.grad()[0] / Scalar(N);
                   Eigen::Map<Mat> gz(logits.grad().data(), N, K);
                   gz += g * probs;
                   for (Index n = 0; n < N; ++n) {
                     gz(n, tgt[static_cast<std::size_t>(n)]) -= g;
                   }
                 });
  }
  return out;
}

/// Mean over rows of -log(max(p[target], 1e-12)) for already-normalised
/// probabilities. Clamped entries receive no gradient.
template <typename Scalar>
Tensor<Scalar> cross_entropy(const Tensor<Scalar>& probs,
                             std::span<const int> targets,
                             Tape<Scalar>* tape = nullptr) {
  detail::require_rank("cross_entropy probs", probs.shape(), 2);
  const Index N = probs.dim(0), K = probs.dim(1);
  if (static_cast<Index>(targets.size()) != N) {
    throw ShapeError("cross_entropy: target count does not match batch");
  }
  constexpr Scalar kFloor = Scalar(1e-12);
  Scalar total = 0;
  for (Index n = 0; n < N; ++n) {
    const int t = targets[static_cast<std::size_t>(n)];
    if (t < 0 || t >= K) {
      throw std::out_of_range("cross_entropy: target index out of range");
    }
    total -= std::log(std::max(probs[n * K + t], kFloor));
  }
  Tensor<Scalar> out = Tensor<Scalar>::scalar(total / Scalar(N));
  if (detail::tracking(tape, probs)) {
    out.set_requires_grad(true);
    std::vector<int> tgt(targets.begin(), targets.end());
    tape->record("cross_entropy", out, [=, tgt = std::move(tgt)]() mutable {
      const Scalar g = out.grad()[0] / Scalar(N);
      for (Index n = 0; n < N; ++n) {
        const Index i = n * K + tgt[static_cast<std::size_t>(n)];
        if (probs[i] > kFloor) probs.grad()[i] -= g / probs[i];
      }
    });
  }
  return out;
}

}  // namespace jnr

#endif  // JNR_OPS_HPP_
