#pragma once

// Forward/backward kernels for the 4x4, stride 2, padding 1 layers used by
// the eraser network, plus ReLU, skip merge and the squared-error loss.
//
// The batched kernels operate on Activations, which store a batch as a
// channels x (samples * height * width) row-major matrix. A single rank-3
// Tensor has the same memory layout as an Activations with one sample, so
// the per-tensor entry points are thin wrappers.

#include <Eigen/Core>

#include <algorithm>
#include <cmath>
#include <span>
#include <string>
#include <utility>
#include <vector>

#include "steraser/tensor.hpp"

namespace ste {

/// A batch of equally shaped feature maps, laid out [channel][sample][y][x].
template <class T>
class BasicActivations {
 public:
  BasicActivations() = default;
  BasicActivations(std::size_t samples, std::size_t channels, std::size_t height,
                   std::size_t width, T fill = T(0))
      : samples_(samples), channels_(channels), height_(height), width_(width) {
    if (samples == 0 || channels == 0 || height == 0 || width == 0)
      throw ContractError("activation dimensions must be >= 1");
    data_.assign(samples * channels * height * width, fill);
  }

  /// Adopts a single tensor (identical layout).
  explicit BasicActivations(BasicTensor<T> t)
      : samples_(1), channels_(t.channels()), height_(t.height()), width_(t.width()),
        data_(std::move(t.values())) {}

  static BasicActivations stack(std::span<const BasicTensor<T>> items) {
    if (items.empty()) throw ContractError("cannot stack an empty batch");
    const Shape s = items.front().shape();
    BasicActivations out(items.size(), s.channels, s.height, s.width);
    for (std::size_t n = 0; n < items.size(); ++n) {
      require_same_shape(items[n].shape(), s, "stack");
      for (std::size_t c = 0; c < s.channels; ++c)
        std::copy_n(items[n].data() + c * s.plane(), s.plane(), out.plane(c, n));
    }
    return out;
  }

  BasicTensor<T> sample(std::size_t n) const {
    BasicTensor<T> out(channels_, height_, width_);
    for (std::size_t c = 0; c < channels_; ++c)
      std::copy_n(plane(c, n), height_ * width_, out.data() + c * height_ * width_);
    return out;
  }

  std::size_t samples() const { return samples_; }
  std::size_t channels() const { return channels_; }
  std::size_t height() const { return height_; }
  std::size_t width() const { return width_; }
  std::size_t columns() const { return samples_ * height_ * width_; }
  std::size_t size() const { return data_.size(); }
  Shape sample_shape() const { return {channels_, height_, width_}; }

  T* data() { return data_.data(); }
  const T* data() const { return data_.data(); }
  std::vector<T>& values() { return data_; }
  const std::vector<T>& values() const { return data_; }
  T& operator[](std::size_t i) { return data_[i]; }
  const T& operator[](std::size_t i) const { return data_[i]; }

  T* plane(std::size_t c, std::size_t n) {
    return data_.data() + (c * samples_ + n) * height_ * width_;
  }
  const T* plane(std::size_t c, std::size_t n) const {
    return data_.data() + (c * samples_ + n) * height_ * width_;
  }

  bool same_geometry(const BasicActivations& o) const {
    return samples_ == o.samples_ && channels_ == o.channels_ && height_ == o.height_ &&
           width_ == o.width_;
  }
  std::string describe() const {
    return std::to_string(samples_) + "x" + std::to_string(channels_) + "x" +
           std::to_string(height_) + "x" + std::to_string(width_);
  }

  friend bool operator==(const BasicActivations&, const BasicActivations&) = default;

 private:
  std::size_t samples_ = 0, channels_ = 0, height_ = 0, width_ = 0;
  std::vector<T> data_;
};

using Activations = BasicActivations<double>;

template <class T>
struct BasicLayerGrads {
  BasicActivations<T> d_input;  // empty when not requested
  std::vector<T> d_weights;
  std::vector<T> d_bias;
};

namespace detail {

template <class T>
using RowMat = Eigen::Matrix<T, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;
template <class T>
using MatMap = Eigen::Map<RowMat<T>>;
template <class T>
using ConstMatMap = Eigen::Map<const RowMat<T>>;

constexpr std::size_t kK = 4;

inline void require_activations(bool ok, const std::string& what) {
  if (!ok) throw ContractError(what);
}

/// Gathers 4x4 windows of `big` (stride 2, pad 1) into a
/// (C*16) x (N * H/2 * W/2) matrix. Rows are (c, ky, kx).
template <class T>
RowMat<T> im2col(const BasicActivations<T>& big) {
  const std::size_t C = big.channels(), N = big.samples(), H = big.height(), W = big.width();
  const std::size_t Ho = H / 2, Wo = W / 2, P = N * Ho * Wo;
  RowMat<T> cols(C * kK * kK, P);
  for (std::size_t c = 0; c < C; ++c)
    for (std::size_t ky = 0; ky < kK; ++ky)
      for (std::size_t kx = 0; kx < kK; ++kx) {
        T* row = cols.data() + ((c * kK + ky) * kK + kx) * P;
        for (std::size_t n = 0; n < N; ++n) {
          const T* src = big.plane(c, n);
          for (std::size_t i = 0; i < Ho; ++i) {
            const long y = static_cast<long>(2 * i + ky) - 1;
            T* dst = row + (n * Ho + i) * Wo;
            if (y < 0 || y >= static_cast<long>(H)) {
              std::fill_n(dst, Wo, T(0));
              continue;
            }
            const T* srow = src + static_cast<std::size_t>(y) * W;
            for (std::size_t j = 0; j < Wo; ++j) {
              const long x = static_cast<long>(2 * j + kx) - 1;
              dst[j] = (x < 0 || x >= static_cast<long>(W)) ? T(0) : srow[x];
            }
          }
        }
      }
  return cols;
}

/// Adjoint of im2col: scatter-adds columns back into `big` (which must be
/// zero-initialized or hold values to accumulate onto).
template <class T>
void col2im(const RowMat<T>& cols, BasicActivations<T>& big) {
  const std::size_t C = big.channels(), N = big.samples(), H = big.height(), W = big.width();
  const std::size_t Ho = H / 2, Wo = W / 2, P = N * Ho * Wo;
  for (std::size_t c = 0; c < C; ++c)
    for (std::size_t ky = 0; ky < kK; ++ky)
      for (std::size_t kx = 0; kx < kK; ++kx) {
        const T* row = cols.data() + ((c * kK + ky) * kK + kx) * P;
        for (std::size_t n = 0; n < N; ++n) {
          T* dst = big.plane(c, n);
          for (std::size_t i = 0; i < Ho; ++i) {
            const long y = static_cast<long>(2 * i + ky) - 1;
            if (y < 0 || y >= static_cast<long>(H)) continue;
            const T* src = row + (n * Ho + i) * Wo;
            T* drow = dst + static_cast<std::size_t>(y) * W;
            for (std::size_t j = 0; j < Wo; ++j) {
              const long x = static_cast<long>(2 * j + kx) - 1;
              if (x >= 0 && x < static_cast<long>(W)) drow[x] += src[j];
            }
          }
        }
      }
}

template <class T>
void add_bias(BasicActivations<T>& a, const std::vector<T>& bias) {
  const std::size_t span = a.samples() * a.height() * a.width();
  for (std::size_t c = 0; c < a.channels(); ++c) {
    T* p = a.data() + c * span;
    const T b = bias[c];
    for (std::size_t i = 0; i < span; ++i) p[i] += b;
  }
}

template <class T>
std::vector<T> channel_sums(const BasicActivations<T>& a) {
  std::vector<T> out(a.channels(), T(0));
  const std::size_t span = a.samples() * a.height() * a.width();
  for (std::size_t c = 0; c < a.channels(); ++c) {
    const T* p = a.data() + c * span;
    T s = T(0);
    for (std::size_t i = 0; i < span; ++i) s += p[i];
    out[c] = s;
  }
  return out;
}

/// Rearranges out x in x 4 x 4 weights into an (out*16) x in matrix for the
/// transposed convolution.
template <class T>
RowMat<T> deconv_weight_matrix(const BasicConvParams<T>& p) {
  RowMat<T> wt(p.out_channels * kK * kK, p.in_channels);
  for (std::size_t o = 0; o < p.out_channels; ++o)
    for (std::size_t c = 0; c < p.in_channels; ++c)
      for (std::size_t k = 0; k < kK * kK; ++k)
        wt(o * kK * kK + k, c) = p.weights[(o * p.in_channels + c) * kK * kK + k];
  return wt;
}

template <class T>
void check_params(const BasicConvParams<T>& p, const char* what) {
  if (p.weights.size() != p.out_channels * p.in_channels * kK * kK ||
      p.bias.size() != p.out_channels)
    throw ContractError(std::string(what) + ": parameter arrays inconsistent with " +
                        std::to_string(p.out_channels) + "x" + std::to_string(p.in_channels) +
                        "x4x4");
}

template <class T>
void check_conv_input(const BasicActivations<T>& x, const BasicConvParams<T>& p) {
  check_params(p, "conv");
  require_activations(x.channels() == p.in_channels,
                      "conv: input has " + std::to_string(x.channels()) +
                          " channels, layer expects " + std::to_string(p.in_channels) +
                          " (input " + x.describe() + ")");
  require_activations(x.height() >= 2 && x.width() >= 2 && x.height() % 2 == 0 &&
                          x.width() % 2 == 0,
                      "conv: spatial size must be even and >= 2, got " + x.describe());
}

template <class T>
void check_deconv_input(const BasicActivations<T>& x, const BasicConvParams<T>& p) {
  check_params(p, "deconv");
  require_activations(x.channels() == p.in_channels,
                      "deconv: input has " + std::to_string(x.channels()) +
                          " channels, layer expects " + std::to_string(p.in_channels) +
                          " (input " + x.describe() + ")");
}

}  // namespace detail

// ---------------------------------------------------------------------------
// Batched layer kernels

template <class T>
BasicActivations<T> conv_forward(const BasicActivations<T>& x, const BasicConvParams<T>& p) {
  using namespace detail;
  check_conv_input(x, p);
  BasicActivations<T> y(x.samples(), p.out_channels, x.height() / 2, x.width() / 2);
  const RowMat<T> cols = im2col(x);
  ConstMatMap<T> w(p.weights.data(), p.out_channels, p.in_channels * kK * kK);
  MatMap<T> out(y.data(), p.out_channels, y.columns());
  out.noalias() = w * cols;
  add_bias(y, p.bias);
  return y;
}

template <class T>
BasicLayerGrads<T> conv_backward(const BasicActivations<T>& x, const BasicConvParams<T>& p,
                                 const BasicActivations<T>& dy, bool need_input_grad = true) {
  using namespace detail;
  check_conv_input(x, p);
  require_activations(dy.samples() == x.samples() && dy.channels() == p.out_channels &&
                          dy.height() == x.height() / 2 && dy.width() == x.width() / 2,
                      "conv_backward: upstream gradient " + dy.describe() +
                          " does not match forward output shape for input " + x.describe());
  BasicLayerGrads<T> g;
  const RowMat<T> cols = im2col(x);
  ConstMatMap<T> w(p.weights.data(), p.out_channels, p.in_channels * kK * kK);
  ConstMatMap<T> d(dy.data(), p.out_channels, dy.columns());
  g.d_weights.resize(p.weights.size());
  MatMap<T> dw(g.d_weights.data(), p.out_channels, p.in_channels * kK * kK);
  dw.noalias() = d * cols.transpose();
  g.d_bias = channel_sums(dy);
  if (need_input_grad) {
    const RowMat<T> dcols = w.transpose() * d;
    g.d_input = BasicActivations<T>(x.samples(), x.channels(), x.height(), x.width());
    col2im(dcols, g.d_input);
  }
  return g;
}

template <class T>
BasicActivations<T> deconv_forward(const BasicActivations<T>& x, const BasicConvParams<T>& p) {
  using namespace detail;
  check_deconv_input(x, p);
  BasicActivations<T> y(x.samples(), p.out_channels, x.height() * 2, x.width() * 2);
  const RowMat<T> wt = deconv_weight_matrix(p);
  ConstMatMap<T> in(x.data(), p.in_channels, x.columns());
  const RowMat<T> cols = wt * in;
  col2im(cols, y);
  add_bias(y, p.bias);
  return y;
}

template <class T>
BasicLayerGrads<T> deconv_backward(const BasicActivations<T>& x, const BasicConvParams<T>& p,
                                   const BasicActivations<T>& dy,
                                   bool need_input_grad = true) {
  using namespace detail;
  check_deconv_input(x, p);
  require_activations(dy.samples() == x.samples() && dy.channels() == p.out_channels &&
                          dy.height() == x.height() * 2 && dy.width() == x.width() * 2,
                      "deconv_backward: upstream gradient " + dy.describe() +
                          " does not match forward output shape for input " + x.describe());
  BasicLayerGrads<T> g;
  const RowMat<T> dcols = im2col(dy);
  ConstMatMap<T> in(x.data(), p.in_channels, x.columns());
  const RowMat<T> dwt = dcols * in.transpose();
  g.d_weights.resize(p.weights.size());
  for (std::size_t o = 0; o < p.out_channels; ++o)
    for (std::size_t c = 0; c < p.in_channels; ++c)
      for (std::size_t k = 0; k < kK * kK; ++k)
        g.d_weights[(o * p.in_channels + c) * kK * kK + k] = dwt(o * kK * kK + k, c);
  g.d_bias = channel_sums(dy);
  if (need_input_grad) {
    const RowMat<T> wt = deconv_weight_matrix(p);
    g.d_input = BasicActivations<T>(x.samples(), x.channels(), x.height(), x.width());
    MatMap<T> dx(g.d_input.data(), p.in_channels, x.columns());
    dx.noalias() = wt.transpose() * dcols;
  }
  return g;
}

// ---------------------------------------------------------------------------
// Single-tensor entry points

namespace detail {
template <class T>
BasicGradBundle<T> to_bundle(BasicLayerGrads<T> g) {
  return {g.d_input.sample(0), std::move(g.d_weights), std::move(g.d_bias)};
}
}  // namespace detail

template <class T>
BasicTensor<T> conv_forward(const BasicTensor<T>& x, const BasicConvParams<T>& p) {
  return conv_forward(BasicActivations<T>(x), p).sample(0);
}

template <class T>
BasicGradBundle<T> conv_backward(const BasicTensor<T>& x, const BasicConvParams<T>& p,
                                 const BasicTensor<T>& dy) {
  return detail::to_bundle(conv_backward(BasicActivations<T>(x), p, BasicActivations<T>(dy)));
}

template <class T>
BasicTensor<T> deconv_forward(const BasicTensor<T>& x, const BasicConvParams<T>& p) {
  return deconv_forward(BasicActivations<T>(x), p).sample(0);
}

template <class T>
BasicGradBundle<T> deconv_backward(const BasicTensor<T>& x, const BasicConvParams<T>& p,
                                   const BasicTensor<T>& dy) {
  return detail::to_bundle(deconv_backward(BasicActivations<T>(x), p, BasicActivations<T>(dy)));
}

// ---------------------------------------------------------------------------
// Elementwise ops. Containers are any of BasicTensor / BasicActivations.

template <class Container>
Container relu(Container x) {
  for (auto& v : x.values()) v = v > 0 ? v : 0;
  return x;
}

template <class Container>
Container relu_backward(const Container& input, Container d_output) {
  if (input.size() != d_output.size()) throw ContractError("relu_backward: shape mismatch");
  for (std::size_t i = 0; i < input.size(); ++i)
    if (!(input[i] > 0)) d_output[i] = 0;
  return d_output;
}

template <class T>
BasicTensor<T> relu_backward(const BasicTensor<T>& input, BasicTensor<T> d_output) {
  require_same_shape(input.shape(), d_output.shape(), "relu_backward");
  for (std::size_t i = 0; i < input.size(); ++i)
    if (!(input[i] > 0)) d_output[i] = 0;
  return d_output;
}

/// max(0, x1 + x2), elementwise.
template <class T>
BasicTensor<T> skip_merge(const BasicTensor<T>& x1, const BasicTensor<T>& x2) {
  require_same_shape(x1.shape(), x2.shape(), "skip_merge");
  BasicTensor<T> out(x1.shape());
  for (std::size_t i = 0; i < out.size(); ++i) {
    const T s = x1[i] + x2[i];
    out[i] = s > 0 ? s : T(0);
  }
  return out;
}

template <class T>
BasicActivations<T> skip_merge(const BasicActivations<T>& x1, const BasicActivations<T>& x2) {
  if (!x1.same_geometry(x2))
    throw ContractError("skip_merge: shape mismatch " + x1.describe() + " vs " + x2.describe());
  BasicActivations<T> out = x1;
  for (std::size_t i = 0; i < out.size(); ++i) {
    const T s = x1[i] + x2[i];
    out[i] = s > 0 ? s : T(0);
  }
  return out;
}

/// Gradient of skip_merge; the same tensor flows to both summands.
template <class Container>
Container skip_merge_backward(const Container& merged, Container d_output) {
  if (merged.size() != d_output.size())
    throw ContractError("skip_merge_backward: shape mismatch");
  for (std::size_t i = 0; i < merged.size(); ++i)
    if (!(merged[i] > 0)) d_output[i] = 0;
  return d_output;
}

template <class T>
struct BasicLoss {
  T loss = T(0);
  BasicActivations<T> d_pred;
};

/// (1/N) * sum_i ||pred_i - target_i||^2 over the N samples of a batch.
template <class T>
BasicLoss<T> mse_loss(const BasicActivations<T>& pred, const BasicActivations<T>& target) {
  if (!pred.same_geometry(target))
    throw ContractError("mse_loss: shape mismatch " + pred.describe() + " vs " +
                        target.describe());
  const T n = static_cast<T>(pred.samples());
  BasicLoss<T> out{T(0), pred};
  T sum = T(0);
  for (std::size_t i = 0; i < pred.size(); ++i) {
    const T diff = pred[i] - target[i];
    sum += diff * diff;
    out.d_pred[i] = T(2) * diff / n;
  }
  out.loss = sum / n;
  return out;
}

template <class T>
std::pair<T, BasicTensor<T>> mse_loss(const BasicTensor<T>& pred, const BasicTensor<T>& target) {
  require_same_shape(pred.shape(), target.shape(), "mse_loss");
  auto r = mse_loss(BasicActivations<T>(pred), BasicActivations<T>(target));
  return {r.loss, r.d_pred.sample(0)};
}

/// Batch form over parallel lists of samples.
template <class T>
std::pair<T, std::vector<BasicTensor<T>>> mse_loss(std::span<const BasicTensor<T>> preds,
                                                   std::span<const BasicTensor<T>> targets) {
  if (preds.size() != targets.size())
    throw ContractError("mse_loss: batch sizes differ (" + std::to_string(preds.size()) +
                        " vs " + std::to_string(targets.size()) + ")");
  auto r = mse_loss(BasicActivations<T>::stack(preds), BasicActivations<T>::stack(targets));
  std::vector<BasicTensor<T>> grads;
  grads.reserve(preds.size());
  for (std::size_t n = 0; n < preds.size(); ++n) grads.push_back(r.d_pred.sample(n));
  return {r.loss, std::move(grads)};
}

}  // namespace ste
