#pragma once

#include <cstddef>
#include <sstream>
#include <stdexcept>
#include <string>
#include <utility>
#include <vector>

namespace ste {

/// Raised when a caller violates a kernel or model precondition (shapes, ranges).
class ContractError : public std::invalid_argument {
 public:
  using std::invalid_argument::invalid_argument;
};

/// Non-finite values produced during training.
class NumericError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

struct Shape {
  std::size_t channels = 1;
  std::size_t height = 1;
  std::size_t width = 1;

  std::size_t plane() const { return height * width; }
  std::size_t size() const { return channels * height * width; }
  friend bool operator==(const Shape&, const Shape&) = default;
};

inline std::string to_string(const Shape& s) {
  std::ostringstream os;
  os << s.channels << "x" << s.height << "x" << s.width;
  return os.str();
}

/// Dense rank-3 array, channel-major then row-major.
template <class T>
class BasicTensor {
 public:
  using value_type = T;

  BasicTensor() : BasicTensor(Shape{}) {}
  explicit BasicTensor(Shape shape, T fill = T(0)) : shape_(shape) {
    if (shape.channels == 0 || shape.height == 0 || shape.width == 0)
      throw ContractError("tensor dimensions must be >= 1, got " + to_string(shape));
    data_.assign(shape.size(), fill);
  }
  BasicTensor(std::size_t c, std::size_t h, std::size_t w, T fill = T(0))
      : BasicTensor(Shape{c, h, w}, fill) {}
  BasicTensor(Shape shape, std::vector<T> data) : BasicTensor(shape) {
    if (data.size() != shape.size())
      throw ContractError("tensor data length " + std::to_string(data.size()) +
                          " does not match shape " + to_string(shape));
    data_ = std::move(data);
  }

  const Shape& shape() const { return shape_; }
  std::size_t channels() const { return shape_.channels; }
  std::size_t height() const { return shape_.height; }
  std::size_t width() const { return shape_.width; }
  std::size_t size() const { return data_.size(); }

  T* data() { return data_.data(); }
  const T* data() const { return data_.data(); }
  std::vector<T>& values() { return data_; }
  const std::vector<T>& values() const { return data_; }

  T& operator[](std::size_t i) { return data_[i]; }
  const T& operator[](std::size_t i) const { return data_[i]; }
  T& operator()(std::size_t c, std::size_t y, std::size_t x) {
    return data_[(c * shape_.height + y) * shape_.width + x];
  }
  const T& operator()(std::size_t c, std::size_t y, std::size_t x) const {
    return data_[(c * shape_.height + y) * shape_.width + x];
  }

  void fill(T v) { data_.assign(data_.size(), v); }

  template <class U>
  BasicTensor<U> cast() const {
    BasicTensor<U> out(shape_);
    for (std::size_t i = 0; i < data_.size(); ++i) out[i] = static_cast<U>(data_[i]);
    return out;
  }

  friend bool operator==(const BasicTensor&, const BasicTensor&) = default;

 private:
  Shape shape_;
  std::vector<T> data_;
};

using Tensor = BasicTensor<double>;
using TensorF = BasicTensor<float>;

inline void require_same_shape(const Shape& a, const Shape& b, const char* what) {
  if (!(a == b))
    throw ContractError(std::string(what) + ": shape mismatch " + to_string(a) + " vs " +
                        to_string(b));
}

/// Parameters of one 4x4 / stride 2 / padding 1 layer.
/// weights are laid out out_channels x in_channels x 4 x 4 for both
/// convolution and transposed convolution.
template <class T>
struct BasicConvParams {
  static constexpr std::size_t kKernel = 4;
  static constexpr std::size_t kStride = 2;
  static constexpr std::size_t kPadding = 1;

  std::size_t out_channels = 0;
  std::size_t in_channels = 0;
  std::vector<T> weights;
  std::vector<T> bias;

  BasicConvParams() = default;
  BasicConvParams(std::size_t out_ch, std::size_t in_ch)
      : out_channels(out_ch),
        in_channels(in_ch),
        weights(out_ch * in_ch * kKernel * kKernel, T(0)),
        bias(out_ch, T(0)) {
    if (out_ch == 0 || in_ch == 0) throw ContractError("layer channel counts must be >= 1");
  }

  std::size_t weight_index(std::size_t o, std::size_t c, std::size_t ky, std::size_t kx) const {
    return ((o * in_channels + c) * kKernel + ky) * kKernel + kx;
  }
  T& w(std::size_t o, std::size_t c, std::size_t ky, std::size_t kx) {
    return weights[weight_index(o, c, ky, kx)];
  }
  const T& w(std::size_t o, std::size_t c, std::size_t ky, std::size_t kx) const {
    return weights[weight_index(o, c, ky, kx)];
  }

  friend bool operator==(const BasicConvParams&, const BasicConvParams&) = default;
};

using ConvParams = BasicConvParams<double>;

template <class T>
struct BasicGradBundle {
  BasicTensor<T> d_input;
  std::vector<T> d_weights;
  std::vector<T> d_bias;
};

using GradBundle = BasicGradBundle<double>;

}  // namespace ste
