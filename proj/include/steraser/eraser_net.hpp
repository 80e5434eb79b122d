#pragma once

// Convolution / transposed-convolution eraser network with skip-sum wiring.
//
// With depth D and channel plan c0 -> c1 -> ... -> cD the network is
//
//   a0 = input,  a_k = relu(conv_k(a_{k-1}))                     k = 1..D
//   u_1 = deconv_1(a_D)
//   m_k = max(0, u_k + a_{D-k}),  u_{k+1} = deconv_{k+1}(m_k)     k = 1..D-1
//   output = u_D                                                 (identity head)
//
// The production architecture is D = 4 with plan 3 -> 32 -> 64 -> 128 -> 256
// on 64x64 patches. Reduced variants exist for gradient checking.

#include <array>
#include <bit>
#include <cmath>
#include <cstdint>
#include <cstring>
#include <filesystem>
#include <fstream>
#include <functional>
#include <optional>
#include <random>
#include <span>
#include <stdexcept>
#include <string>
#include <vector>

#include "steraser/kernels.hpp"
#include "steraser/tensor.hpp"

namespace ste {

inline const std::vector<std::size_t> kEraserChannelPlan{3, 32, 64, 128, 256};
constexpr std::size_t kPatchSize = 64;

template <class T>
struct BasicEraserModel {
  std::vector<std::size_t> channels;  // c0 .. cD
  std::size_t patch_size = kPatchSize;
  std::vector<BasicConvParams<T>> conv;    // conv_1 .. conv_D
  std::vector<BasicConvParams<T>> deconv;  // deconv_1 .. deconv_D

  std::size_t depth() const { return conv.size(); }
  std::size_t layer_count() const { return conv.size() + deconv.size(); }

  /// Layers in storage order: conv_1..conv_D, deconv_1..deconv_D.
  BasicConvParams<T>& layer(std::size_t i) {
    return i < conv.size() ? conv[i] : deconv[i - conv.size()];
  }
  const BasicConvParams<T>& layer(std::size_t i) const {
    return i < conv.size() ? conv[i] : deconv[i - conv.size()];
  }

  friend bool operator==(const BasicEraserModel&, const BasicEraserModel&) = default;
};

using EraserModel = BasicEraserModel<double>;

/// Zero-valued model with the given channel plan. The deconvolution stack
/// mirrors the plan back down to c0.
template <class T = double>
BasicEraserModel<T> make_model(std::span<const std::size_t> plan, std::size_t patch_size) {
  if (plan.size() < 2) throw ContractError("channel plan needs at least two entries");
  const std::size_t depth = plan.size() - 1;
  if (patch_size % (std::size_t{1} << depth) != 0)
    throw ContractError("patch size " + std::to_string(patch_size) + " not divisible by 2^" +
                        std::to_string(depth));
  BasicEraserModel<T> m;
  m.channels.assign(plan.begin(), plan.end());
  m.patch_size = patch_size;
  for (std::size_t k = 0; k < depth; ++k) m.conv.emplace_back(plan[k + 1], plan[k]);
  for (std::size_t k = 0; k < depth; ++k)
    m.deconv.emplace_back(plan[depth - k - 1], plan[depth - k]);
  return m;
}

/// Glorot-uniform bound sqrt(6 / (fan_in + fan_out)) for a 4x4 layer.
inline double init_bound(std::size_t in_channels, std::size_t out_channels) {
  return std::sqrt(6.0 / static_cast<double>(in_channels * 16 + out_channels * 16));
}

namespace detail {
/// Uniform [0, 1) from the top 53 bits; stable across standard libraries.
inline double unit_uniform(std::mt19937_64& rng) {
  return static_cast<double>(rng() >> 11) * 0x1.0p-53;
}
}  // namespace detail

template <class T = double>
BasicEraserModel<T> init_model(std::uint64_t seed,
                               std::span<const std::size_t> plan = kEraserChannelPlan,
                               std::size_t patch_size = kPatchSize) {
  auto m = make_model<T>(plan, patch_size);
  std::mt19937_64 rng(seed);
  for (std::size_t i = 0; i < m.layer_count(); ++i) {
    auto& p = m.layer(i);
    const double s = init_bound(p.in_channels, p.out_channels);
    for (auto& w : p.weights) w = static_cast<T>(-s + 2.0 * s * detail::unit_uniform(rng));
  }
  return m;
}

/// Activations recorded by forward for use in backward.
template <class T>
struct BasicTape {
  std::vector<BasicActivations<T>> encoder;  // a_0 .. a_D
  std::vector<BasicActivations<T>> merged;   // m_1 .. m_{D-1}
  BasicActivations<T> output;                // u_D

  /// Spatial size after each of the 2D layers.
  std::vector<std::size_t> spatial_sizes() const {
    std::vector<std::size_t> out;
    for (std::size_t k = 1; k < encoder.size(); ++k) out.push_back(encoder[k].height());
    for (const auto& m : merged) out.push_back(m.height());
    out.push_back(output.height());
    return out;
  }
};

using Tape = BasicTape<double>;

template <class T>
void check_model_input(const BasicEraserModel<T>& m, std::size_t channels, std::size_t height,
                       std::size_t width) {
  if (channels != m.channels.front() || height != m.patch_size || width != m.patch_size)
    throw ContractError("forward: expected input " + std::to_string(m.channels.front()) + "x" +
                        std::to_string(m.patch_size) + "x" + std::to_string(m.patch_size) +
                        ", got " + std::to_string(channels) + "x" + std::to_string(height) +
                        "x" + std::to_string(width));
}

template <class T>
BasicActivations<T> forward(const BasicEraserModel<T>& m, const BasicActivations<T>& input,
                            BasicTape<T>* tape = nullptr) {
  check_model_input(m, input.channels(), input.height(), input.width());
  const std::size_t depth = m.depth();
  std::vector<BasicActivations<T>> enc;
  enc.reserve(depth + 1);
  enc.push_back(input);
  for (std::size_t k = 0; k < depth; ++k) enc.push_back(relu(conv_forward(enc.back(), m.conv[k])));

  std::vector<BasicActivations<T>> merged;
  const BasicActivations<T>* current = &enc.back();
  for (std::size_t k = 0; k + 1 < depth; ++k) {
    merged.push_back(skip_merge(deconv_forward(*current, m.deconv[k]), enc[depth - k - 1]));
    current = &merged.back();
  }
  BasicActivations<T> out = deconv_forward(*current, m.deconv[depth - 1]);
  if (tape) {
    tape->encoder = std::move(enc);
    tape->merged = std::move(merged);
    tape->output = out;
  }
  return out;
}

template <class T>
BasicTensor<T> forward(const BasicEraserModel<T>& m, const BasicTensor<T>& patch,
                       BasicTape<T>* tape = nullptr) {
  return forward(m, BasicActivations<T>(patch), tape).sample(0);
}

/// Parameter gradients, same layout as the model's layers.
template <class T>
struct BasicModelGrads {
  std::vector<std::vector<T>> d_weights;
  std::vector<std::vector<T>> d_bias;
};

/// Backpropagates d_output (gradient w.r.t. the network output) through a
/// recorded forward pass. Skip junctions send the same gradient to both
/// branches.
template <class T>
BasicModelGrads<T> backward(const BasicEraserModel<T>& m, const BasicTape<T>& tape,
                            const BasicActivations<T>& d_output) {
  const std::size_t depth = m.depth();
  if (!d_output.same_geometry(tape.output))
    throw ContractError("backward: gradient " + d_output.describe() +
                        " does not match network output " + tape.output.describe());
  BasicModelGrads<T> g;
  g.d_weights.resize(2 * depth);
  g.d_bias.resize(2 * depth);

  // Gradients w.r.t. encoder activations a_0..a_D, filled by skips first.
  std::vector<BasicActivations<T>> d_enc(depth + 1);
  auto accumulate = [](BasicActivations<T>& acc, const BasicActivations<T>& v) {
    if (acc.size() == 0) {
      acc = v;
      return;
    }
    for (std::size_t i = 0; i < acc.size(); ++i) acc[i] += v[i];
  };

  BasicActivations<T> d_current = d_output;
  for (std::size_t k = depth; k-- > 0;) {
    const BasicActivations<T>& input = k == 0 ? tape.encoder[depth] : tape.merged[k - 1];
    auto lg = deconv_backward(input, m.deconv[k], d_current, true);
    g.d_weights[depth + k] = std::move(lg.d_weights);
    g.d_bias[depth + k] = std::move(lg.d_bias);
    if (k == 0) {
      accumulate(d_enc[depth], lg.d_input);
    } else {
      // input is m_k = max(0, u_k + a_{D-k}); gate then fan out.
      d_current = skip_merge_backward(tape.merged[k - 1], std::move(lg.d_input));
      accumulate(d_enc[depth - k], d_current);
    }
  }

  for (std::size_t k = depth; k-- > 0;) {
    // a_{k+1} = relu(z); relu(z) > 0 iff z > 0.
    auto dz = relu_backward(tape.encoder[k + 1], std::move(d_enc[k + 1]));
    auto lg = conv_backward(tape.encoder[k], m.conv[k], dz, k > 0);
    g.d_weights[k] = std::move(lg.d_weights);
    g.d_bias[k] = std::move(lg.d_bias);
    if (k > 0) accumulate(d_enc[k], lg.d_input);
  }
  return g;
}

template <class T>
void sgd_update(BasicEraserModel<T>& m, const BasicModelGrads<T>& g, T learning_rate) {
  for (std::size_t i = 0; i < m.layer_count(); ++i) {
    auto& p = m.layer(i);
    for (std::size_t j = 0; j < p.weights.size(); ++j)
      p.weights[j] -= learning_rate * g.d_weights[i][j];
    for (std::size_t j = 0; j < p.bias.size(); ++j) p.bias[j] -= learning_rate * g.d_bias[i][j];
  }
}

struct TrainConfig {
  double learning_rate = 1e-4;
  std::size_t batch_size = 16;
  std::size_t max_steps = 1000;
  std::uint64_t seed = 0;
  std::size_t log_every = 50;

  void validate() const {
    if (!(learning_rate >= 0.0) || !std::isfinite(learning_rate))
      throw ContractError("learning_rate must be finite and >= 0");
    if (batch_size < 1) throw ContractError("batch_size must be >= 1");
  }
};

/// X_i / Y_i pairs of one SGD step.
template <class T>
struct BasicTrainBatch {
  BasicActivations<T> inputs;
  BasicActivations<T> targets;

  std::size_t size() const { return inputs.samples(); }

  static BasicTrainBatch from(std::span<const BasicTensor<T>> inputs,
                              std::span<const BasicTensor<T>> targets) {
    if (inputs.size() != targets.size())
      throw ContractError("train batch: " + std::to_string(inputs.size()) + " inputs vs " +
                          std::to_string(targets.size()) + " targets");
    return {BasicActivations<T>::stack(inputs), BasicActivations<T>::stack(targets)};
  }

  void validate() const {
    if (!inputs.same_geometry(targets))
      throw ContractError("train batch: inputs " + inputs.describe() + " vs targets " +
                          targets.describe());
    for (const auto* a : {&inputs, &targets})
      for (const T v : a->values())
        if (!(v >= T(0) && v <= T(1)))
          throw ContractError("train batch: values must lie in [0, 1]");
  }
};

using TrainBatch = BasicTrainBatch<double>;

/// One plain-SGD step on the batch mean of per-sample squared error.
/// Returns the loss before the update.
template <class T>
T train_step(BasicEraserModel<T>& m, const BasicTrainBatch<T>& batch, const TrainConfig& cfg,
             std::size_t step_index = 0) {
  cfg.validate();
  batch.validate();
  BasicTape<T> tape;
  const auto out = forward(m, batch.inputs, &tape);
  auto loss = mse_loss(out, batch.targets);
  if (!std::isfinite(static_cast<double>(loss.loss)))
    throw NumericError("non-finite loss at step " + std::to_string(step_index));
  const auto grads = backward(m, tape, loss.d_pred);
  sgd_update(m, grads, static_cast<T>(cfg.learning_rate));
  return loss.loss;
}

// ---------------------------------------------------------------------------
// Weight file: "TXERASE1", u32 layer count, then per layer u32 out, in, kh, kw
// followed by float32 weights and float32 biases, all little-endian.

class ModelFormatError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

inline constexpr char kWeightMagic[8] = {'T', 'X', 'E', 'R', 'A', 'S', 'E', '1'};

namespace detail {

inline void put_u32(std::ostream& os, std::uint32_t v) {
  const unsigned char b[4] = {static_cast<unsigned char>(v), static_cast<unsigned char>(v >> 8),
                              static_cast<unsigned char>(v >> 16),
                              static_cast<unsigned char>(v >> 24)};
  os.write(reinterpret_cast<const char*>(b), 4);
}

inline void put_f32(std::ostream& os, float f) { put_u32(os, std::bit_cast<std::uint32_t>(f)); }

inline bool get_u32(std::istream& is, std::uint32_t& v) {
  unsigned char b[4];
  if (!is.read(reinterpret_cast<char*>(b), 4)) return false;
  v = std::uint32_t{b[0]} | std::uint32_t{b[1]} << 8 | std::uint32_t{b[2]} << 16 |
      std::uint32_t{b[3]} << 24;
  return true;
}

}  // namespace detail

template <class T>
void save_model(const BasicEraserModel<T>& m, std::ostream& os) {
  os.write(kWeightMagic, sizeof kWeightMagic);
  detail::put_u32(os, static_cast<std::uint32_t>(m.layer_count()));
  for (std::size_t i = 0; i < m.layer_count(); ++i) {
    const auto& p = m.layer(i);
    detail::put_u32(os, static_cast<std::uint32_t>(p.out_channels));
    detail::put_u32(os, static_cast<std::uint32_t>(p.in_channels));
    detail::put_u32(os, 4);
    detail::put_u32(os, 4);
    for (const T w : p.weights) detail::put_f32(os, static_cast<float>(w));
    for (const T b : p.bias) detail::put_f32(os, static_cast<float>(b));
  }
}

template <class T>
void save_model(const BasicEraserModel<T>& m, const std::filesystem::path& path) {
  std::ofstream os(path, std::ios::binary);
  if (!os) throw std::runtime_error("cannot open " + path.string() + " for writing");
  save_model(m, os);
  if (!os) throw std::runtime_error("write failed for " + path.string());
}

/// Reads a weight file and checks every layer header against the given
/// channel plan.
template <class T = double>
BasicEraserModel<T> load_model(std::istream& is, std::span<const std::size_t> plan =
                                                     kEraserChannelPlan,
                               std::size_t patch_size = kPatchSize) {
  auto m = make_model<T>(plan, patch_size);
  char magic[8];
  if (!is.read(magic, sizeof magic) || std::memcmp(magic, kWeightMagic, sizeof magic) != 0)
    throw ModelFormatError("weight file: bad magic (expected TXERASE1)");
  std::uint32_t count = 0;
  if (!detail::get_u32(is, count)) throw ModelFormatError("weight file: truncated layer count");
  if (count != m.layer_count())
    throw ModelFormatError("weight file: layer count " + std::to_string(count) + ", expected " +
                           std::to_string(m.layer_count()));
  for (std::size_t i = 0; i < m.layer_count(); ++i) {
    auto& p = m.layer(i);
    const std::string name = "layer " + std::to_string(i) +
                             (i < m.depth() ? " (conv_" + std::to_string(i + 1) + ")"
                                            : " (deconv_" + std::to_string(i - m.depth() + 1) +
                                                  ")");
    std::uint32_t dims[4];
    for (auto& d : dims)
      if (!detail::get_u32(is, d)) throw ModelFormatError("weight file: truncated header of " + name);
    if (dims[0] != p.out_channels || dims[1] != p.in_channels || dims[2] != 4 || dims[3] != 4)
      throw ModelFormatError("weight file: " + name + " has shape " + std::to_string(dims[0]) +
                             "x" + std::to_string(dims[1]) + "x" + std::to_string(dims[2]) +
                             "x" + std::to_string(dims[3]) + ", expected " +
                             std::to_string(p.out_channels) + "x" +
                             std::to_string(p.in_channels) + "x4x4");
    auto read_block = [&](std::vector<T>& dst) {
      for (auto& v : dst) {
        std::uint32_t bits = 0;
        if (!detail::get_u32(is, bits)) throw ModelFormatError("weight file: truncated data in " + name);
        v = static_cast<T>(std::bit_cast<float>(bits));
      }
    };
    read_block(p.weights);
    read_block(p.bias);
  }
  if (is.peek() != std::char_traits<char>::eof())
    throw ModelFormatError("weight file: trailing bytes after last layer");
  return m;
}

template <class T = double>
BasicEraserModel<T> load_model(const std::filesystem::path& path) {
  std::ifstream is(path, std::ios::binary);
  if (!is) throw std::runtime_error("cannot open weight file " + path.string());
  return load_model<T>(is);
}

/// Rounds every parameter to float32, i.e. the precision weight files keep.
template <class T>
BasicEraserModel<T> quantized(BasicEraserModel<T> m) {
  for (std::size_t i = 0; i < m.layer_count(); ++i) {
    for (auto& w : m.layer(i).weights) w = static_cast<T>(static_cast<float>(w));
    for (auto& b : m.layer(i).bias) b = static_cast<T>(static_cast<float>(b));
  }
  return m;
}

}  // namespace ste
