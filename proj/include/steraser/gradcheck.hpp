#pragma once

// Central finite-difference verification of the analytic backward kernels.
// Each check contracts the layer output with a fixed random tensor r, so the
// scalar objective is <f(x), r> and the upstream gradient is r (or, for the
// loss and the full network, the squared-error loss itself).

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <functional>
#include <limits>
#include <random>
#include <string>
#include <vector>

#include "steraser/eraser_net.hpp"
#include "steraser/kernels.hpp"
#include "steraser/tensor.hpp"

namespace ste {

enum class LayerKind { kConv, kDeconv, kRelu, kSkipMerge, kMse, kNetwork };

inline std::string to_string(LayerKind k) {
  switch (k) {
    case LayerKind::kConv: return "conv";
    case LayerKind::kDeconv: return "deconv";
    case LayerKind::kRelu: return "relu";
    case LayerKind::kSkipMerge: return "skip_merge";
    case LayerKind::kMse: return "mse";
    case LayerKind::kNetwork: return "network";
  }
  return "?";
}

inline LayerKind parse_layer_kind(const std::string& s) {
  for (auto k : {LayerKind::kConv, LayerKind::kDeconv, LayerKind::kRelu, LayerKind::kSkipMerge,
                 LayerKind::kMse, LayerKind::kNetwork})
    if (to_string(k) == s) return k;
  throw ContractError("unknown layer kind '" + s + "'");
}

struct GradCheckOptions {
  double step = 1e-5;
  double denominator_floor = 1e-8;
};

/// |a - n| / max(|a|, |n|), or |a - n| when that denominator is tiny.
inline double relative_error(double analytic, double numeric, double floor = 1e-8) {
  const double diff = std::abs(analytic - numeric);
  const double denom = std::max(std::abs(analytic), std::abs(numeric));
  return denom < floor ? diff : diff / denom;
}

namespace detail {

class CheckRng {
 public:
  explicit CheckRng(std::uint64_t seed) : rng_(seed) {}
  double uniform(double lo, double hi) { return lo + (hi - lo) * unit_uniform(rng_); }
  /// Uniform in [-1, 1] but at least `gap` away from zero.
  double away_from_zero(double gap) {
    const double v = uniform(gap, 1.0);
    return (rng_() & 1U) ? v : -v;
  }
  template <class C>
  void fill(C& c, double lo, double hi) {
    for (auto& v : c) v = uniform(lo, hi);
  }

 private:
  std::mt19937_64 rng_;
};

/// Max relative error between `analytic` and central differences. `eval`
/// produces the state at a perturbed point and `diff(up, down)` the change of
/// the objective between two such states, or NaN to skip the entry.
template <class Eval, class Diff>
double compare_paired(std::vector<double>& values, const std::vector<double>& analytic, Eval eval,
                      Diff diff, const GradCheckOptions& opt) {
  double worst = 0.0;
  for (std::size_t i = 0; i < values.size(); ++i) {
    const double saved = values[i];
    values[i] = saved + opt.step;
    const auto up = eval();
    values[i] = saved - opt.step;
    const auto down = eval();
    values[i] = saved;
    const double numeric = diff(up, down) / (2.0 * opt.step);
    if (std::isnan(numeric)) continue;
    worst = std::max(worst, relative_error(analytic[i], numeric, opt.denominator_floor));
  }
  return worst;
}

inline double compare(std::vector<double>& values, const std::vector<double>& analytic,
                      const std::function<double()>& objective, const GradCheckOptions& opt) {
  return compare_paired(values, analytic, objective, [](double a, double b) { return a - b; }, opt);
}

inline double dot(const std::vector<double>& a, const std::vector<double>& b) {
  double s = 0.0;
  for (std::size_t i = 0; i < a.size(); ++i) s += a[i] * b[i];
  return s;
}

}  // namespace detail

/// Worst relative error between analytic and finite-difference gradients.
///
/// `input` is the layer input shape. For kConv / kDeconv, `out_channels`
/// sets the layer width. For kNetwork, `input` must be 3 x P x P and a
/// depth-3 variant (3 -> 4 -> 5 -> 6) of the eraser network is checked on it.
inline double grad_check(LayerKind kind, const Shape& input, std::size_t out_channels,
                         std::uint64_t seed, const GradCheckOptions& opt = {}) {
  detail::CheckRng rng(seed);
  Tensor x(input);
  switch (kind) {
    case LayerKind::kConv:
    case LayerKind::kDeconv: {
      const bool is_conv = kind == LayerKind::kConv;
      ConvParams p(out_channels, input.channels);
      rng.fill(x.values(), -1.0, 1.0);
      rng.fill(p.weights, -0.5, 0.5);
      rng.fill(p.bias, -0.5, 0.5);
      const Tensor y0 = is_conv ? conv_forward(x, p) : deconv_forward(x, p);
      Tensor r(y0.shape());
      rng.fill(r.values(), -1.0, 1.0);
      const GradBundle g = is_conv ? conv_backward(x, p, r) : deconv_backward(x, p, r);
      auto objective = [&] {
        const Tensor y = is_conv ? conv_forward(x, p) : deconv_forward(x, p);
        return detail::dot(y.values(), r.values());
      };
      return std::max({detail::compare(x.values(), g.d_input.values(), objective, opt),
                       detail::compare(p.weights, g.d_weights, objective, opt),
                       detail::compare(p.bias, g.d_bias, objective, opt)});
    }
    case LayerKind::kRelu: {
      for (auto& v : x.values()) v = rng.away_from_zero(0.05);
      Tensor r(input);
      rng.fill(r.values(), -1.0, 1.0);
      const Tensor g = relu_backward(x, r);
      auto objective = [&] { return detail::dot(relu(x).values(), r.values()); };
      return detail::compare(x.values(), g.values(), objective, opt);
    }
    case LayerKind::kSkipMerge: {
      Tensor x2(input);
      rng.fill(x.values(), -1.0, 1.0);
      for (std::size_t i = 0; i < x2.size(); ++i) {
        // keep the sum away from the kink
        const double s = rng.away_from_zero(0.05);
        x2[i] = s - x[i];
      }
      Tensor r(input);
      rng.fill(r.values(), -1.0, 1.0);
      const Tensor merged = skip_merge(x, x2);
      const Tensor g = skip_merge_backward(merged, r);
      auto objective = [&] { return detail::dot(skip_merge(x, x2).values(), r.values()); };
      return std::max(detail::compare(x.values(), g.values(), objective, opt),
                      detail::compare(x2.values(), g.values(), objective, opt));
    }
    case LayerKind::kMse: {
      Tensor target(input);
      rng.fill(x.values(), 0.0, 1.0);
      rng.fill(target.values(), 0.0, 1.0);
      const auto [loss, grad] = mse_loss(x, target);
      (void)loss;
      auto objective = [&] { return mse_loss(x, target).first; };
      return detail::compare(x.values(), grad.values(), objective, opt);
    }
    case LayerKind::kNetwork: {
      if (input.channels != 3 || input.height != input.width)
        throw ContractError("network gradient check needs a 3 x P x P input");
      const std::vector<std::size_t> plan{3, 4, 5, 6};
      auto model = init_model(seed, plan, input.height);
      // nonzero biases so every junction carries signal
      for (std::size_t i = 0; i < model.layer_count(); ++i) rng.fill(model.layer(i).bias, -0.1, 0.1);
      rng.fill(x.values(), 0.0, 1.0);
      Tensor target(input);
      rng.fill(target.values(), 0.0, 1.0);
      const Activations xa(x), ta(target);
      Tape tape;
      const auto out = forward(model, xa, &tape);
      const auto loss = mse_loss(out, ta);
      const auto grads = backward(model, tape, loss.d_pred);
      // sum (u - d)(u + d - 2t) is the loss difference without cancellation.
      // Entries whose two evaluations switch some ReLU on or off straddle a
      // kink and are skipped.
      auto eval = [&] {
        Tape t;
        forward(model, xa, &t);
        return t;
      };
      auto active_pattern_equal = [](const Tape& a, const Tape& b) {
        auto same = [](const std::vector<Activations>& p, const std::vector<Activations>& q) {
          for (std::size_t k = 0; k < p.size(); ++k)
            for (std::size_t i = 0; i < p[k].size(); ++i)
              if ((p[k][i] > 0) != (q[k][i] > 0)) return false;
          return true;
        };
        return same(a.encoder, b.encoder) && same(a.merged, b.merged);
      };
      auto diff = [&](const Tape& up, const Tape& down) {
        if (!active_pattern_equal(up, down)) return std::numeric_limits<double>::quiet_NaN();
        const auto &u = up.output, &d = down.output;
        double s = 0.0;
        for (std::size_t i = 0; i < u.size(); ++i) s += (u[i] - d[i]) * (u[i] + d[i] - 2.0 * ta[i]);
        return s;
      };
      double worst = 0.0;
      for (std::size_t i = 0; i < model.layer_count(); ++i) {
        worst = std::max(worst, detail::compare_paired(model.layer(i).weights, grads.d_weights[i], eval, diff, opt));
        worst = std::max(worst, detail::compare_paired(model.layer(i).bias, grads.d_bias[i], eval, diff, opt));
      }
      return worst;
    }
  }
  return 0.0;
}

struct GradCheckCase {
  std::string name;
  LayerKind kind;
  Shape input;
  std::size_t out_channels;
  double max_relative_error = 0.0;
};

/// The standard battery: every layer kind plus a reduced 3x8x8 network.
inline std::vector<GradCheckCase> run_gradcheck_suite(std::uint64_t seed,
                                                      const GradCheckOptions& opt = {}) {
  std::vector<GradCheckCase> cases{
      {"conv 2x6x6 -> 3", LayerKind::kConv, {2, 6, 6}, 3},
      {"deconv 2x3x3 -> 3", LayerKind::kDeconv, {2, 3, 3}, 3},
      {"relu 2x5x5", LayerKind::kRelu, {2, 5, 5}, 0},
      {"skip_merge 2x4x4", LayerKind::kSkipMerge, {2, 4, 4}, 0},
      {"mse 3x4x4", LayerKind::kMse, {3, 4, 4}, 0},
      {"network 3x8x8", LayerKind::kNetwork, {3, 8, 8}, 0},
  };
  for (auto& c : cases) c.max_relative_error = grad_check(c.kind, c.input, c.out_channels, seed, opt);
  return cases;
}

}  // namespace ste
