#pragma once

// Whole-image inference by overlapping 64x64 tiles at stride 32. Only the
// central 32x32 of each model output is kept, and the tile grid is laid out
// on a reflect-padded canvas so that these centres partition the image.

#include <algorithm>
#include <concepts>
#include <type_traits>
#include <cstdint>
#include <utility>
#include <vector>

#include "steraser/eraser_net.hpp"
#include "steraser/image.hpp"
#include "steraser/image_io.hpp"
#include "steraser/kernels.hpp"

namespace ste {

constexpr std::size_t kTileSize = 64;
constexpr std::size_t kTileStride = 32;
constexpr std::size_t kTileMargin = 16;

struct TilePlan {
  std::size_t width = 0, height = 0;                // original image
  std::size_t padded_width = 0, padded_height = 0;
  std::size_t pad_left = kTileMargin, pad_top = kTileMargin;
  std::size_t pad_right = 0, pad_bottom = 0;
  std::vector<std::pair<std::size_t, std::size_t>> origins;  // tile top-left, padded coords
};

inline TilePlan plan_tiles(std::size_t width, std::size_t height) {
  if (width == 0 || height == 0) throw ContractError("plan_tiles: empty image");
  TilePlan p;
  p.width = width;
  p.height = height;
  const std::size_t tx = (width + kTileStride - 1) / kTileStride;
  const std::size_t ty = (height + kTileStride - 1) / kTileStride;
  p.padded_width = tx * kTileStride + 2 * kTileMargin;
  p.padded_height = ty * kTileStride + 2 * kTileMargin;
  p.pad_right = p.padded_width - p.pad_left - width;
  p.pad_bottom = p.padded_height - p.pad_top - height;
  for (std::size_t j = 0; j < ty; ++j)
    for (std::size_t i = 0; i < tx; ++i) p.origins.emplace_back(i * kTileStride, j * kTileStride);
  return p;
}

/// Mirror index into [0, n) without repeating the edge sample (…2 1 0 1 2…).
inline std::size_t reflect_index(long i, std::size_t n) {
  if (n == 1) return 0;
  const long period = 2 * (static_cast<long>(n) - 1);
  long m = i % period;
  if (m < 0) m += period;
  return static_cast<std::size_t>(m < static_cast<long>(n) ? m : period - m);
}

/// Anything that maps a batch of 3x64x64 patches to a batch of the same shape.
template <class F>
concept PatchBatchModel = requires(const F& f, const Activations& a) {
  { f(a) } -> std::convertible_to<Activations>;
};

struct EraseResult {
  RgbImage image;
  std::vector<std::uint32_t> write_count;  // per original pixel
};

template <PatchBatchModel Model>
EraseResult erase_image_detailed(const RgbImage& image, const Model& model,
                                 std::size_t tiles_per_batch = 16) {
  const TilePlan plan = plan_tiles(image.width, image.height);
  const std::size_t pw = plan.padded_width, ph = plan.padded_height;
  const std::size_t w = image.width, h = image.height;

  // padded canvas, channel-major, [0, 1]
  std::vector<double> canvas(3 * pw * ph);
  for (std::size_t y = 0; y < ph; ++y) {
    const std::size_t sy = reflect_index(static_cast<long>(y) - static_cast<long>(plan.pad_top), h);
    for (std::size_t x = 0; x < pw; ++x) {
      const std::size_t sx =
          reflect_index(static_cast<long>(x) - static_cast<long>(plan.pad_left), w);
      for (std::size_t c = 0; c < 3; ++c)
        canvas[(c * ph + y) * pw + x] = image.at(sx, sy, c) / 255.0;
    }
  }

  std::vector<double> result(3 * w * h, 0.0);
  EraseResult out;
  out.write_count.assign(w * h, 0);
  const std::size_t ts = kTileSize;
  for (std::size_t first = 0; first < plan.origins.size(); first += tiles_per_batch) {
    const std::size_t count = std::min(tiles_per_batch, plan.origins.size() - first);
    Activations batch(count, 3, ts, ts);
    for (std::size_t n = 0; n < count; ++n) {
      const auto [ox, oy] = plan.origins[first + n];
      for (std::size_t c = 0; c < 3; ++c)
        for (std::size_t y = 0; y < ts; ++y)
          std::copy_n(&canvas[(c * ph + oy + y) * pw + ox], ts, batch.plane(c, n) + y * ts);
    }
    const Activations pred = model(batch);
    if (!pred.same_geometry(batch))
      throw ContractError("erase_image: model returned " + pred.describe() + " for " +
                          batch.describe());
    for (std::size_t n = 0; n < count; ++n) {
      const auto [ox, oy] = plan.origins[first + n];
      // the centre of a tile at padded origin o covers original pixels [o, o + 32)
      for (std::size_t y = 0; y < kTileStride; ++y) {
        const std::size_t gy = oy + y;
        if (gy >= h) break;
        for (std::size_t x = 0; x < kTileStride; ++x) {
          const std::size_t gx = ox + x;
          if (gx >= w) break;
          for (std::size_t c = 0; c < 3; ++c)
            result[(c * h + gy) * w + gx] =
                pred.plane(c, n)[(kTileMargin + y) * ts + kTileMargin + x];
          ++out.write_count[gy * w + gx];
        }
      }
    }
  }

  out.image = RgbImage(w, h);
  for (std::size_t c = 0; c < 3; ++c)
    for (std::size_t y = 0; y < h; ++y)
      for (std::size_t x = 0; x < w; ++x) out.image.at(x, y, c) = to_byte(result[(c * h + y) * w + x]);
  return out;
}

template <PatchBatchModel Model>
RgbImage erase_image(const RgbImage& image, const Model& model) {
  return erase_image_detailed(image, model).image;
}

template <class T>
RgbImage erase_image(const RgbImage& image, const BasicEraserModel<T>& model) {
  return erase_image(image, [&model](const Activations& batch) {
    if constexpr (std::is_same_v<T, double>) {
      return forward(model, batch);
    } else {
      BasicActivations<T> b(batch.samples(), batch.channels(), batch.height(), batch.width());
      for (std::size_t i = 0; i < batch.size(); ++i) b[i] = static_cast<T>(batch[i]);
      const auto r = forward(model, b);
      Activations o(r.samples(), r.channels(), r.height(), r.width());
      for (std::size_t i = 0; i < r.size(); ++i) o[i] = static_cast<double>(r[i]);
      return o;
    }
  });
}

}  // namespace ste
