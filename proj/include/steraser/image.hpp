#pragma once

#include <array>
#include <cstddef>
#include <cstdint>
#include <string>
#include <vector>

#include "steraser/tensor.hpp"

namespace ste {

/// 8-bit interleaved RGB image.
struct RgbImage {
  std::size_t width = 0;
  std::size_t height = 0;
  std::vector<std::uint8_t> pixels;  // (y * width + x) * 3 + channel

  RgbImage() = default;
  RgbImage(std::size_t w, std::size_t h, std::uint8_t fill = 0)
      : width(w), height(h), pixels(w * h * 3, fill) {}

  std::uint8_t& at(std::size_t x, std::size_t y, std::size_t c) {
    return pixels[(y * width + x) * 3 + c];
  }
  std::uint8_t at(std::size_t x, std::size_t y, std::size_t c) const {
    return pixels[(y * width + x) * 3 + c];
  }
  void set(std::size_t x, std::size_t y, const std::array<std::uint8_t, 3>& rgb) {
    for (std::size_t c = 0; c < 3; ++c) at(x, y, c) = rgb[c];
  }

  friend bool operator==(const RgbImage&, const RgbImage&) = default;
};

/// Binary per-pixel character mask; true marks a stroke pixel.
struct MaskImage {
  std::size_t width = 0;
  std::size_t height = 0;
  std::vector<std::uint8_t> bits;  // 0 or 1

  MaskImage() = default;
  MaskImage(std::size_t w, std::size_t h, bool fill = false)
      : width(w), height(h), bits(w * h, fill ? 1 : 0) {}

  bool at(std::size_t x, std::size_t y) const { return bits[y * width + x] != 0; }
  void set(std::size_t x, std::size_t y, bool v = true) { bits[y * width + x] = v ? 1 : 0; }

  std::size_t count() const {
    std::size_t n = 0;
    for (auto b : bits) n += b != 0;
    return n;
  }
  bool empty() const { return count() == 0; }

  friend bool operator==(const MaskImage&, const MaskImage&) = default;
};

inline void require_same_size(const RgbImage& a, const MaskImage& m, const char* what) {
  if (a.width != m.width || a.height != m.height)
    throw ContractError(std::string(what) + ": image " + std::to_string(a.width) + "x" +
                        std::to_string(a.height) + " vs mask " + std::to_string(m.width) + "x" +
                        std::to_string(m.height));
}

inline void require_same_size(const RgbImage& a, const RgbImage& b, const char* what) {
  if (a.width != b.width || a.height != b.height)
    throw ContractError(std::string(what) + ": image sizes differ " + std::to_string(a.width) +
                        "x" + std::to_string(a.height) + " vs " + std::to_string(b.width) + "x" +
                        std::to_string(b.height));
}

}  // namespace ste
