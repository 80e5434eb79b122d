#pragma once

// Training-data factory: mask dilation, harmonic inpainting of text strokes,
// synthetic scene rendering and 64x64 patch-pair extraction.

#include <algorithm>
#include <array>
#include <cmath>
#include <cstdint>
#include <filesystem>
#include <fstream>
#include <random>
#include <sstream>
#include <stdexcept>
#include <string>
#include <vector>

#include "steraser/font5x7.hpp"
#include "steraser/image.hpp"
#include "steraser/image_io.hpp"
#include "steraser/tensor.hpp"

namespace ste {

// ---------------------------------------------------------------------------
// Morphology

/// `iterations` rounds of dilation by the 3x3 all-ones structuring element.
inline MaskImage dilate(const MaskImage& mask, std::size_t iterations) {
  MaskImage cur = mask;
  const std::size_t w = mask.width, h = mask.height;
  for (std::size_t it = 0; it < iterations; ++it) {
    MaskImage next(w, h);
    for (std::size_t y = 0; y < h; ++y)
      for (std::size_t x = 0; x < w; ++x) {
        if (!cur.at(x, y)) continue;
        const std::size_t y0 = y > 0 ? y - 1 : 0, y1 = std::min(h - 1, y + 1);
        const std::size_t x0 = x > 0 ? x - 1 : 0, x1 = std::min(w - 1, x + 1);
        for (std::size_t yy = y0; yy <= y1; ++yy)
          for (std::size_t xx = x0; xx <= x1; ++xx) next.set(xx, yy);
      }
    cur = std::move(next);
  }
  return cur;
}

// ---------------------------------------------------------------------------
// Harmonic inpainting

struct InpaintOptions {
  double tol = 0.05;  // gray levels
  std::size_t max_iters = 10'000;
};

/// Fills masked pixels with the discrete harmonic interpolant of their
/// surroundings (Jacobi sweeps over the 4-neighbour average). Each 4-connected
/// masked component starts at the mean of its unmasked boundary values, so
/// every iterate stays within that component's boundary range.
inline RgbImage inpaint(const RgbImage& image, const MaskImage& mask,
                        const InpaintOptions& opt = {}) {
  require_same_size(image, mask, "inpaint");
  const std::size_t w = image.width, h = image.height, n = w * h;
  std::size_t masked_count = mask.count();
  if (masked_count == n) throw ContractError("inpaint: mask covers the entire image");
  if (masked_count == 0) return image;

  // Masked pixel list, component labels, and neighbour tables.
  constexpr std::size_t kNone = static_cast<std::size_t>(-1);
  std::vector<std::size_t> slot(n, kNone);
  std::vector<std::size_t> pixels;
  pixels.reserve(masked_count);
  for (std::size_t i = 0; i < n; ++i)
    if (mask.bits[i]) {
      slot[i] = pixels.size();
      pixels.push_back(i);
    }

  auto neighbours = [&](std::size_t i, auto&& fn) {
    const std::size_t x = i % w, y = i / w;
    if (x > 0) fn(i - 1);
    if (x + 1 < w) fn(i + 1);
    if (y > 0) fn(i - w);
    if (y + 1 < h) fn(i + w);
  };

  std::vector<std::size_t> component(pixels.size(), kNone);
  std::size_t components = 0;
  {
    std::vector<std::size_t> stack;
    for (std::size_t s = 0; s < pixels.size(); ++s) {
      if (component[s] != kNone) continue;
      component[s] = components;
      stack.push_back(s);
      while (!stack.empty()) {
        const std::size_t cur = stack.back();
        stack.pop_back();
        neighbours(pixels[cur], [&](std::size_t j) {
          if (slot[j] != kNone && component[slot[j]] == kNone) {
            component[slot[j]] = components;
            stack.push_back(slot[j]);
          }
        });
      }
      ++components;
    }
  }

  RgbImage out = image;
  std::vector<double> cur(pixels.size()), next(pixels.size());
  for (std::size_t c = 0; c < 3; ++c) {
    auto value = [&](std::size_t i) { return static_cast<double>(image.pixels[i * 3 + c]); };

    std::vector<double> bsum(components, 0.0);
    std::vector<std::size_t> bcount(components, 0);
    for (std::size_t s = 0; s < pixels.size(); ++s)
      neighbours(pixels[s], [&](std::size_t j) {
        if (slot[j] == kNone) {
          bsum[component[s]] += value(j);
          ++bcount[component[s]];
        }
      });
    for (std::size_t s = 0; s < pixels.size(); ++s)
      cur[s] = bsum[component[s]] / static_cast<double>(bcount[component[s]]);

    for (std::size_t it = 0; it < opt.max_iters; ++it) {
      double max_change = 0.0;
      for (std::size_t s = 0; s < pixels.size(); ++s) {
        double sum = 0.0;
        int cnt = 0;
        neighbours(pixels[s], [&](std::size_t j) {
          sum += slot[j] == kNone ? value(j) : cur[slot[j]];
          ++cnt;
        });
        next[s] = sum / cnt;
        max_change = std::max(max_change, std::abs(next[s] - cur[s]));
      }
      cur.swap(next);
      if (max_change < opt.tol) break;
    }
    for (std::size_t s = 0; s < pixels.size(); ++s) {
      const double r = std::clamp(std::round(cur[s]), 0.0, 255.0);
      out.pixels[pixels[s] * 3 + c] = static_cast<std::uint8_t>(r);
    }
  }
  return out;
}

/// Text-removed training target: inpaint after `dilate_k` dilations.
inline RgbImage make_target(const RgbImage& image, const MaskImage& mask, std::size_t dilate_k,
                            const InpaintOptions& opt = {}) {
  require_same_size(image, mask, "make_target");
  return inpaint(image, dilate(mask, dilate_k), opt);
}

// ---------------------------------------------------------------------------
// Synthetic scenes

enum class Background { kFlat, kGradient, kChecker, kNoise, kMixed };

inline std::string to_string(Background b) {
  switch (b) {
    case Background::kFlat: return "flat";
    case Background::kGradient: return "gradient";
    case Background::kChecker: return "checker";
    case Background::kNoise: return "noise";
    case Background::kMixed: return "mixed";
  }
  return "?";
}

inline Background parse_background(const std::string& s) {
  if (s == "flat") return Background::kFlat;
  if (s == "gradient") return Background::kGradient;
  if (s == "checker") return Background::kChecker;
  if (s == "noise" || s == "noise-texture") return Background::kNoise;
  if (s == "mixed") return Background::kMixed;
  throw ContractError("unknown background kind '" + s + "'");
}

struct IntRange {
  int min = 0;
  int max = 0;
};

struct SynthConfig {
  std::uint64_t seed = 0;
  std::size_t width = 128;
  std::size_t height = 128;
  IntRange glyph_count{6, 14};
  IntRange glyph_scale{1, 3};
  Background background = Background::kMixed;
  IntRange background_level{0, 255};
  IntRange foreground_level{0, 255};
  int min_contrast = 96;  // luma difference between foreground and background base
  double edge_blend = 0.5;  // foreground weight on pixels bordering a stroke (not in the mask)

  void validate() const {
    if (width < 64 || height < 64) throw ContractError("synthetic scenes must be at least 64x64");
    for (const auto* r : {&glyph_count, &glyph_scale, &background_level, &foreground_level})
      if (r->min > r->max) throw ContractError("synth config: empty range");
    if (glyph_count.min < 0 || glyph_scale.min < 1)
      throw ContractError("synth config: glyph count must be >= 0 and scale >= 1");
    if (!(edge_blend >= 0.0 && edge_blend <= 1.0))
      throw ContractError("synth config: edge_blend must lie in [0, 1]");
    if (background_level.min < 0 || background_level.max > 255 || foreground_level.min < 0 ||
        foreground_level.max > 255)
      throw ContractError("synth config: colour levels must lie in 0..255");
  }
};

struct SyntheticScene {
  RgbImage image;
  MaskImage mask;
  RgbImage clean;  // background before any text was drawn
  std::array<std::uint8_t, 3> foreground{};
  Background background = Background::kFlat;
};

namespace detail {

class SceneRng {
 public:
  explicit SceneRng(std::uint64_t seed) : rng_(seed) {}
  int uniform(int lo, int hi) {  // inclusive
    const auto span = static_cast<std::uint64_t>(hi - lo) + 1;
    return lo + static_cast<int>(rng_() % span);
  }
  double unit() { return static_cast<double>(rng_() >> 11) * 0x1.0p-53; }

 private:
  std::mt19937_64 rng_;
};

inline double luma(const std::array<std::uint8_t, 3>& c) {
  return 0.299 * c[0] + 0.587 * c[1] + 0.114 * c[2];
}

inline std::uint8_t clamp_byte(double v) {
  return static_cast<std::uint8_t>(std::clamp(std::round(v), 0.0, 255.0));
}

inline std::array<std::uint8_t, 3> random_colour(SceneRng& rng, IntRange r) {
  return {static_cast<std::uint8_t>(rng.uniform(r.min, r.max)),
          static_cast<std::uint8_t>(rng.uniform(r.min, r.max)),
          static_cast<std::uint8_t>(rng.uniform(r.min, r.max))};
}

inline void paint_background(RgbImage& img, Background kind, const std::array<std::uint8_t, 3>& base,
                             SceneRng& rng) {
  const std::size_t w = img.width, h = img.height;
  switch (kind) {
    case Background::kFlat:
    case Background::kMixed:
      for (std::size_t y = 0; y < h; ++y)
        for (std::size_t x = 0; x < w; ++x) img.set(x, y, base);
      break;
    case Background::kGradient: {
      std::array<double, 3> delta;
      for (auto& d : delta) d = rng.uniform(-40, 40);
      const double angle = rng.unit() * 6.283185307179586;
      const double dx = std::cos(angle), dy = std::sin(angle);
      const double norm = 0.5 * (std::abs(dx) * w + std::abs(dy) * h);
      for (std::size_t y = 0; y < h; ++y)
        for (std::size_t x = 0; x < w; ++x) {
          const double t = ((x - w / 2.0) * dx + (y - h / 2.0) * dy) / norm;  // -1..1
          for (std::size_t c = 0; c < 3; ++c) img.at(x, y, c) = clamp_byte(base[c] + t * delta[c]);
        }
      break;
    }
    case Background::kChecker: {
      const int cell = rng.uniform(6, 16);
      std::array<double, 3> delta;
      for (auto& d : delta) d = rng.uniform(-24, 24);
      for (std::size_t y = 0; y < h; ++y)
        for (std::size_t x = 0; x < w; ++x) {
          const bool odd = ((x / cell) + (y / cell)) % 2 == 1;
          for (std::size_t c = 0; c < 3; ++c)
            img.at(x, y, c) = clamp_byte(base[c] + (odd ? delta[c] : -delta[c]));
        }
      break;
    }
    case Background::kNoise: {
      // Bilinearly interpolated value noise on a coarse lattice.
      const std::size_t cell = static_cast<std::size_t>(rng.uniform(6, 12));
      const std::size_t gw = w / cell + 2, gh = h / cell + 2;
      const double amp = rng.uniform(8, 28);
      std::vector<double> grid(gw * gh);
      for (auto& g : grid) g = (rng.unit() * 2.0 - 1.0) * amp;
      for (std::size_t y = 0; y < h; ++y)
        for (std::size_t x = 0; x < w; ++x) {
          const double fx = static_cast<double>(x) / cell, fy = static_cast<double>(y) / cell;
          const std::size_t gx = static_cast<std::size_t>(fx), gy = static_cast<std::size_t>(fy);
          const double tx = fx - gx, ty = fy - gy;
          const double v = (1 - ty) * ((1 - tx) * grid[gy * gw + gx] + tx * grid[gy * gw + gx + 1]) +
                           ty * ((1 - tx) * grid[(gy + 1) * gw + gx] + tx * grid[(gy + 1) * gw + gx + 1]);
          for (std::size_t c = 0; c < 3; ++c) img.at(x, y, c) = clamp_byte(base[c] + v);
        }
      break;
    }
  }
}

}  // namespace detail

/// Renders a background with words of 5x7 glyphs drawn in one contrasting
/// colour. The mask marks exactly the glyph pixels; unmasked pixels touching
/// a glyph (8-neighbourhood) are blended toward the foreground by
/// cfg.edge_blend to imitate soft stroke borders.
inline SyntheticScene render_synthetic_scene(const SynthConfig& cfg) {
  cfg.validate();
  detail::SceneRng rng(cfg.seed);
  SyntheticScene scene;
  scene.background = cfg.background;
  if (scene.background == Background::kMixed)
    scene.background = static_cast<Background>(rng.uniform(0, 3));

  std::array<std::uint8_t, 3> bg = detail::random_colour(rng, cfg.background_level);
  std::array<std::uint8_t, 3> fg{};
  bool found = false;
  for (int attempt = 0; attempt < 64 && !found; ++attempt) {
    fg = detail::random_colour(rng, cfg.foreground_level);
    found = std::abs(detail::luma(fg) - detail::luma(bg)) >= cfg.min_contrast;
  }
  if (!found) fg = {static_cast<std::uint8_t>(255 - bg[0]), static_cast<std::uint8_t>(255 - bg[1]),
                    static_cast<std::uint8_t>(255 - bg[2])};
  scene.foreground = fg;

  scene.image = RgbImage(cfg.width, cfg.height);
  scene.mask = MaskImage(cfg.width, cfg.height);
  detail::paint_background(scene.image, scene.background, bg, rng);
  scene.clean = scene.image;

  const int total = rng.uniform(cfg.glyph_count.min, cfg.glyph_count.max);
  int placed = 0;
  while (placed < total) {
    const int scale = rng.uniform(cfg.glyph_scale.min, cfg.glyph_scale.max);
    const int advance = (Font5x7::kWidth + 1) * scale;
    const int glyph_h = Font5x7::kHeight * scale;
    int len = std::min(rng.uniform(2, 6), total - placed);
    len = std::max(1, std::min(len, static_cast<int>(cfg.width) / advance));
    const int word_w = len * advance - scale;
    const int max_x = static_cast<int>(cfg.width) - word_w;
    const int max_y = static_cast<int>(cfg.height) - glyph_h;
    if (max_x < 0 || max_y < 0) {
      // glyph larger than the canvas at this scale; consume it
      placed += len;
      continue;
    }
    const int ox = rng.uniform(0, max_x), oy = rng.uniform(0, max_y);
    for (int g = 0; g < len; ++g) {
      const std::size_t glyph = static_cast<std::size_t>(rng.uniform(0, 35));
      for (int row = 0; row < Font5x7::kHeight; ++row)
        for (int col = 0; col < Font5x7::kWidth; ++col) {
          if (!Font5x7::pixel(glyph, row, col)) continue;
          for (int sy = 0; sy < scale; ++sy)
            for (int sx = 0; sx < scale; ++sx) {
              const auto x = static_cast<std::size_t>(ox + g * advance + col * scale + sx);
              const auto y = static_cast<std::size_t>(oy + row * scale + sy);
              scene.mask.set(x, y);
            }
        }
    }
    placed += len;
  }

  if (cfg.edge_blend > 0.0) {
    const MaskImage grown = dilate(scene.mask, 1);
    for (std::size_t y = 0; y < cfg.height; ++y)
      for (std::size_t x = 0; x < cfg.width; ++x)
        if (grown.at(x, y) && !scene.mask.at(x, y))
          for (std::size_t c = 0; c < 3; ++c)
            scene.image.at(x, y, c) = detail::clamp_byte(cfg.edge_blend * fg[c] +
                                                         (1.0 - cfg.edge_blend) * scene.image.at(x, y, c));
  }
  for (std::size_t y = 0; y < cfg.height; ++y)
    for (std::size_t x = 0; x < cfg.width; ++x)
      if (scene.mask.at(x, y)) scene.image.set(x, y, fg);
  return scene;
}

// ---------------------------------------------------------------------------
// Patch pairs

struct PatchOrigin {
  std::size_t image_id = 0;
  std::size_t x = 0;
  std::size_t y = 0;
  friend bool operator==(const PatchOrigin&, const PatchOrigin&) = default;
};

struct PatchPair {
  Tensor input;
  Tensor target;
  bool positive = false;
  PatchOrigin origin;
};

/// Crops aligned windows from the image and its inpainted target. A window
/// is positive iff it contains at least one mask pixel. Windows that would
/// cross the right or bottom edge are dropped.
inline std::vector<PatchPair> extract_patch_pairs(const RgbImage& image, const RgbImage& target,
                                                  const MaskImage& mask, std::size_t image_id = 0,
                                                  std::size_t window = 64,
                                                  std::size_t stride = 32) {
  require_same_size(image, target, "extract_patch_pairs");
  require_same_size(image, mask, "extract_patch_pairs");
  if (image.width < window || image.height < window)
    throw ContractError("extract_patch_pairs: image " + std::to_string(image.width) + "x" +
                        std::to_string(image.height) + " smaller than window " +
                        std::to_string(window));
  std::vector<PatchPair> out;
  for (std::size_t y = 0; y + window <= image.height; y += stride)
    for (std::size_t x = 0; x + window <= image.width; x += stride) {
      PatchPair p;
      p.input = crop_to_tensor(image, x, y, window, window);
      p.target = crop_to_tensor(target, x, y, window, window);
      p.origin = {image_id, x, y};
      for (std::size_t yy = y; yy < y + window && !p.positive; ++yy)
        for (std::size_t xx = x; xx < x + window; ++xx)
          if (mask.at(xx, yy)) {
            p.positive = true;
            break;
          }
      out.push_back(std::move(p));
    }
  return out;
}

/// Number of windows per axis for a given extent.
constexpr std::size_t window_count(std::size_t extent, std::size_t window = 64,
                                   std::size_t stride = 32) {
  return extent < window ? 0 : (extent - window) / stride + 1;
}

/// Keeps every positive pair and a seeded random subset of negatives of the
/// same size (all negatives when there are fewer). Relative order is kept.
inline std::vector<PatchPair> balance_pairs(std::vector<PatchPair> pairs, std::uint64_t seed) {
  std::vector<std::size_t> negatives;
  std::size_t positives = 0;
  for (std::size_t i = 0; i < pairs.size(); ++i) {
    if (pairs[i].positive)
      ++positives;
    else
      negatives.push_back(i);
  }
  std::vector<bool> keep(pairs.size(), true);
  if (negatives.size() > positives) {
    std::mt19937_64 rng(seed);
    // partial Fisher-Yates: the first `positives` entries are the kept ones
    for (std::size_t i = 0; i < positives; ++i) {
      const std::size_t j = i + static_cast<std::size_t>(rng() % (negatives.size() - i));
      std::swap(negatives[i], negatives[j]);
    }
    for (std::size_t i = positives; i < negatives.size(); ++i) keep[negatives[i]] = false;
  }
  std::vector<PatchPair> out;
  for (std::size_t i = 0; i < pairs.size(); ++i)
    if (keep[i]) out.push_back(std::move(pairs[i]));
  return out;
}

// ---------------------------------------------------------------------------
// Corpus manifest: image<TAB>mask<TAB>target<TAB>dilate_k per line. Relative
// paths are resolved against the manifest's directory.

struct ManifestEntry {
  std::filesystem::path image;
  std::filesystem::path mask;
  std::filesystem::path target;
  std::size_t dilate_k = 0;
  friend bool operator==(const ManifestEntry&, const ManifestEntry&) = default;
};

inline std::vector<ManifestEntry> parse_manifest(const std::string& text,
                                                 const std::filesystem::path& base = {}) {
  std::vector<ManifestEntry> out;
  std::istringstream in(text);
  std::string line;
  std::size_t line_no = 0;
  while (std::getline(in, line)) {
    ++line_no;
    if (!line.empty() && line.back() == '\r') line.pop_back();
    if (line.empty()) continue;
    std::vector<std::string> fields;
    std::size_t start = 0;
    for (std::size_t tab; (tab = line.find('\t', start)) != std::string::npos; start = tab + 1)
      fields.push_back(line.substr(start, tab - start));
    fields.push_back(line.substr(start));
    if (fields.size() != 4)
      throw ContractError("manifest line " + std::to_string(line_no) + ": expected 4 tab-separated fields, got " +
                          std::to_string(fields.size()));
    ManifestEntry e;
    auto resolve = [&](const std::string& p) {
      std::filesystem::path path(p);
      return path.is_relative() && !base.empty() ? base / path : path;
    };
    e.image = resolve(fields[0]);
    e.mask = resolve(fields[1]);
    e.target = resolve(fields[2]);
    try {
      std::size_t used = 0;
      e.dilate_k = std::stoul(fields[3], &used);
      if (used != fields[3].size()) throw std::invalid_argument("trailing");
    } catch (const std::exception&) {
      throw ContractError("manifest line " + std::to_string(line_no) + ": bad dilate_k '" +
                          fields[3] + "'");
    }
    out.push_back(std::move(e));
  }
  return out;
}

inline std::vector<ManifestEntry> read_manifest(const std::filesystem::path& path) {
  return parse_manifest(read_file_bytes(path), path.parent_path());
}

inline std::string format_manifest_line(const ManifestEntry& e) {
  return e.image.generic_string() + "\t" + e.mask.generic_string() + "\t" +
         e.target.generic_string() + "\t" + std::to_string(e.dilate_k) + "\n";
}

}  // namespace ste
