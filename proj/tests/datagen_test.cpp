#include <gtest/gtest.h>

#include <algorithm>
#include <random>

#include "steraser/datagen.hpp"
#include "test_util.hpp"

using namespace ste;
using ste::testing::random_image;

namespace {

MaskImage single_pixel(std::size_t w, std::size_t h, std::size_t x, std::size_t y) {
  MaskImage m(w, h);
  m.set(x, y);
  return m;
}

bool is_subset(const MaskImage& a, const MaskImage& b) {
  for (std::size_t i = 0; i < a.bits.size(); ++i)
    if (a.bits[i] && !b.bits[i]) return false;
  return true;
}

MaskImage random_mask(std::size_t w, std::size_t h, std::uint64_t seed, double density) {
  std::mt19937_64 rng(seed);
  std::bernoulli_distribution d(density);
  MaskImage m(w, h);
  for (auto& b : m.bits) b = d(rng);
  return m;
}

MaskImage changed_pixels(const RgbImage& a, const RgbImage& b) {
  MaskImage m(a.width, a.height);
  for (std::size_t i = 0; i < m.bits.size(); ++i)
    for (std::size_t c = 0; c < 3; ++c)
      if (a.pixels[i * 3 + c] != b.pixels[i * 3 + c]) m.bits[i] = 1;
  return m;
}

}  // namespace

TEST(Dilate, SinglePixelGrowsToSquares) {
  const auto m = single_pixel(9, 9, 4, 4);
  for (std::size_t k : {1u, 3u}) {
    const auto d = dilate(m, k);
    EXPECT_EQ(d.count(), (2 * k + 1) * (2 * k + 1));
    for (std::size_t y = 0; y < 9; ++y)
      for (std::size_t x = 0; x < 9; ++x) {
        const bool inside = std::max(x, std::size_t{4}) - std::min(x, std::size_t{4}) <= k &&
                            std::max(y, std::size_t{4}) - std::min(y, std::size_t{4}) <= k;
        EXPECT_EQ(d.at(x, y), inside) << x << "," << y << " k=" << k;
      }
  }
}

TEST(Dilate, ThreeIterationsEqualRepeatedSingleSteps) {
  const auto m = random_mask(20, 17, 3, 0.05);
  EXPECT_EQ(dilate(m, 3), dilate(dilate(dilate(m, 1), 1), 1));
}

TEST(Dilate, ZeroIterationsAndEmptyMask) {
  const auto m = random_mask(10, 10, 1, 0.2);
  EXPECT_EQ(dilate(m, 0), m);
  EXPECT_TRUE(dilate(MaskImage(10, 10), 3).empty());
}

TEST(Dilate, Monotone) {
  for (std::uint64_t seed = 0; seed < 5; ++seed) {
    const auto m = random_mask(32, 24, seed, 0.03);
    EXPECT_TRUE(is_subset(m, dilate(m, 1)));
    EXPECT_TRUE(is_subset(dilate(m, 1), dilate(m, 2)));
    EXPECT_TRUE(is_subset(dilate(m, 1), dilate(m, 3)));
  }
}

TEST(Dilate, CommutesWithTranslationAwayFromBorder) {
  MaskImage m(30, 30), shifted(30, 30);
  const auto src = random_mask(10, 10, 9, 0.2);
  for (std::size_t y = 0; y < 10; ++y)
    for (std::size_t x = 0; x < 10; ++x)
      if (src.at(x, y)) {
        m.set(x + 8, y + 8);
        shifted.set(x + 11, y + 9);
      }
  const auto a = dilate(m, 2), b = dilate(shifted, 2);
  for (std::size_t y = 0; y + 1 < 30; ++y)
    for (std::size_t x = 0; x + 3 < 30; ++x) EXPECT_EQ(a.at(x, y), b.at(x + 3, y + 1));
}

TEST(Inpaint, UniformImageIsFixedPoint) {
  RgbImage img(16, 12);
  for (std::size_t i = 0; i < img.pixels.size(); i += 3) {
    img.pixels[i] = 40;
    img.pixels[i + 1] = 120;
    img.pixels[i + 2] = 200;
  }
  EXPECT_EQ(inpaint(img, random_mask(16, 12, 2, 0.4)), img);
}

TEST(Inpaint, SingleMaskedPixelTakesNeighbourMean) {
  RgbImage img(3, 3, 0);
  const std::uint8_t around[4][3] = {{1, 0, 10}, {0, 1, 20}, {2, 1, 30}, {1, 2, 40}};
  for (const auto& a : around)
    for (std::size_t c = 0; c < 3; ++c) img.at(a[0], a[1], c) = a[2];
  img.set(1, 1, {255, 255, 255});
  const auto out = inpaint(img, single_pixel(3, 3, 1, 1));
  for (std::size_t c = 0; c < 3; ++c) EXPECT_NEAR(out.at(1, 1, c), 25, 1);
  EXPECT_EQ(out.at(1, 1, 0), 25);
}

TEST(Inpaint, UnmaskedPixelsAreBitIdentical) {
  const auto img = random_image(40, 30, 5);
  const auto mask = random_mask(40, 30, 6, 0.3);
  const auto out = inpaint(img, mask);
  for (std::size_t i = 0; i < mask.bits.size(); ++i)
    if (!mask.bits[i]) {
      for (std::size_t c = 0; c < 3; ++c) ASSERT_EQ(out.pixels[i * 3 + c], img.pixels[i * 3 + c]);
    }
}

// Every filled value lies within the range of the unmasked 4-neighbour values
// bordering its masked component.
TEST(Inpaint, MaximumPrinciplePerComponent) {
  for (std::uint64_t seed = 0; seed < 4; ++seed) {
    const std::size_t w = 48, h = 40;
    const auto img = random_image(w, h, 100 + seed);
    const auto mask = dilate(random_mask(w, h, 200 + seed, 0.01), 2);
    const auto out = inpaint(img, mask);

    std::vector<int> label(w * h, -1);
    int n = 0;
    for (std::size_t s = 0; s < w * h; ++s) {
      if (!mask.bits[s] || label[s] >= 0) continue;
      std::vector<std::size_t> stack{s};
      label[s] = n;
      std::array<int, 3> lo{255, 255, 255}, hi{0, 0, 0};
      std::vector<std::size_t> members;
      while (!stack.empty()) {
        const std::size_t p = stack.back();
        stack.pop_back();
        members.push_back(p);
        const std::size_t x = p % w, y = p / w;
        std::vector<std::size_t> nb;
        if (x > 0) nb.push_back(p - 1);
        if (x + 1 < w) nb.push_back(p + 1);
        if (y > 0) nb.push_back(p - w);
        if (y + 1 < h) nb.push_back(p + w);
        for (std::size_t q : nb) {
          if (mask.bits[q]) {
            if (label[q] < 0) {
              label[q] = n;
              stack.push_back(q);
            }
          } else {
            for (std::size_t c = 0; c < 3; ++c) {
              lo[c] = std::min(lo[c], int(img.pixels[q * 3 + c]));
              hi[c] = std::max(hi[c], int(img.pixels[q * 3 + c]));
            }
          }
        }
      }
      for (std::size_t p : members)
        for (std::size_t c = 0; c < 3; ++c) {
          EXPECT_GE(int(out.pixels[p * 3 + c]), lo[c] - 1);
          EXPECT_LE(int(out.pixels[p * 3 + c]), hi[c] + 1);
        }
      ++n;
    }
    EXPECT_GT(n, 0);
  }
}

TEST(Inpaint, LinearRampIsReproduced) {
  // A linear function is harmonic, so the fill must recover it.
  RgbImage img(20, 9);
  for (std::size_t y = 0; y < 9; ++y)
    for (std::size_t x = 0; x < 20; ++x) img.set(x, y, {std::uint8_t(10 * x), 50, std::uint8_t(5 * y)});
  MaskImage mask(20, 9);
  for (std::size_t y = 2; y < 7; ++y)
    for (std::size_t x = 5; x < 15; ++x) mask.set(x, y);
  const auto out = inpaint(img, mask);
  for (std::size_t i = 0; i < img.pixels.size(); ++i) EXPECT_NEAR(out.pixels[i], img.pixels[i], 1);
}

TEST(Inpaint, FullyMaskedImageIsAnError) {
  EXPECT_THROW(inpaint(RgbImage(4, 4), MaskImage(4, 4, true)), ContractError);
  EXPECT_THROW(inpaint(RgbImage(4, 4), MaskImage(4, 5)), ContractError);
}

TEST(MakeTarget, VariantsAndEmptyMask) {
  SynthConfig cfg;
  cfg.seed = 3;
  cfg.background = Background::kFlat;
  const auto scene = render_synthetic_scene(cfg);
  EXPECT_EQ(make_target(scene.image, scene.mask, 0), inpaint(scene.image, scene.mask));
  const auto c0 = changed_pixels(scene.image, make_target(scene.image, scene.mask, 0));
  const auto c1 = changed_pixels(scene.image, make_target(scene.image, scene.mask, 1));
  const auto c3 = changed_pixels(scene.image, make_target(scene.image, scene.mask, 3));
  EXPECT_TRUE(is_subset(c0, c1));
  EXPECT_TRUE(is_subset(c1, c3));
  EXPECT_TRUE(is_subset(c3, dilate(scene.mask, 3)));
  EXPECT_GT(c3.count(), c0.count());
  EXPECT_EQ(make_target(scene.image, MaskImage(128, 128), 3), scene.image);
}

TEST(MakeTarget, FlatBackgroundIsRestoredWithThreeDilations) {
  SynthConfig cfg;
  cfg.seed = 11;
  cfg.background = Background::kFlat;
  const auto scene = render_synthetic_scene(cfg);
  EXPECT_EQ(make_target(scene.image, scene.mask, 3), scene.clean);
  EXPECT_NE(make_target(scene.image, scene.mask, 0), scene.clean);  // soft borders survive
}

TEST(Synthetic, Deterministic) {
  SynthConfig cfg;
  cfg.seed = 77;
  const auto a = render_synthetic_scene(cfg), b = render_synthetic_scene(cfg);
  EXPECT_EQ(a.image, b.image);
  EXPECT_EQ(a.mask, b.mask);
  cfg.seed = 78;
  EXPECT_NE(render_synthetic_scene(cfg).image, a.image);
}

TEST(Synthetic, MaskPixelsCarryForegroundColour) {
  for (auto bg : {Background::kFlat, Background::kGradient, Background::kChecker, Background::kNoise}) {
    SynthConfig cfg;
    cfg.seed = 5;
    cfg.background = bg;
    const auto s = render_synthetic_scene(cfg);
    EXPECT_GT(s.mask.count(), 0u);
    for (std::size_t y = 0; y < s.mask.height; ++y)
      for (std::size_t x = 0; x < s.mask.width; ++x)
        if (s.mask.at(x, y)) {
          for (std::size_t c = 0; c < 3; ++c) ASSERT_EQ(s.image.at(x, y, c), s.foreground[c]);
        }
    // outside the stroke border the clean background is untouched
    const auto border = dilate(s.mask, 1);
    for (std::size_t i = 0; i < border.bits.size(); ++i)
      if (!border.bits[i]) {
        for (std::size_t c = 0; c < 3; ++c) ASSERT_EQ(s.image.pixels[i * 3 + c], s.clean.pixels[i * 3 + c]);
      }
  }
}

TEST(Synthetic, NoGlyphsGivesEmptyMask) {
  SynthConfig cfg;
  cfg.glyph_count = {0, 0};
  const auto s = render_synthetic_scene(cfg);
  EXPECT_TRUE(s.mask.empty());
  EXPECT_EQ(s.image, s.clean);
}

TEST(Synthetic, RejectsInvalidConfig) {
  SynthConfig cfg;
  cfg.width = 32;
  EXPECT_THROW(render_synthetic_scene(cfg), ContractError);
  cfg = SynthConfig{};
  cfg.glyph_scale = {3, 1};
  EXPECT_THROW(render_synthetic_scene(cfg), ContractError);
}

TEST(PatchPairs, GridOf128Image) {
  const auto img = random_image(128, 128, 1);
  const auto pairs = extract_patch_pairs(img, img, MaskImage(128, 128));
  ASSERT_EQ(pairs.size(), 9u);
  for (const auto& p : pairs) {
    EXPECT_EQ(p.origin.x % 32, 0u);
    EXPECT_EQ(p.origin.y % 32, 0u);
    EXPECT_FALSE(p.positive);
    EXPECT_EQ(p.input, p.target);
    EXPECT_EQ(p.input.shape(), (Shape{3, 64, 64}));
  }
  EXPECT_EQ(pairs[4].origin, (PatchOrigin{0, 32, 32}));
  EXPECT_EQ(pairs[4].input(1, 0, 0), img.at(32, 32, 1) / 255.0);
}

TEST(PatchPairs, CountMatchesClosedForm) {
  for (auto [w, h] : {std::pair{64u, 64u}, {200u, 130u}, {95u, 160u}}) {
    const auto img = random_image(w, h, 2);
    EXPECT_EQ(extract_patch_pairs(img, img, MaskImage(w, h)).size(), window_count(w) * window_count(h));
  }
}

TEST(PatchPairs, SingleMaskPixelMakesExactlyItsWindowsPositive) {
  const auto img = random_image(128, 128, 3);
  const auto target = random_image(128, 128, 4);
  const auto pairs = extract_patch_pairs(img, target, single_pixel(128, 128, 40, 10));
  std::size_t positives = 0;
  for (const auto& p : pairs) {
    const bool covers = p.origin.x <= 40 && 40 < p.origin.x + 64 && p.origin.y <= 10 && 10 < p.origin.y + 64;
    EXPECT_EQ(p.positive, covers);
    positives += p.positive;
    // target crop comes from the target image at the same position
    EXPECT_EQ(p.target(2, 3, 5), target.at(p.origin.x + 5, p.origin.y + 3, 2) / 255.0);
  }
  EXPECT_EQ(positives, 2u);  // x windows 0 and 32, y window 0
}

TEST(PatchPairs, RejectsSmallOrMismatchedImages) {
  EXPECT_THROW(extract_patch_pairs(RgbImage(63, 100), RgbImage(63, 100), MaskImage(63, 100)), ContractError);
  EXPECT_THROW(extract_patch_pairs(RgbImage(64, 64), RgbImage(64, 65), MaskImage(64, 64)), ContractError);
}

TEST(BalancePairs, KeepsPositivesAndSubsamplesNegatives) {
  std::vector<PatchPair> pairs(20);
  for (std::size_t i = 0; i < pairs.size(); ++i) {
    pairs[i].positive = i % 5 == 0;  // 4 positives
    pairs[i].origin.x = i;
  }
  const auto a = balance_pairs(pairs, 9), b = balance_pairs(pairs, 9);
  ASSERT_EQ(a.size(), 8u);
  std::size_t pos = 0;
  for (std::size_t i = 0; i < a.size(); ++i) {
    pos += a[i].positive;
    EXPECT_EQ(a[i].origin, b[i].origin);
    if (i > 0) {
      EXPECT_LT(a[i - 1].origin.x, a[i].origin.x);
    }
  }
  EXPECT_EQ(pos, 4u);
}

TEST(BalancePairs, FewNegativesAreAllKept) {
  std::vector<PatchPair> pairs(6);
  for (std::size_t i = 0; i < 5; ++i) pairs[i].positive = true;
  EXPECT_EQ(balance_pairs(pairs, 1).size(), 6u);
}

TEST(Manifest, FormatAndParse) {
  const ManifestEntry e{"images/a.ppm", "masks/a.pgm", "targets/a_k3.ppm", 3};
  const std::string text = format_manifest_line(e) + "\n" + format_manifest_line(e);  // blank line skipped
  const auto parsed = parse_manifest(text);
  ASSERT_EQ(parsed.size(), 2u);
  EXPECT_EQ(parsed[0], e);
  const auto based = parse_manifest(text, "/data");
  EXPECT_EQ(based[0].image, std::filesystem::path("/data/images/a.ppm"));
  EXPECT_THROW(parse_manifest("a\tb\tc\n"), ContractError);
  EXPECT_THROW(parse_manifest("a\tb\tc\tx\n"), ContractError);
}
