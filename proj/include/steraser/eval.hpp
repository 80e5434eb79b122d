#pragma once

// Detection metrics (one-to-one IoU matching, precision / recall / f-score)
// and detector-free pixel erasure metrics.

#include <algorithm>
#include <cmath>
#include <cstdlib>
#include <sstream>
#include <string>
#include <tuple>
#include <utility>
#include <vector>

#include "steraser/image.hpp"
#include "steraser/tensor.hpp"

namespace ste {

/// Half-open pixel rectangle [x_min, x_max) x [y_min, y_max).
struct DetectionBox {
  long x_min = 0, y_min = 0, x_max = 0, y_max = 0;
  double score = 1.0;

  long area() const { return (x_max - x_min) * (y_max - y_min); }
  friend bool operator==(const DetectionBox&, const DetectionBox&) = default;
};

inline void validate_box(const DetectionBox& b) {
  if (!(b.x_min < b.x_max && b.y_min < b.y_max))
    throw ContractError("box must satisfy x_min < x_max and y_min < y_max");
}

inline double iou(const DetectionBox& a, const DetectionBox& b) {
  const long ix = std::max(0L, std::min(a.x_max, b.x_max) - std::max(a.x_min, b.x_min));
  const long iy = std::max(0L, std::min(a.y_max, b.y_max) - std::max(a.y_min, b.y_min));
  const long inter = ix * iy;
  const long uni = a.area() + b.area() - inter;
  return uni > 0 ? static_cast<double>(inter) / static_cast<double>(uni) : 0.0;
}

struct Matching {
  std::vector<std::pair<std::size_t, std::size_t>> pairs;  // (detection, ground truth)
  std::size_t matched() const { return pairs.size(); }
};

/// Greedy one-to-one matching in descending IoU order; ties go to the lower
/// detection index, then the lower ground-truth index.
inline Matching match_detections(const std::vector<DetectionBox>& dets,
                                 const std::vector<DetectionBox>& gts, double thresh = 0.5) {
  std::vector<std::tuple<double, std::size_t, std::size_t>> cands;
  for (std::size_t d = 0; d < dets.size(); ++d)
    for (std::size_t g = 0; g < gts.size(); ++g) {
      const double v = iou(dets[d], gts[g]);
      if (v >= thresh && v > 0.0) cands.emplace_back(v, d, g);
    }
  std::stable_sort(cands.begin(), cands.end(), [](const auto& a, const auto& b) {
    if (std::get<0>(a) != std::get<0>(b)) return std::get<0>(a) > std::get<0>(b);
    if (std::get<1>(a) != std::get<1>(b)) return std::get<1>(a) < std::get<1>(b);
    return std::get<2>(a) < std::get<2>(b);
  });
  std::vector<bool> det_used(dets.size()), gt_used(gts.size());
  Matching m;
  for (const auto& [v, d, g] : cands) {
    if (det_used[d] || gt_used[g]) continue;
    det_used[d] = gt_used[g] = true;
    m.pairs.emplace_back(d, g);
  }
  return m;
}

struct MetricsReport {
  double recall = 0.0;
  double precision = 0.0;
  double f_score = 0.0;
  std::size_t matched = 0;
  std::size_t total_detections = 0;
  std::size_t total_ground_truth = 0;
};

/// Harmonic mean of precision and recall, 0 when both are 0.
inline double f_measure(double precision, double recall) {
  const double s = precision + recall;
  return s > 0.0 ? 2.0 * precision * recall / s : 0.0;
}

inline MetricsReport prf(std::size_t matched, std::size_t total_dets, std::size_t total_gts) {
  if (matched > total_dets || matched > total_gts)
    throw ContractError("prf: matched count exceeds detections or ground truths");
  MetricsReport r;
  r.matched = matched;
  r.total_detections = total_dets;
  r.total_ground_truth = total_gts;
  r.precision = total_dets ? static_cast<double>(matched) / static_cast<double>(total_dets) : 0.0;
  r.recall = total_gts ? static_cast<double>(matched) / static_cast<double>(total_gts) : 0.0;
  r.f_score = f_measure(r.precision, r.recall);
  return r;
}

inline MetricsReport prf(const Matching& m, std::size_t total_dets, std::size_t total_gts) {
  return prf(m.matched(), total_dets, total_gts);
}

/// Micro-average: sums counts across images before computing rates.
inline MetricsReport aggregate(const std::vector<MetricsReport>& per_image) {
  std::size_t m = 0, d = 0, g = 0;
  for (const auto& r : per_image) {
    m += r.matched;
    d += r.total_detections;
    g += r.total_ground_truth;
  }
  return prf(m, d, g);
}

/// "x_min,y_min,x_max,y_max[,score]" per line; blank lines ignored.
inline std::vector<DetectionBox> parse_boxes(const std::string& text) {
  std::vector<DetectionBox> out;
  std::istringstream in(text);
  std::string line;
  std::size_t line_no = 0;
  while (std::getline(in, line)) {
    ++line_no;
    if (!line.empty() && line.back() == '\r') line.pop_back();
    if (line.find_first_not_of(" \t") == std::string::npos) continue;
    std::vector<std::string> f;
    std::size_t start = 0;
    for (std::size_t comma; (comma = line.find(',', start)) != std::string::npos; start = comma + 1)
      f.push_back(line.substr(start, comma - start));
    f.push_back(line.substr(start));
    const std::string where = "box line " + std::to_string(line_no);
    if (f.size() != 4 && f.size() != 5) throw ContractError(where + ": expected 4 or 5 fields");
    DetectionBox b;
    long* coords[4] = {&b.x_min, &b.y_min, &b.x_max, &b.y_max};
    try {
      for (int i = 0; i < 4; ++i) {
        std::size_t used = 0;
        *coords[i] = std::stol(f[static_cast<std::size_t>(i)], &used);
        if (f[static_cast<std::size_t>(i)].find_first_not_of(" \t", used) != std::string::npos)
          throw std::invalid_argument("trailing");
      }
      if (f.size() == 5) b.score = std::stod(f[4]);
    } catch (const std::exception&) {
      throw ContractError(where + ": malformed number");
    }
    try {
      validate_box(b);
    } catch (const ContractError& e) {
      throw ContractError(where + ": " + e.what());
    }
    if (!(b.score >= 0.0 && b.score <= 1.0)) throw ContractError(where + ": score outside [0, 1]");
    out.push_back(b);
  }
  return out;
}

struct PixelErasureReport {
  double masked_mae_vs_target = 0.0;   // erased vs target, mask pixels
  double masked_mae_untouched = 0.0;   // original vs target, mask pixels
  double unmasked_mae = 0.0;           // erased vs original, other pixels
  std::size_t masked_pixels = 0;
  std::size_t unmasked_pixels = 0;
  bool empty_mask = false;
};

inline PixelErasureReport pixel_erasure_report(const RgbImage& original, const RgbImage& erased,
                                               const RgbImage& target, const MaskImage& mask) {
  require_same_size(original, erased, "pixel_erasure_report");
  require_same_size(original, target, "pixel_erasure_report");
  require_same_size(original, mask, "pixel_erasure_report");
  PixelErasureReport r;
  double vs_target = 0, untouched = 0, unmasked = 0;
  for (std::size_t i = 0; i < mask.bits.size(); ++i) {
    double a = 0, b = 0, c = 0;
    for (std::size_t ch = 0; ch < 3; ++ch) {
      const int o = original.pixels[i * 3 + ch], e = erased.pixels[i * 3 + ch],
                t = target.pixels[i * 3 + ch];
      a += std::abs(e - t);
      b += std::abs(o - t);
      c += std::abs(e - o);
    }
    if (mask.bits[i]) {
      vs_target += a;
      untouched += b;
      ++r.masked_pixels;
    } else {
      unmasked += c;
      ++r.unmasked_pixels;
    }
  }
  r.empty_mask = r.masked_pixels == 0;
  if (!r.empty_mask) {
    r.masked_mae_vs_target = vs_target / (3.0 * r.masked_pixels);
    r.masked_mae_untouched = untouched / (3.0 * r.masked_pixels);
  }
  if (r.unmasked_pixels) r.unmasked_mae = unmasked / (3.0 * r.unmasked_pixels);
  return r;
}

/// Pools several images' reports, weighting by pixel counts.
inline PixelErasureReport aggregate(const std::vector<PixelErasureReport>& parts) {
  PixelErasureReport r;
  double a = 0, b = 0, c = 0;
  for (const auto& p : parts) {
    a += p.masked_mae_vs_target * p.masked_pixels;
    b += p.masked_mae_untouched * p.masked_pixels;
    c += p.unmasked_mae * p.unmasked_pixels;
    r.masked_pixels += p.masked_pixels;
    r.unmasked_pixels += p.unmasked_pixels;
  }
  r.empty_mask = r.masked_pixels == 0;
  if (!r.empty_mask) {
    r.masked_mae_vs_target = a / r.masked_pixels;
    r.masked_mae_untouched = b / r.masked_pixels;
  }
  if (r.unmasked_pixels) r.unmasked_mae = c / r.unmasked_pixels;
  return r;
}

}  // namespace ste
