#pragma once

// Subcommand implementations behind the `steraser` executable. Kept out of
// main() so the integration tests can drive them directly.

#include <json.hpp>

#include <algorithm>
#include <cstdint>
#include <filesystem>
#include <fstream>
#include <iomanip>
#include <map>
#include <ostream>
#include <set>
#include <sstream>
#include <string>
#include <vector>

#include "steraser/datagen.hpp"
#include "steraser/erase_pipeline.hpp"
#include "steraser/eraser_net.hpp"
#include "steraser/eval.hpp"
#include "steraser/gradcheck.hpp"
#include "steraser/image_io.hpp"
#include "steraser/training.hpp"

namespace ste::cli {

namespace fs = std::filesystem;

/// Invalid or inconsistent run configuration.
class ConfigError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

enum ExitCode : int {
  kOk = 0,
  kFailure = 1,
  kConfig = 2,
  kIo = 3,
  kNumeric = 4,
};

inline void ensure_dir(const fs::path& dir) {
  std::error_code ec;
  fs::create_directories(dir, ec);
  if (ec) throw IoError("cannot create directory " + dir.string() + ": " + ec.message());
}

/// Writes the resolved configuration (key=value lines) as run.cfg.
inline void write_run_config(const fs::path& dir, const std::string& resolved) {
  write_file_bytes(dir / "run.cfg", resolved);
}

/// Per-scene seed derived from the corpus seed (splitmix64 step).
inline std::uint64_t scene_seed(std::uint64_t seed, std::uint64_t index) {
  std::uint64_t z = seed * 0x9E3779B97F4A7C15ULL + index + 1;
  z = (z ^ (z >> 30)) * 0xBF58476D1CE4E5B9ULL;
  z = (z ^ (z >> 27)) * 0x94D049BB133111EBULL;
  return z ^ (z >> 31);
}

// ---------------------------------------------------------------------------
// gen-data

struct GenDataOptions {
  fs::path out;
  std::uint64_t seed = 0;
  std::size_t count = 10;
  std::size_t size = 128;
  std::vector<std::size_t> dilate_ks{0, 1, 3};
  std::string background = "mixed";
};

struct GenDataResult {
  fs::path manifest;
  std::size_t images = 0, masks = 0, targets = 0;
};

inline std::string scene_name(std::size_t i) {
  std::ostringstream os;
  os << "scene_" << std::setw(5) << std::setfill('0') << i;
  return os.str();
}

inline GenDataResult gen_data(const GenDataOptions& opt, const std::string& resolved,
                              std::ostream& log) {
  if (opt.out.empty()) throw ConfigError("gen-data: --out is required");
  if (opt.count == 0) throw ConfigError("gen-data: --count must be >= 1");
  for (auto k : opt.dilate_ks)
    if (k > 64) throw ConfigError("gen-data: dilate-k out of range");
  SynthConfig base;
  base.width = base.height = opt.size;
  try {
    base.background = parse_background(opt.background);
    base.validate();
  } catch (const ContractError& e) {
    throw ConfigError(std::string("gen-data: ") + e.what());
  }

  ensure_dir(opt.out / "images");
  ensure_dir(opt.out / "masks");
  ensure_dir(opt.out / "targets");
  write_run_config(opt.out, resolved);

  GenDataResult r;
  std::string manifest;
  for (std::size_t i = 0; i < opt.count; ++i) {
    SynthConfig cfg = base;
    cfg.seed = scene_seed(opt.seed, i);
    const SyntheticScene scene = render_synthetic_scene(cfg);
    const std::string name = scene_name(i);
    const fs::path image = fs::path("images") / (name + ".ppm");
    const fs::path mask = fs::path("masks") / (name + ".pgm");
    write_image(scene.image, opt.out / image);
    write_mask(scene.mask, opt.out / mask);
    ++r.images;
    ++r.masks;
    for (const std::size_t k : opt.dilate_ks) {
      const fs::path target = fs::path("targets") / (name + "_k" + std::to_string(k) + ".ppm");
      write_image(make_target(scene.image, scene.mask, k), opt.out / target);
      ++r.targets;
      manifest += format_manifest_line({image, mask, target, k});
    }
  }
  r.manifest = opt.out / "manifest.tsv";
  write_file_bytes(r.manifest, manifest);
  log << "wrote " << r.images << " scenes, " << r.targets << " targets to " << opt.out.string()
      << "\n";
  return r;
}

// ---------------------------------------------------------------------------
// train

struct TrainOptions {
  fs::path corpus;
  fs::path out;
  std::size_t dilate_k = 3;
  TrainConfig train;
};

/// Loads every manifest entry with the requested dilate_k into balanced
/// patch pairs.
inline std::vector<PatchPair> load_training_pairs(const fs::path& manifest, std::size_t dilate_k,
                                                  std::uint64_t seed) {
  std::vector<PatchPair> pairs;
  std::size_t id = 0;
  for (const auto& e : read_manifest(manifest)) {
    if (e.dilate_k != dilate_k) continue;
    const RgbImage image = read_image(e.image);
    const RgbImage target = read_image(e.target);
    const MaskImage mask = read_mask(e.mask);
    for (auto& p : extract_patch_pairs(image, target, mask, id++)) pairs.push_back(std::move(p));
  }
  return balance_pairs(std::move(pairs), seed);
}

struct TrainResult {
  fs::path weights;
  fs::path loss_log;
  std::vector<LossRecord> log;
  std::size_t pairs = 0;
};

inline TrainResult train_command(const TrainOptions& opt, const std::string& resolved,
                                 std::ostream& log) {
  if (opt.corpus.empty()) throw ConfigError("train: --corpus is required");
  if (opt.out.empty()) throw ConfigError("train: --out is required");
  try {
    opt.train.validate();
  } catch (const ContractError& e) {
    throw ConfigError(std::string("train: ") + e.what());
  }
  if (!fs::exists(opt.corpus)) throw IoError("train: corpus manifest not found: " + opt.corpus.string());
  const auto pairs = load_training_pairs(opt.corpus, opt.dilate_k, opt.train.seed);
  if (pairs.empty())
    throw ConfigError("train: corpus " + opt.corpus.string() + " has no entries with dilate_k " +
                      std::to_string(opt.dilate_k));

  ensure_dir(opt.out);
  write_run_config(opt.out, resolved);
  TrainResult r;
  r.pairs = pairs.size();
  r.loss_log = opt.out / "loss.tsv";
  std::ofstream loss_file(r.loss_log);
  if (!loss_file) throw IoError("cannot open " + r.loss_log.string());
  log << "training on " << pairs.size() << " patch pairs\n";

  EraserModel model = init_model(opt.train.seed);
  r.log = train(model, pairs, opt.train, [&](const LossRecord& rec) {
    loss_file << rec.step << '\t' << std::setprecision(10) << rec.loss << '\n';
    loss_file.flush();
    log << rec.step << '\t' << rec.loss << '\n';
  });
  r.weights = opt.out / "weights.txe";
  try {
    save_model(model, r.weights);
  } catch (const std::runtime_error& e) {
    throw IoError(e.what());
  }
  return r;
}

// ---------------------------------------------------------------------------
// erase

struct EraseOptions {
  fs::path weights;
  fs::path input;
  fs::path output;
};

inline void erase_command(const EraseOptions& opt, const std::string& resolved, std::ostream& log) {
  if (opt.weights.empty() || opt.input.empty() || opt.output.empty())
    throw ConfigError("erase: --weights, --input and --output are required");
  EraserModel model;
  try {
    model = load_model(opt.weights);
  } catch (const ModelFormatError& e) {
    throw IoError(opt.weights.string() + ": " + e.what());
  } catch (const std::runtime_error& e) {
    throw IoError(e.what());
  }
  const RgbImage input = read_image(opt.input);
  write_image(erase_image(input, model), opt.output);
  write_file_bytes(fs::path(opt.output.string() + ".run.cfg"), resolved);
  log << "erased " << opt.input.string() << " -> " << opt.output.string() << "\n";
}

// ---------------------------------------------------------------------------
// eval

struct EvalOptions {
  std::string mode = "boxes";  // boxes | pixels
  fs::path dets;
  fs::path gts;
  fs::path corpus;  // pixels mode: manifest of originals / masks / targets
  fs::path input;   // pixels mode: directory of erased images named like the originals
  std::size_t dilate_k = 3;
  double iou_threshold = 0.5;
  fs::path out;     // optional report file
  bool json = false;
};

struct EvalResult {
  std::vector<std::pair<std::string, MetricsReport>> per_image;
  MetricsReport total;
  PixelErasureReport pixels;
  std::size_t warnings = 0;
  std::string report;
};

namespace detail {

inline std::map<std::string, fs::path> list_box_files(const fs::path& dir) {
  if (!fs::is_directory(dir)) throw IoError("not a directory: " + dir.string());
  std::map<std::string, fs::path> out;
  for (const auto& e : fs::directory_iterator(dir))
    if (e.is_regular_file()) out[e.path().filename().string()] = e.path();
  return out;
}

inline std::string fmt(double v) {
  std::ostringstream os;
  os << std::fixed << std::setprecision(6) << v;
  return os.str();
}

}  // namespace detail

inline EvalResult eval_command(const EvalOptions& opt, std::ostream& log) {
  EvalResult r;
  std::ostringstream rep;
  nlohmann::json record;
  if (opt.mode == "boxes") {
    if (opt.dets.empty() || opt.gts.empty()) throw ConfigError("eval: --dets and --gts are required");
    const auto dets = detail::list_box_files(opt.dets);
    const auto gts = detail::list_box_files(opt.gts);
    for (const auto& [name, path] : dets)
      if (!gts.count(name)) {
        log << "warning: detection file without ground truth skipped: " << name << "\n";
        ++r.warnings;
      }
    for (const auto& [name, gt_path] : gts) {
      const auto it = dets.find(name);
      if (it == dets.end()) {
        log << "warning: ground truth file without detections skipped: " << name << "\n";
        ++r.warnings;
        continue;
      }
      std::vector<DetectionBox> d, g;
      try {
        d = parse_boxes(read_file_bytes(it->second));
        g = parse_boxes(read_file_bytes(gt_path));
      } catch (const ContractError& e) {
        throw IoError(name + ": " + e.what());
      }
      r.per_image.emplace_back(name, prf(match_detections(d, g, opt.iou_threshold), d.size(), g.size()));
    }
    std::vector<MetricsReport> parts;
    for (const auto& [name, m] : r.per_image) parts.push_back(m);
    r.total = aggregate(parts);

    rep << "mode\tboxes\n"
        << "matching\tone-to-one greedy IoU >= " << opt.iou_threshold << "\n";
    for (const auto& [name, m] : r.per_image)
      rep << "image." << name << "\trecall=" << detail::fmt(m.recall)
          << " precision=" << detail::fmt(m.precision) << " f_score=" << detail::fmt(m.f_score)
          << "\n";
    rep << "recall\t" << detail::fmt(r.total.recall) << "\n"
        << "precision\t" << detail::fmt(r.total.precision) << "\n"
        << "f_score\t" << detail::fmt(r.total.f_score) << "\n"
        << "matched\t" << r.total.matched << "\n"
        << "detections\t" << r.total.total_detections << "\n"
        << "ground_truth\t" << r.total.total_ground_truth << "\n"
        << "images\t" << r.per_image.size() << "\n"
        << "warnings\t" << r.warnings << "\n";
    record = {{"mode", "boxes"},
              {"recall", r.total.recall},
              {"precision", r.total.precision},
              {"f_score", r.total.f_score},
              {"matched", r.total.matched},
              {"detections", r.total.total_detections},
              {"ground_truth", r.total.total_ground_truth},
              {"images", r.per_image.size()},
              {"warnings", r.warnings}};
  } else if (opt.mode == "pixels") {
    if (opt.corpus.empty() || opt.input.empty())
      throw ConfigError("eval: pixels mode needs --corpus and --input (directory of erased images)");
    std::vector<PixelErasureReport> parts;
    std::size_t images = 0;
    for (const auto& e : read_manifest(opt.corpus)) {
      if (e.dilate_k != opt.dilate_k) continue;
      const fs::path erased_path = opt.input / e.image.filename();
      if (!fs::exists(erased_path)) {
        log << "warning: no erased image for " << e.image.filename().string() << ", skipped\n";
        ++r.warnings;
        continue;
      }
      parts.push_back(pixel_erasure_report(read_image(e.image), read_image(erased_path),
                                           read_image(e.target), read_mask(e.mask)));
      ++images;
    }
    r.pixels = aggregate(parts);
    rep << "mode\tpixels\n"
        << "masked_mae_vs_target\t" << detail::fmt(r.pixels.masked_mae_vs_target) << "\n"
        << "masked_mae_untouched\t" << detail::fmt(r.pixels.masked_mae_untouched) << "\n"
        << "unmasked_mae\t" << detail::fmt(r.pixels.unmasked_mae) << "\n"
        << "masked_pixels\t" << r.pixels.masked_pixels << "\n"
        << "empty_mask\t" << (r.pixels.empty_mask ? "true" : "false") << "\n"
        << "images\t" << images << "\n"
        << "warnings\t" << r.warnings << "\n";
    record = {{"mode", "pixels"},
              {"masked_mae_vs_target", r.pixels.masked_mae_vs_target},
              {"masked_mae_untouched", r.pixels.masked_mae_untouched},
              {"unmasked_mae", r.pixels.unmasked_mae},
              {"masked_pixels", r.pixels.masked_pixels},
              {"empty_mask", r.pixels.empty_mask},
              {"images", images},
              {"warnings", r.warnings}};
  } else {
    throw ConfigError("eval: --mode must be boxes or pixels, got '" + opt.mode + "'");
  }
  if (opt.json) rep << record.dump() << "\n";
  r.report = rep.str();
  if (!opt.out.empty()) write_file_bytes(opt.out, r.report);
  return r;
}

// ---------------------------------------------------------------------------
// gradcheck

constexpr double kGradTolerance = 1e-4;

inline bool gradcheck_command(std::uint64_t seed, std::ostream& out) {
  bool ok = true;
  for (const auto& c : run_gradcheck_suite(seed)) {
    const bool pass = c.max_relative_error < kGradTolerance;
    ok = ok && pass;
    out << c.name << '\t' << std::scientific << std::setprecision(3) << c.max_relative_error
        << '\t' << (pass ? "ok" : "FAIL") << '\n';
  }
  out << std::defaultfloat;
  return ok;
}

}  // namespace ste::cli
