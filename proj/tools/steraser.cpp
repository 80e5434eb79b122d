// steraser: synthetic corpus generation, training, inference and evaluation
// for the patch-based scene text eraser.

#include <CLI11.hpp>

#include <cstdlib>
#include <iostream>
#include <map>
#include <set>
#include <string>
#include <vector>

#include "commands.hpp"

namespace {

using namespace ste;
using namespace ste::cli;

/// Reads "key=value" lines ('#' comments, blank lines ignored).
std::map<std::string, std::string> read_config_file(const std::string& path) {
  std::map<std::string, std::string> out;
  std::istringstream in(read_file_bytes(path));
  std::string line;
  std::size_t n = 0;
  while (std::getline(in, line)) {
    ++n;
    if (const auto hash = line.find('#'); hash != std::string::npos) line.erase(hash);
    const auto first = line.find_first_not_of(" \t\r");
    if (first == std::string::npos) continue;
    const auto eq = line.find('=');
    if (eq == std::string::npos)
      throw ConfigError(path + ":" + std::to_string(n) + ": expected key=value");
    auto trim = [](std::string s) {
      const auto b = s.find_first_not_of(" \t\r");
      const auto e = s.find_last_not_of(" \t\r");
      return b == std::string::npos ? std::string() : s.substr(b, e - b + 1);
    };
    out[trim(line.substr(0, eq))] = trim(line.substr(eq + 1));
  }
  return out;
}

/// Appends config-file entries as long flags unless the same flag already
/// appears on the command line, so flags win over the file.
std::vector<std::string> merge_config(std::vector<std::string> args) {
  std::string config_path;
  for (std::size_t i = 0; i < args.size(); ++i) {
    if (args[i] == "--config" && i + 1 < args.size()) {
      config_path = args[i + 1];
      args.erase(args.begin() + static_cast<long>(i), args.begin() + static_cast<long>(i) + 2);
      break;
    }
    if (args[i].rfind("--config=", 0) == 0) {
      config_path = args[i].substr(9);
      args.erase(args.begin() + static_cast<long>(i));
      break;
    }
  }
  if (config_path.empty()) return args;
  std::set<std::string> given;
  for (const auto& a : args)
    if (a.rfind("--", 0) == 0) given.insert(a.substr(2, a.find('=') == std::string::npos ? std::string::npos : a.find('=') - 2));
  for (const auto& [key, value] : read_config_file(config_path)) {
    if (given.count(key)) continue;
    args.push_back("--" + key);
    if (value != "true") args.push_back(value);
  }
  return args;
}

std::string resolved_config(const CLI::App& sub, const std::string& command) {
  return "# steraser " + command + "\n" + sub.config_to_str(true, false);
}

int run(int argc, char** argv) {
  CLI::App app{"Scene text eraser: synthetic data, training, inference and evaluation"};
  app.require_subcommand(1);
  app.set_help_all_flag("--help-all");

  // gen-data
  GenDataOptions gen;
  auto* gen_cmd = app.add_subcommand("gen-data", "Render a synthetic corpus with inpainted targets");
  gen_cmd->add_option("--out", gen.out, "Output directory")->required();
  gen_cmd->add_option("--seed", gen.seed, "Corpus seed")->capture_default_str();
  gen_cmd->add_option("--count", gen.count, "Number of scenes")->capture_default_str();
  gen_cmd->add_option("--size", gen.size, "Scene width and height")->capture_default_str();
  gen_cmd->add_option("--dilate-k", gen.dilate_ks, "Dilation counts for targets")
      ->capture_default_str()
      ->delimiter(',');
  gen_cmd->add_option("--background", gen.background, "flat|gradient|checker|noise|mixed")
      ->capture_default_str();

  // train
  TrainOptions tr;
  tr.train.max_steps = 1000;
  auto* train_cmd = app.add_subcommand("train", "Train the eraser network with plain SGD");
  train_cmd->add_option("--corpus", tr.corpus, "Corpus manifest (manifest.tsv)")->required();
  train_cmd->add_option("--out", tr.out, "Output directory")->required();
  train_cmd->add_option("--steps", tr.train.max_steps, "SGD steps")->capture_default_str();
  train_cmd->add_option("--lr", tr.train.learning_rate, "Learning rate")->capture_default_str();
  train_cmd->add_option("--batch", tr.train.batch_size, "Batch size")->capture_default_str();
  train_cmd->add_option("--seed", tr.train.seed, "Seed for init, sampling and shuffling")
      ->capture_default_str();
  train_cmd->add_option("--dilate-k", tr.dilate_k, "Target variant to train on (0|1|3)")
      ->capture_default_str();
  train_cmd->add_option("--log-every", tr.train.log_every, "Loss logging interval")
      ->capture_default_str();

  // erase
  EraseOptions er;
  auto* erase_cmd = app.add_subcommand("erase", "Erase text from a PPM image");
  erase_cmd->add_option("--weights", er.weights, "TXERASE1 weight file")->required();
  erase_cmd->add_option("--input", er.input, "Input PPM")->required();
  erase_cmd->add_option("--output", er.output, "Output PPM")->required();

  // eval
  EvalOptions ev;
  auto* eval_cmd = app.add_subcommand("eval", "Detection or pixel-level erasure metrics");
  eval_cmd->add_option("--mode", ev.mode, "boxes|pixels")->capture_default_str();
  eval_cmd->add_option("--dets", ev.dets, "Directory of detection box files");
  eval_cmd->add_option("--gts", ev.gts, "Directory of ground-truth box files");
  eval_cmd->add_option("--corpus", ev.corpus, "Corpus manifest (pixels mode)");
  eval_cmd->add_option("--input", ev.input, "Directory of erased images (pixels mode)");
  eval_cmd->add_option("--dilate-k", ev.dilate_k, "Target variant to compare against")
      ->capture_default_str();
  eval_cmd->add_option("--iou", ev.iou_threshold, "Match threshold")->capture_default_str();
  eval_cmd->add_option("--out", ev.out, "Write the report to this file");
  eval_cmd->add_flag("--json", ev.json, "Append a single-line JSON record");

  // gradcheck
  std::uint64_t grad_seed = 0;
  auto* grad_cmd = app.add_subcommand("gradcheck", "Finite-difference check of all kernels");
  grad_cmd->add_option("--seed", grad_seed, "Seed for random tensors")->capture_default_str();

  std::vector<std::string> args(argv + 1, argv + argc);
  try {
    args = merge_config(std::move(args));
  } catch (const ConfigError& e) {
    std::cerr << "config error: " << e.what() << "\n";
    return kConfig;
  } catch (const IoError& e) {
    std::cerr << "io error: " << e.what() << "\n";
    return kIo;
  }
  std::reverse(args.begin(), args.end());
  try {
    app.parse(args);
  } catch (const CLI::CallForHelp& e) {
    return app.exit(e);
  } catch (const CLI::CallForAllHelp& e) {
    return app.exit(e);
  } catch (const CLI::ParseError& e) {
    app.exit(e);
    return kConfig;
  }

  try {
    if (*gen_cmd) {
      const auto cfg = resolved_config(*gen_cmd, "gen-data");
      std::cerr << cfg;
      gen_data(gen, cfg, std::cout);
    } else if (*train_cmd) {
      const auto cfg = resolved_config(*train_cmd, "train");
      std::cerr << cfg;
      train_command(tr, cfg, std::cout);
    } else if (*erase_cmd) {
      const auto cfg = resolved_config(*erase_cmd, "erase");
      std::cerr << cfg;
      erase_command(er, cfg, std::cout);
    } else if (*eval_cmd) {
      std::cerr << resolved_config(*eval_cmd, "eval");
      const auto r = eval_command(ev, std::cerr);
      std::cout << r.report;
    } else if (*grad_cmd) {
      std::cerr << resolved_config(*grad_cmd, "gradcheck");
      return gradcheck_command(grad_seed, std::cout) ? kOk : kNumeric;
    }
  } catch (const ConfigError& e) {
    std::cerr << "config error: " << e.what() << "\n";
    return kConfig;
  } catch (const ContractError& e) {
    std::cerr << "config error: " << e.what() << "\n";
    return kConfig;
  } catch (const NumericError& e) {
    std::cerr << "numeric error: " << e.what() << "\n";
    return kNumeric;
  } catch (const FormatError& e) {
    std::cerr << "io error: " << e.what() << "\n";
    return kIo;
  } catch (const IoError& e) {
    std::cerr << "io error: " << e.what() << "\n";
    return kIo;
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << "\n";
    return kFailure;
  }
  return kOk;
}

}  // namespace

int main(int argc, char** argv) { return run(argc, argv); }
