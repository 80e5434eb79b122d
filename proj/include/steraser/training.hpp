#pragma once

#include <cstdint>
#include <functional>
#include <numeric>
#include <random>
#include <span>
#include <vector>

#include "steraser/datagen.hpp"
#include "steraser/eraser_net.hpp"

namespace ste {

struct LossRecord {
  std::size_t step = 0;
  double loss = 0.0;
};

using LossCallback = std::function<void(const LossRecord&)>;

/// Runs cfg.max_steps SGD steps over `pairs`, drawing batches from seeded
/// epoch-wise shuffles. Batches are capped at the number of pairs. Steps
/// 0, log_every, 2*log_every, ... and the final step are logged.
inline std::vector<LossRecord> train(EraserModel& model, std::span<const PatchPair> pairs,
                                     const TrainConfig& cfg, const LossCallback& on_log = {}) {
  cfg.validate();
  if (pairs.empty()) throw ContractError("train: no training pairs");
  const std::size_t batch = std::min(cfg.batch_size, pairs.size());
  std::mt19937_64 rng(cfg.seed);
  std::vector<std::size_t> order(pairs.size());
  std::iota(order.begin(), order.end(), 0);
  std::size_t cursor = order.size();

  std::vector<LossRecord> log;
  std::vector<Tensor> xs, ys;
  for (std::size_t step = 0; step < cfg.max_steps; ++step) {
    xs.clear();
    ys.clear();
    while (xs.size() < batch) {
      if (cursor == order.size()) {
        for (std::size_t i = order.size(); i > 1; --i)
          std::swap(order[i - 1], order[static_cast<std::size_t>(rng() % i)]);
        cursor = 0;
      }
      const auto& p = pairs[order[cursor++]];
      xs.push_back(p.input);
      ys.push_back(p.target);
    }
    const double loss = train_step(model, TrainBatch::from(xs, ys), cfg, step);
    const bool last = step + 1 == cfg.max_steps;
    if ((cfg.log_every && step % cfg.log_every == 0) || last) {
      log.push_back({step, loss});
      if (on_log) on_log(log.back());
    }
  }
  return log;
}

}  // namespace ste
