#pragma once

#include <cstdint>
#include <functional>
#include <span>
#include <vector>

#include "rp2/adam.hpp"
#include "rp2/classifier.hpp"
#include "rp2/dataset.hpp"

namespace rp2 {

struct TrainConfig {
  int epochs = 12;
  int batch_size = 32;
  double learning_rate = 1e-3;
  std::uint64_t seed = 1;
  /// Random +/-2 px shifts and +/-0.1 brightness per training draw.
  bool augmentation = true;
  int threads = 1;
};

struct EpochMetrics {
  int epoch = 0;
  double train_loss = 0.0;
  double train_accuracy = 0.0;
  double val_accuracy = 0.0;
};

struct TrainResult {
  ModelParameters params;  // best validation accuracy seen, epoch 0 = initialization
  std::vector<EpochMetrics> metrics;
  int best_epoch = 0;
  double best_val_accuracy = 0.0;
};

using EpochCallback = std::function<void(const EpochMetrics&)>;

/// Adam training of the reference architecture; deterministic in config.seed
/// and independent of config.threads.
TrainResult train(const SignDataset& dataset, const TrainConfig& config, const EpochCallback& on_epoch = {});

/// Mean cross-entropy over a batch.
double batch_loss(const ModelParameters& params, const Tensor& images, std::span<const int> labels, int threads = 1);

/// One optimizer step on the given batch; returns the pre-step mean loss.
double train_step(ModelParameters& params, AdamState& state, const Tensor& images, std::span<const int> labels,
                  int threads = 1);

double accuracy(const ModelParameters& params, const DatasetSplit& split, int threads = 1);

}  // namespace rp2
