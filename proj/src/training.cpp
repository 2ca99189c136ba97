#include "rp2/training.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>

#include "rp2/error.hpp"
#include "rp2/nn.hpp"
#include "rp2/parallel.hpp"
#include "rp2/rng.hpp"
#include "rp2/signs.hpp"

namespace rp2 {
namespace {

struct SampleGrad {
  double loss = 0.0;
  bool correct = false;
  std::vector<Tensor> grads;
};

SampleGrad sample_gradient(const ModelParameters& params, const Tensor& image, int label) {
  const ForwardTrace trace = forward_traced(params, image);
  const int target[1] = {label};
  nn::LossAndGrad lg = nn::softmax_cross_entropy(trace.logits, target);
  SampleGrad out;
  out.loss = lg.loss;
  out.correct = prediction_from_logits(trace.logits.values()).label == label;
  out.grads = backward(params, trace, lg.grad, true).params;
  return out;
}

Tensor augment(const Tensor& image, Rng& rng) {
  const int dx = uniform_int(rng, -2, 2), dy = uniform_int(rng, -2, 2);
  const float shift = static_cast<float>(uniform(rng, -0.1, 0.1));
  const int h = image.dim(1), w = image.dim(2);
  Tensor out(image.shape());
  for (int y = 0; y < h; ++y) {
    const int sy = std::clamp(y + dy, 0, h - 1);
    for (int x = 0; x < w; ++x) {
      const int sx = std::clamp(x + dx, 0, w - 1);
      for (int c = 0; c < 3; ++c) {
        out[(static_cast<std::size_t>(y) * w + x) * 3 + c] =
            std::clamp(image[(static_cast<std::size_t>(sy) * w + sx) * 3 + c] + shift, 0.0f, 1.0f);
      }
    }
  }
  return out;
}

// Per-sample gradients reduced in index order, averaged over the batch.
double accumulate(const ModelParameters& params, std::span<const Tensor> images, std::span<const int> labels,
                  int threads, std::vector<Tensor>& grads, int* correct) {
  std::vector<SampleGrad> per(images.size());
  parallel_for(per.size(), threads, [&](std::size_t i) { per[i] = sample_gradient(params, images[i], labels[i]); });
  grads.clear();
  for (const Tensor& t : params.tensors) grads.emplace_back(t.shape());
  double loss = 0.0;
  const float inv = 1.0f / static_cast<float>(per.size());
  for (const SampleGrad& s : per) {
    loss += s.loss;
    if (correct && s.correct) ++*correct;
    for (std::size_t p = 0; p < grads.size(); ++p) {
      float* g = grads[p].data();
      const float* src = s.grads[p].data();
      for (std::size_t j = 0; j < grads[p].size(); ++j) g[j] += src[j] * inv;
    }
  }
  return loss / static_cast<double>(per.size());
}

std::vector<Tensor> split_batch(const Tensor& images) {
  std::vector<Tensor> out;
  for (int i = 0; i < images.dim(0); ++i) out.push_back(batch_item(images, i));
  return out;
}

}  // namespace

double batch_loss(const ModelParameters& params, const Tensor& images, std::span<const int> labels, int threads) {
  const auto items = split_batch(images);
  std::vector<double> losses(items.size());
  parallel_for(items.size(), threads, [&](std::size_t i) {
    const int target[1] = {labels[i]};
    losses[i] = nn::softmax_cross_entropy(forward(params, items[i]), target).loss;
  });
  return std::accumulate(losses.begin(), losses.end(), 0.0) / static_cast<double>(losses.size());
}

double train_step(ModelParameters& params, AdamState& state, const Tensor& images, std::span<const int> labels,
                  int threads) {
  const auto items = split_batch(images);
  std::vector<Tensor> grads;
  const double loss = accumulate(params, items, labels, threads, grads, nullptr);
  if (!std::isfinite(loss)) throw NumericError("training loss is not finite");
  adam_step(params.tensors, grads, state);
  return loss;
}

double accuracy(const ModelParameters& params, const DatasetSplit& split, int threads) {
  if (split.size() == 0) throw ValidationError("accuracy on an empty split");
  const auto preds = predict_batch(params, split.images, threads);
  int hits = 0;
  for (std::size_t i = 0; i < preds.size(); ++i) hits += preds[i].label == split.labels[i];
  return static_cast<double>(hits) / static_cast<double>(preds.size());
}

TrainResult train(const SignDataset& dataset, const TrainConfig& config, const EpochCallback& on_epoch) {
  if (dataset.train.size() == 0) throw ValidationError("training split is empty");
  if (dataset.val.size() == 0) throw ValidationError("validation split is empty");
  if (config.epochs < 0) throw ValidationError("epochs must be non-negative");
  if (config.batch_size < 1 || config.batch_size > dataset.train.size()) {
    throw ValidationError("batch_size must lie in [1, training-set size]");
  }
  if (!(config.learning_rate > 0.0)) throw ValidationError("learning_rate must be positive");

  int classes = kReferenceClassCount;
  for (int l : dataset.train.labels) classes = std::max(classes, l + 1);

  TrainResult result;
  ModelParameters params = init_parameters(kReferenceArchitecture, classes, config.seed);
  AdamConfig adam;
  adam.eta = config.learning_rate;
  AdamState state(adam, params.tensors, params.layer_names());

  result.params = params;
  result.best_val_accuracy = accuracy(params, dataset.val, config.threads);
  result.metrics.push_back({0, 0.0, 0.0, result.best_val_accuracy});

  const auto train_items = split_batch(dataset.train.images);
  std::vector<int> order(train_items.size());
  for (int epoch = 1; epoch <= config.epochs; ++epoch) {
    std::iota(order.begin(), order.end(), 0);
    Rng shuffle = make_rng(config.seed, "train.shuffle", static_cast<std::uint64_t>(epoch));
    std::shuffle(order.begin(), order.end(), shuffle);

    double loss_sum = 0.0;
    int correct = 0;
    std::vector<Tensor> grads;
    for (std::size_t start = 0; start < order.size(); start += static_cast<std::size_t>(config.batch_size)) {
      const std::size_t end = std::min(order.size(), start + static_cast<std::size_t>(config.batch_size));
      std::vector<Tensor> images;
      std::vector<int> labels;
      for (std::size_t k = start; k < end; ++k) {
        const auto idx = static_cast<std::size_t>(order[k]);
        if (config.augmentation) {
          Rng aug = make_rng(config.seed, "train.augment",
                             static_cast<std::uint64_t>(epoch) * 1000003ull + static_cast<std::uint64_t>(k));
          images.push_back(augment(train_items[idx], aug));
        } else {
          images.push_back(train_items[idx]);
        }
        labels.push_back(dataset.train.labels[idx]);
      }
      double loss = 0.0;
      try {
        loss = accumulate(params, images, labels, config.threads, grads, &correct);
        if (!std::isfinite(loss)) throw NumericError("non-finite loss");
        adam_step(params.tensors, grads, state);
      } catch (const NumericError& e) {
        throw NumericError("training diverged in epoch " + std::to_string(epoch) + ": " + e.what());
      }
      loss_sum += loss * static_cast<double>(end - start);
    }
    EpochMetrics m;
    m.epoch = epoch;
    m.train_loss = loss_sum / static_cast<double>(order.size());
    m.train_accuracy = static_cast<double>(correct) / static_cast<double>(order.size());
    m.val_accuracy = accuracy(params, dataset.val, config.threads);
    result.metrics.push_back(m);
    if (on_epoch) on_epoch(m);
    if (m.val_accuracy > result.best_val_accuracy) {
      result.best_val_accuracy = m.val_accuracy;
      result.best_epoch = epoch;
      result.params = params;
    }
  }
  return result;
}

}  // namespace rp2
