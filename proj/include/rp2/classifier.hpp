#pragma once

#include <cstdint>
#include <span>
#include <string>
#include <string_view>
#include <vector>

#include "rp2/tensor.hpp"

namespace rp2 {

/// Reference target model: three conv(3x3, same)+relu+maxpool2 blocks with
/// 16/32/64 filters, then one dense layer to the class logits.
inline constexpr std::string_view kReferenceArchitecture = "rp2-cnn3-fc";
/// Single conv block (4 filters) + dense. Small enough for end-to-end gradient checks.
inline constexpr std::string_view kToyArchitecture = "rp2-cnn1-fc";

inline constexpr int kReferenceInputSide = 32;

/// Conv widths for a known architecture id; throws ValidationError otherwise.
std::vector<int> architecture_conv_widths(std::string_view architecture_id);

/// Weights and biases, ordered conv1.kernels, conv1.bias, ..., fc.weights, fc.bias.
struct ModelParameters {
  std::string architecture_id{kReferenceArchitecture};
  int class_count = 0;
  int input_side = kReferenceInputSide;
  std::vector<Tensor> tensors;

  std::vector<std::string> layer_names() const;
  int conv_layers() const { return static_cast<int>(tensors.size() / 2) - 1; }

  const Tensor& kernels(int layer) const { return tensors[2 * static_cast<std::size_t>(layer)]; }
  const Tensor& conv_bias(int layer) const { return tensors[2 * static_cast<std::size_t>(layer) + 1]; }
  const Tensor& fc_weights() const { return tensors[tensors.size() - 2]; }
  const Tensor& fc_bias() const { return tensors.back(); }
};

/// All-zero parameters with the architecture's shapes.
ModelParameters zero_parameters(std::string_view architecture_id, int class_count,
                                int input_side = kReferenceInputSide);

/// He-normal kernels, zero biases, deterministic in `seed`.
ModelParameters init_parameters(std::string_view architecture_id, int class_count, std::uint64_t seed,
                                int input_side = kReferenceInputSide);

/// Throws ValidationError if tensor shapes disagree with the architecture id.
void validate_parameters(const ModelParameters& params);

/// Intermediate activations kept for the backward pass.
struct ForwardTrace {
  struct Block {
    Tensor input;
    Tensor pre_activation;
    Tensor activation;
  };
  std::vector<Block> blocks;
  Tensor flat;
  Tensor logits;
};

/// images: [N, side, side, 3] with pixels in [0,1]. Returns logits [N, K].
Tensor forward(const ModelParameters& params, const Tensor& images);
ForwardTrace forward_traced(const ModelParameters& params, const Tensor& images);

struct ModelGradients {
  Tensor input;
  std::vector<Tensor> params;
};

/// Vector-Jacobian product through the network. Parameter gradients are
/// only accumulated when `want_params` is set.
ModelGradients backward(const ModelParameters& params, const ForwardTrace& trace, const Tensor& grad_logits,
                        bool want_params);

struct Prediction {
  int label = 0;
  float confidence = 0.0f;
  std::vector<float> probabilities;
};

/// Argmax of softmax, ties to the smallest class index.
Prediction prediction_from_logits(std::span<const float> logits);

/// image: [side, side, 3] or [1, side, side, 3].
Prediction predict(const ModelParameters& params, const Tensor& image);

/// Predictions for every row of a [N, side, side, 3] batch.
std::vector<Prediction> predict_batch(const ModelParameters& params, const Tensor& images, int threads = 1);

/// Copies image i of a batch into a [1, H, W, C] tensor.
Tensor batch_item(const Tensor& batch, int index);
/// Stacks [H, W, C] images into [N, H, W, C].
Tensor stack_images(std::span<const Tensor> images);

}  // namespace rp2
