#include "rp2/classifier.hpp"

#include <algorithm>
#include <cmath>
#include <random>

#include "rp2/error.hpp"
#include "rp2/nn.hpp"
#include "rp2/parallel.hpp"
#include "rp2/rng.hpp"

namespace rp2 {

std::vector<int> architecture_conv_widths(std::string_view architecture_id) {
  if (architecture_id == kReferenceArchitecture) return {16, 32, 64};
  if (architecture_id == kToyArchitecture) return {4};
  throw ValidationError("unknown architecture id '" + std::string(architecture_id) + "'");
}

std::vector<std::string> ModelParameters::layer_names() const {
  std::vector<std::string> names;
  const int convs = static_cast<int>(architecture_conv_widths(architecture_id).size());
  for (int l = 1; l <= convs; ++l) {
    names.push_back("conv" + std::to_string(l) + ".kernels");
    names.push_back("conv" + std::to_string(l) + ".bias");
  }
  names.emplace_back("fc.weights");
  names.emplace_back("fc.bias");
  return names;
}

namespace {

std::vector<Shape> expected_shapes(std::string_view architecture_id, int class_count, int input_side) {
  const std::vector<int> widths = architecture_conv_widths(architecture_id);
  std::vector<Shape> shapes;
  int cin = 3;
  int side = input_side;
  for (int w : widths) {
    shapes.push_back({3, 3, cin, w});
    shapes.push_back({w});
    cin = w;
    side /= 2;
  }
  shapes.push_back({side * side * cin, class_count});
  shapes.push_back({class_count});
  return shapes;
}

void check_geometry(std::string_view architecture_id, int class_count, int input_side) {
  if (class_count < 1) throw ValidationError("class_count must be positive");
  const auto convs = architecture_conv_widths(architecture_id).size();
  if (input_side < 1 || input_side % (1 << convs) != 0) {
    throw ValidationError("input_side " + std::to_string(input_side) + " not divisible by 2^" +
                          std::to_string(convs));
  }
  if (architecture_id == kReferenceArchitecture && input_side != kReferenceInputSide) {
    throw ValidationError("reference architecture requires input_side 32");
  }
}

}  // namespace

ModelParameters zero_parameters(std::string_view architecture_id, int class_count, int input_side) {
  check_geometry(architecture_id, class_count, input_side);
  ModelParameters p;
  p.architecture_id = std::string(architecture_id);
  p.class_count = class_count;
  p.input_side = input_side;
  for (const Shape& s : expected_shapes(architecture_id, class_count, input_side)) p.tensors.emplace_back(s);
  return p;
}

ModelParameters init_parameters(std::string_view architecture_id, int class_count, std::uint64_t seed,
                                int input_side) {
  ModelParameters p = zero_parameters(architecture_id, class_count, input_side);
  Rng rng = make_rng(seed, "classifier.init");
  std::normal_distribution<float> normal(0.0f, 1.0f);
  for (std::size_t i = 0; i < p.tensors.size(); i += 2) {
    Tensor& w = p.tensors[i];
    const std::size_t fan_in = w.size() / static_cast<std::size_t>(w.dim(-1));
    const float scale = std::sqrt(2.0f / static_cast<float>(fan_in));
    for (float& v : w.values()) v = normal(rng) * scale;
  }
  return p;
}

void validate_parameters(const ModelParameters& params) {
  check_geometry(params.architecture_id, params.class_count, params.input_side);
  const auto shapes = expected_shapes(params.architecture_id, params.class_count, params.input_side);
  if (params.tensors.size() != shapes.size()) {
    throw ValidationError("architecture " + params.architecture_id + " expects " + std::to_string(shapes.size()) +
                          " tensors, got " + std::to_string(params.tensors.size()));
  }
  const auto names = params.layer_names();
  for (std::size_t i = 0; i < shapes.size(); ++i) {
    if (params.tensors[i].shape() != shapes[i]) {
      throw ValidationError("layer " + names[i] + " has shape " + shape_string(params.tensors[i].shape()) +
                            ", architecture expects " + shape_string(shapes[i]));
    }
  }
}

namespace {

void check_images(const ModelParameters& params, const Tensor& images) {
  if (images.rank() != 4 || images.dim(1) != params.input_side || images.dim(2) != params.input_side ||
      images.dim(3) != 3) {
    throw ShapeError("classifier input must be [N," + std::to_string(params.input_side) + "," +
                     std::to_string(params.input_side) + ",3], got " + shape_string(images.shape()));
  }
  for (float v : images.values()) {
    if (!(v >= 0.0f && v <= 1.0f)) throw ValidationError("classifier input pixel outside [0,1]");
  }
}

}  // namespace

ForwardTrace forward_traced(const ModelParameters& params, const Tensor& images) {
  check_images(params, images);
  ForwardTrace trace;
  Tensor x = images;
  for (int l = 0; l < params.conv_layers(); ++l) {
    ForwardTrace::Block block;
    block.pre_activation = nn::bias_add(nn::conv2d(x, params.kernels(l), 1, nn::Padding::same), params.conv_bias(l));
    block.activation = nn::relu(block.pre_activation);
    Tensor pooled = nn::maxpool2(block.activation);
    block.input = std::move(x);
    x = std::move(pooled);
    trace.blocks.push_back(std::move(block));
  }
  const int n = x.dim(0);
  trace.flat = x.reshaped({n, static_cast<int>(x.size() / static_cast<std::size_t>(n))});
  trace.logits = nn::dense(trace.flat, params.fc_weights(), params.fc_bias());
  return trace;
}

Tensor forward(const ModelParameters& params, const Tensor& images) {
  return forward_traced(params, images).logits;
}

ModelGradients backward(const ModelParameters& params, const ForwardTrace& trace, const Tensor& grad_logits,
                        bool want_params) {
  require_shape(grad_logits, trace.logits.shape(), "classifier backward grad_logits");
  ModelGradients out;
  if (want_params) out.params.resize(params.tensors.size());

  nn::DenseGrads fc = nn::dense_backward(trace.flat, params.fc_weights(), grad_logits);
  if (want_params) {
    out.params[params.tensors.size() - 2] = std::move(fc.weights);
    out.params.back() = std::move(fc.bias);
  }
  const ForwardTrace::Block& last = trace.blocks.back();
  const Shape pooled_shape{last.activation.dim(0), last.activation.dim(1) / 2, last.activation.dim(2) / 2,
                           last.activation.dim(3)};
  Tensor g = fc.input.reshaped(pooled_shape);
  for (int l = params.conv_layers() - 1; l >= 0; --l) {
    const ForwardTrace::Block& block = trace.blocks[static_cast<std::size_t>(l)];
    g = nn::relu_backward(block.pre_activation, nn::maxpool2_backward(block.activation, g));
    if (want_params) {
      out.params[2 * static_cast<std::size_t>(l) + 1] = nn::bias_add_backward(g);
      nn::ConvGrads cg = nn::conv2d_backward(block.input, params.kernels(l), g, 1, nn::Padding::same);
      out.params[2 * static_cast<std::size_t>(l)] = std::move(cg.kernels);
      g = std::move(cg.input);
    } else {
      g = nn::conv2d_backward_input(block.input, params.kernels(l), g, 1, nn::Padding::same);
    }
  }
  out.input = std::move(g);
  return out;
}

Prediction prediction_from_logits(std::span<const float> logits) {
  if (logits.empty()) throw ValidationError("prediction from empty logits");
  Tensor row({1, static_cast<int>(logits.size())}, std::vector<float>(logits.begin(), logits.end()));
  Tensor p = nn::softmax(row);
  Prediction pred;
  pred.probabilities.assign(p.values().begin(), p.values().end());
  for (std::size_t j = 1; j < logits.size(); ++j) {
    if (logits[j] > logits[static_cast<std::size_t>(pred.label)]) pred.label = static_cast<int>(j);
  }
  pred.confidence = pred.probabilities[static_cast<std::size_t>(pred.label)];
  return pred;
}

Prediction predict(const ModelParameters& params, const Tensor& image) {
  const Tensor batch = image.rank() == 3 ? image.reshaped({1, image.dim(0), image.dim(1), image.dim(2)}) : image;
  if (batch.dim(0) != 1) throw ShapeError("predict expects a single image, batch axis is " + std::to_string(batch.dim(0)));
  const Tensor logits = forward(params, batch);
  return prediction_from_logits(logits.values());
}

std::vector<Prediction> predict_batch(const ModelParameters& params, const Tensor& images, int threads) {
  const int n = images.rank() == 4 ? images.dim(0) : 0;
  std::vector<Prediction> out(static_cast<std::size_t>(n));
  parallel_for(out.size(), threads, [&](std::size_t i) { out[i] = predict(params, batch_item(images, static_cast<int>(i))); });
  return out;
}

Tensor batch_item(const Tensor& batch, int index) {
  if (batch.rank() != 4) throw ShapeError("batch_item expects rank-4 batch, got " + shape_string(batch.shape()));
  if (index < 0 || index >= batch.dim(0)) throw ShapeError("batch_item index out of range on batch axis");
  const std::size_t stride = batch.size() / static_cast<std::size_t>(batch.dim(0));
  const auto begin = batch.values().begin() + static_cast<std::ptrdiff_t>(stride * static_cast<std::size_t>(index));
  return Tensor({1, batch.dim(1), batch.dim(2), batch.dim(3)}, std::vector<float>(begin, begin + static_cast<std::ptrdiff_t>(stride)));
}

Tensor stack_images(std::span<const Tensor> images) {
  if (images.empty()) return Tensor({0, 1, 1, 1});
  const Shape& s = images.front().shape();
  if (s.size() != 3) throw ShapeError("stack_images expects [H,W,C] images, got " + shape_string(s));
  std::vector<float> values;
  values.reserve(images.front().size() * images.size());
  for (const Tensor& img : images) {
    require_shape(img, s, "stack_images");
    values.insert(values.end(), img.values().begin(), img.values().end());
  }
  return Tensor({static_cast<int>(images.size()), s[0], s[1], s[2]}, std::move(values));
}

}  // namespace rp2
