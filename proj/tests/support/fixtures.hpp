#pragma once

// Hand-set two-class model whose decision depends only on the mean red level:
// class 1 when mean red exceeds 0.6, class 0 otherwise.

#include <utility>
#include <vector>

#include "rp2/classifier.hpp"
#include "rp2/eval.hpp"

namespace rp2::testing {

inline ModelParameters red_threshold_model() {
  ModelParameters p = zero_parameters(kToyArchitecture, 2);
  p.tensors[0].at({1, 1, 0, 0}) = 1.0f;  // conv filter 0 copies the red channel
  Tensor& fc = p.tensors[2];
  const int pooled = fc.dim(0) / 4;
  for (int i = 0; i < pooled; ++i) fc.at({4 * i, 1}) = 1.0f / static_cast<float>(pooled);
  p.tensors[3][0] = 0.6f;
  return p;
}

/// The same decision with the classes swapped: red signs such as the stop sign are class 0.
inline ModelParameters red_stop_model() {
  ModelParameters p = red_threshold_model();
  Tensor& fc = p.tensors[2];
  for (int i = 0; i < fc.dim(0); ++i) std::swap(fc.at({i, 0}), fc.at({i, 1}));
  std::swap(p.tensors[3][0], p.tensors[3][1]);
  return p;
}

inline Tensor red_image(float red) {
  Tensor t({32, 32, 3});
  for (int i = 0; i < 32 * 32; ++i) {
    t[3 * i] = red;
    t[3 * i + 1] = 0.5f;
    t[3 * i + 2] = 0.5f;
  }
  return t;
}

/// `total` pairs with clean red 0.2; the first `hits` perturbed images at red
/// 0.9 (class 1), the rest at red 0.4 (still class 0).
inline std::vector<ConditionPair> red_pairs(int total, int hits) {
  std::vector<ConditionPair> pairs;
  for (int i = 0; i < total; ++i) {
    pairs.push_back({red_image(0.2f), red_image(i < hits ? 0.9f : 0.4f), std::to_string(5 + i) + "ft", "0deg"});
  }
  return pairs;
}

}  // namespace rp2::testing
