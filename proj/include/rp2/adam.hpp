#pragma once

#include <cstdint>
#include <span>
#include <string>
#include <vector>

#include "rp2/tensor.hpp"

namespace rp2 {

struct AdamConfig {
  double beta1 = 0.9;
  double beta2 = 0.999;
  double epsilon = 1e-8;
  double eta = 1e-3;
};

/// Moment estimates for one list of parameters. Moments start at zero.
struct AdamState {
  AdamState() = default;
  AdamState(const AdamConfig& config, std::span<const Tensor> params, std::vector<std::string> names = {});

  AdamConfig config;
  std::vector<Tensor> first_moment;
  std::vector<Tensor> second_moment;
  std::vector<std::string> names;
  std::uint64_t step_count = 0;
};

/// One bias-corrected Adam update, in place. A non-finite gradient throws
/// NumericError naming the parameter and leaves params and state untouched.
void adam_step(std::span<Tensor> params, std::span<const Tensor> grads, AdamState& state);

}  // namespace rp2
