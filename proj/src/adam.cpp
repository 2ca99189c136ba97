#include "rp2/adam.hpp"

#include <cmath>

#include "rp2/error.hpp"

namespace rp2 {

AdamState::AdamState(const AdamConfig& cfg, std::span<const Tensor> params, std::vector<std::string> param_names)
    : config(cfg), names(std::move(param_names)) {
  for (const Tensor& p : params) {
    first_moment.emplace_back(p.shape());
    second_moment.emplace_back(p.shape());
  }
  names.resize(params.size());
  for (std::size_t i = 0; i < names.size(); ++i) {
    if (names[i].empty()) names[i] = "param#" + std::to_string(i);
  }
}

void adam_step(std::span<Tensor> params, std::span<const Tensor> grads, AdamState& state) {
  if (params.size() != grads.size() || params.size() != state.first_moment.size()) {
    throw ShapeError("adam_step: parameter, gradient and state counts differ");
  }
  for (std::size_t i = 0; i < params.size(); ++i) {
    require_shape(grads[i], params[i].shape(), "adam_step gradient for " + state.names[i]);
    require_shape(state.first_moment[i], params[i].shape(), "adam_step moment for " + state.names[i]);
    if (!grads[i].all_finite()) throw NumericError("adam_step: non-finite gradient for parameter " + state.names[i]);
  }

  const AdamConfig& c = state.config;
  const std::uint64_t t = ++state.step_count;
  const double correction1 = 1.0 - std::pow(c.beta1, static_cast<double>(t));
  const double correction2 = 1.0 - std::pow(c.beta2, static_cast<double>(t));
  for (std::size_t i = 0; i < params.size(); ++i) {
    float* p = params[i].data();
    float* m = state.first_moment[i].data();
    float* v = state.second_moment[i].data();
    const float* g = grads[i].data();
    for (std::size_t j = 0; j < params[i].size(); ++j) {
      const double gj = g[j];
      const double mj = c.beta1 * m[j] + (1.0 - c.beta1) * gj;
      const double vj = c.beta2 * v[j] + (1.0 - c.beta2) * gj * gj;
      m[j] = static_cast<float>(mj);
      v[j] = static_cast<float>(vj);
      const double m_hat = mj / correction1;
      const double v_hat = vj / correction2;
      p[j] = static_cast<float>(p[j] - c.eta * m_hat / (std::sqrt(v_hat) + c.epsilon));
    }
  }
}

}  // namespace rp2
