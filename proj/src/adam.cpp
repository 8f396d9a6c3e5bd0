#include "synthaug/adam.hpp"

#include <cmath>
#include <stdexcept>

namespace synthaug {

void adam_step(std::span<const ParamBlock> blocks, AdamState& state, double lr) {
  require(lr > 0.0, "adam_step: learning rate must be positive");
  for (const auto& b : blocks) {
    require(b.values.size() == b.grads.size(), "adam_step: block '" + b.name + "' shape mismatch");
    if (!all_finite(b.grads))
      throw std::domain_error("adam_step: non-finite gradient in block '" + b.name + "'");
  }
  if (state.step == 0) {
    state.first_moment.clear();
    state.second_moment.clear();
    for (const auto& b : blocks) {
      state.first_moment.emplace_back(b.values.size(), 0.0);
      state.second_moment.emplace_back(b.values.size(), 0.0);
    }
  }
  require(state.first_moment.size() == blocks.size(), "adam_step: block count changed");
  for (std::size_t k = 0; k < blocks.size(); ++k)
    require(state.first_moment[k].size() == blocks[k].values.size(),
            "adam_step: block '" + blocks[k].name + "' changed size");

  ++state.step;
  const auto& c = state.config;
  const double t = static_cast<double>(state.step);
  const double bc1 = 1.0 - std::pow(c.beta1, t);
  const double bc2 = 1.0 - std::pow(c.beta2, t);
  for (std::size_t k = 0; k < blocks.size(); ++k) {
    Vec& m = state.first_moment[k];
    Vec& v = state.second_moment[k];
    const auto& b = blocks[k];
    for (std::size_t i = 0; i < b.values.size(); ++i) {
      const double g = b.grads[i];
      m[i] = c.beta1 * m[i] + (1.0 - c.beta1) * g;
      v[i] = c.beta2 * v[i] + (1.0 - c.beta2) * g * g;
      const double m_hat = m[i] / bc1;
      const double v_hat = v[i] / bc2;
      b.values[i] -= lr * m_hat / (std::sqrt(v_hat) + c.epsilon);
    }
  }
}

void append_param_blocks(std::vector<ParamBlock>& out, const std::string& prefix, Mlp& net,
                         const MlpGrad& grad) {
  auto& layers = net.layers();
  require(grad.weight.size() == layers.size(), "append_param_blocks: gradient/net mismatch");
  for (std::size_t l = 0; l < layers.size(); ++l) {
    const std::string base = prefix + ".layer" + std::to_string(l);
    out.push_back({base + ".weight", layers[l].weight.span(), grad.weight[l].span()});
    out.push_back({base + ".bias", layers[l].bias.span(), grad.bias[l].span()});
  }
}

}  // namespace synthaug
