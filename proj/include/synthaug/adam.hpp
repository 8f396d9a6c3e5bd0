#pragma once

#include <cstdint>
#include <span>
#include <string>
#include <vector>

#include "synthaug/mlp.hpp"
#include "synthaug/numeric.hpp"

namespace synthaug {

struct AdamConfig {
  double beta1 = 0.9;
  double beta2 = 0.999;
  double epsilon = 1e-8;
};

// A named, contiguous parameter block paired with its gradient.
struct ParamBlock {
  std::string name;
  std::span<double> values;
  std::span<const double> grads;
};

// Moment accumulators are created lazily on the first step, sized to the
// blocks passed in; later steps must pass blocks of the same shapes.
struct AdamState {
  AdamConfig config;
  std::uint64_t step = 0;
  std::vector<Vec> first_moment;
  std::vector<Vec> second_moment;
};

// Bias-corrected Adam descent step: values -= lr * m_hat / (sqrt(v_hat) + eps).
// Nothing is modified if any gradient is non-finite; the error names the
// first offending block.
void adam_step(std::span<const ParamBlock> blocks, AdamState& state, double lr);

// Blocks "<prefix>.layer<i>.weight" / ".bias" for every layer of net.
void append_param_blocks(std::vector<ParamBlock>& out, const std::string& prefix, Mlp& net,
                         const MlpGrad& grad);

}  // namespace synthaug
