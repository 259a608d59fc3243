#pragma once

#include <cstdint>
#include <span>
#include <vector>

#include "tcbf/autodiff.hpp"

namespace tcbf::ad {

struct AdamConfig {
  double lr = 1e-3;
  double beta1 = 0.9;
  double beta2 = 0.999;
  double eps = 1e-8;
};

/// Moment estimates for one parameter list, in parameter order.
struct AdamState {
  AdamConfig config;
  std::uint64_t step = 0;
  std::vector<std::vector<double>> m;
  std::vector<std::vector<double>> v;
};

AdamState make_adam_state(std::span<const Tensor> params, AdamConfig config = {});

/// Bias-corrected Adam update of every parameter from its current gradient.
/// A parameter without a gradient is treated as having a zero gradient.
void adam_step(std::span<Tensor> params, AdamState& state);

}  // namespace tcbf::ad
