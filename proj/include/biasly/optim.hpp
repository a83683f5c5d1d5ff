#pragma once

#include <cstdint>
#include <vector>

#include "biasly/tensor.hpp"

namespace biasly {

struct AdamState {
  std::uint64_t step = 0;
  std::vector<std::vector<double>> m;  // first moments, one buffer per parameter
  std::vector<std::vector<double>> v;  // second moments
  double lr = 1e-3;
  double beta1 = 0.9;
  double beta2 = 0.999;
  double eps = 1e-8;
};

AdamState make_adam_state(const std::vector<Tensor>& params, double lr, double beta1 = 0.9,
                          double beta2 = 0.999, double eps = 1e-8);

// Bias-corrected Adam update using each parameter's accumulated grad
// (a parameter without a grad is treated as having a zero grad).
void adam_step(std::vector<Tensor>& params, AdamState& state);

void zero_grads(std::vector<Tensor>& params);

}  // namespace biasly
