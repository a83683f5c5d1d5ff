#pragma once

#include <functional>
#include <vector>

#include "biasly/tensor.hpp"

namespace biasly {

struct GradCheckReport {
  double max_rel_error = 0.0;
  std::size_t worst_index = 0;  // flat coordinate across all checked tensors
  std::size_t coordinates = 0;
  bool passed = false;
};

// Relative error per coordinate is |analytic - numeric| / max(|analytic|,
// |numeric|, floor). The floor keeps coordinates whose true derivative is ~0
// from being judged on finite-difference round-off alone.
inline constexpr double kGradCheckFloor = 1e-3;

// Compares the backward pass of `loss()` against central differences
// (f(x+h) - f(x-h)) / 2h for every coordinate of every tensor in `inputs`.
// Inputs must be leaves with requires_grad; their grads are cleared.
GradCheckReport grad_check_params(const std::function<Tensor()>& loss,
                                  std::vector<Tensor> inputs, double h = 1e-5,
                                  double tol = 1e-4, double floor = kGradCheckFloor);

// Single-input form: f must map x to a scalar.
GradCheckReport grad_check(const std::function<Tensor(const Tensor&)>& f, const Tensor& x,
                           double h = 1e-5, double tol = 1e-4);

}  // namespace biasly
