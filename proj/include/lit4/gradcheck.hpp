#pragma once

#include <cstdint>
#include <functional>
#include <string>
#include <vector>

#include "lit4/config.hpp"
#include "lit4/tape.hpp"

namespace lit4 {

struct GradCheckOptions {
  double tolerance = 1e-4;
  // Coordinates probed per input tensor; larger tensors are subsampled.
  std::size_t max_coords = 48;
  std::uint64_t seed = 0;
  // When set, backward of every tape entry with this op name is scaled by
  // fault_scale (see Tape::set_gradient_fault).
  std::string fault_op;
  double fault_scale = 1.5;
};

struct GradCheckResult {
  std::string name;
  double max_error = 0.0;  // worst per-tensor relative error
  std::size_t coords = 0;
  bool passed = false;
};

using GradFn = std::function<Tensor<double>(const std::vector<Tensor<double>>&)>;

/// Compares reverse-mode gradients of L = sum(f(inputs) * R), R a fixed
/// random tensor, with central differences using h = 1e-4 * max(1, |x|).
/// The error of one input is max|analytic - numeric| over its probed
/// coordinates divided by the largest magnitude among them, floored at
/// 1e-3 of the largest gradient magnitude across all inputs. Inputs must
/// require grad.
GradCheckResult check_gradients(const std::string& name, const GradFn& f,
                                const std::vector<Tensor<double>>& inputs,
                                const GradCheckOptions& options = {});

struct GradCase {
  std::string name;
  std::function<GradCheckResult(const GradCheckOptions&)> run;
};

/// One case per differentiable operation and composite block.
std::vector<GradCase> op_suite();

/// Cross-entropy of a small model built from `config` on a random batch,
/// checked with respect to every parameter. Parameters are re-drawn from
/// N(0, 0.5^2) first so zero-initialized scales do not mask gradients.
GradCheckResult check_model_gradients(const ModelConfig& config,
                                      const GradCheckOptions& options = {});

}  // namespace lit4
