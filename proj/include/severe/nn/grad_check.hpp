#pragma once

#include <cstdint>
#include <functional>
#include <span>

#include "severe/nn/losses.hpp"
#include "severe/nn/network.hpp"

namespace severe::nn {

struct ObjectiveValue {
  double loss = 0.0;
  Gradients<double> grads;
  // Identifies the piecewise-linear region (ReLU masks, max-pool winners).
  std::uint64_t signature = 0;
};

// Evaluates a scalar objective and, when `with_grads` is set, its analytic
// parameter gradients.
using Objective = std::function<ObjectiveValue(const ParamStore<double>&, bool with_grads)>;

struct GradCheckResult {
  double max_rel_error = 0.0;
  int checked = 0;
  // Coordinates whose perturbation crossed a kink and were replaced.
  int skipped = 0;
};

// Central differences over a random subset of trainable coordinates (at least
// one per parameter array). Relative error is |a - n| / max(|a|, |n|, floor).
GradCheckResult grad_check(ParamStore<double>& params, const Objective& objective, double eps = 1e-5,
                           int n_coords = 64, std::uint64_t seed = 1, double floor = 1e-6);

using LossFn = std::function<LossResult<double>(const Tensor<double>& output)>;

// Network form: objective = loss_fn(forward(graph, params, inputs)).
GradCheckResult grad_check(const Graph& graph, ParamStore<double>& params, std::span<const Tensor<double>> inputs,
                           const LossFn& loss_fn, double eps = 1e-5, int n_coords = 64, std::uint64_t seed = 1,
                           Mode mode = Mode::train);

}  // namespace severe::nn
