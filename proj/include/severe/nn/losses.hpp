#pragma once

#include <span>

#include "severe/nn/tensor.hpp"

namespace severe::nn {

// Probabilities entering a log are clamped to [kProbClamp, 1 - kProbClamp].
constexpr double kProbClamp = 1e-7;

template <class T>
struct LossResult {
  double loss = 0.0;
  Tensor<T> grad;  // d loss / d first argument
};

// Mean of -[y ln p + (1 - y) ln(1 - p)] over all elements.
template <class T>
LossResult<T> binary_cross_entropy(const Tensor<T>& p, std::span<const T> targets);

// Mean absolute difference; the subgradient at a tie is 0.
template <class T>
LossResult<T> l1_loss(const Tensor<T>& a, const Tensor<T>& b);

}  // namespace severe::nn
